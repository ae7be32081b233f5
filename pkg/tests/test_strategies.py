"""Per-strategy behavior: charges, messages, convergence, failure modes."""

from __future__ import annotations

import pytest

from vmsim import (
    AccessCounter,
    ConfigurationError,
    DeltaRelation,
    LatencyModel,
    MaintainerKind,
    ProtocolError,
    Relation,
    Scenario,
    Simulator,
    SourceUpdate,
    ViewDef,
    ViewHierarchy,
    evaluate_hierarchy,
    measure,
    oracle_view,
    run,
)
from vmsim.messages import FetchRelation, QueryAnswer
from vmsim.relational import SOURCE, WAREHOUSE

from tests.conftest import chain_scenario, int_schema, multilevel_scenario


def five_rows(start=1000):
    return tuple((start + i, start + i) for i in range(5))


class TestReplicaRecompute:
    def test_hand_worked_charge(self):
        # Propagate 5 rows into a 100-row replica, then re-join the
        # now-105-row replica with the 100-row sibling.
        scenario = chain_scenario(MaintainerKind.SMR, cards=(100, 100),
                                  update_base="r0", update_rows=five_rows())
        result = run(scenario)
        assert result.counter[WAREHOUSE] == 105 + (105 + 105 * 100)
        assert result.counter[SOURCE] == 0
        assert not result.sent_messages or all(
            m.kind == "notification" for m in result.sent_messages)

    def test_empty_update_scans_replica_only(self):
        scenario = chain_scenario(MaintainerKind.SMR, cards=(100, 100),
                                  update_base="r0", update_rows=())
        result = run(scenario)
        assert result.counter[WAREHOUSE] == 100
        assert result.final_view == oracle_view(scenario)

    def test_missing_replica_is_a_configuration_error(self):
        scenario = chain_scenario(MaintainerKind.SMR, cards=(5, 5),
                                  update_base="r0", replicate=())
        with pytest.raises(ConfigurationError):
            run(scenario)

    def test_converges_and_sends_nothing(self):
        scenario = chain_scenario(MaintainerKind.SMR, cards=(20, 10),
                                  update_base="r1", update_rows=((1, 2), (2, 1)))
        result = run(scenario)
        assert result.final_view == oracle_view(scenario)
        report = measure(result)
        assert report.queries_sent == 0 and report.rows_source == 0


class TestSourceRecompute:
    def test_one_fetch_per_base_per_notification(self):
        scenario = chain_scenario(MaintainerKind.NSMR, cards=(4, 4, 4),
                                  update_base="r1")
        result = run(scenario)
        fetches = [m for m in result.sent_messages if isinstance(m, FetchRelation)]
        assert len(fetches) == 3
        assert sorted(f.relation for f in fetches) == ["r0", "r1", "r2"]

    def test_quiescent_single_update_matches_oracle(self):
        scenario = chain_scenario(MaintainerKind.NSMR, cards=(8, 8),
                                  update_base="r0")
        result = run(scenario)
        assert result.final_view == oracle_view(scenario)
        assert measure(result).space_bytes == result.final_view.space_bytes

    def test_unknown_answer_is_a_protocol_error(self):
        scenario = chain_scenario(MaintainerKind.NSMR, cards=(2, 2))
        sim = Simulator(scenario)
        bogus = QueryAnswer(999, 0, relation=scenario.initial["r0"])
        with pytest.raises(ProtocolError):
            sim.warehouse.on_query_answer(bogus, 0)

    def test_mixed_intermediate_snapshot_then_oracle(self):
        # The first round's two fetch answers straddle later updates, so
        # the first rematerialization reflects a state no single update
        # prefix produces; the final view still matches the oracle.
        r0 = int_schema("r0", "x")
        r1 = int_schema("r1", "y")
        view = ViewDef("V", ("r0", "r1"), ("x", "y"), tuple_size_bytes=8)
        hierarchy = ViewHierarchy([r0, r1], [view], "V")
        scenario = Scenario(
            initial={"r0": Relation(r0, [(1,)]), "r1": Relation(r1, [(10,)])},
            hierarchy=hierarchy,
            kind=MaintainerKind.NSMR,
            replicate=frozenset(),
            updates=(
                SourceUpdate(1, "r0", DeltaRelation(r0, [(2,)])),
                SourceUpdate(5, "r1", DeltaRelation(r1, [(20,)])),
                SourceUpdate(6, "r0", DeltaRelation(r0, [(3,)])),
            ),
            latency=LatencyModel(default=1, query=(1, 5), answer_default=0),
            seed=0,
        )
        sim = Simulator(scenario)
        seen_cards = []
        while sim.step():
            seen_cards.append(sim.warehouse.current_view().cardinality)
        final = sim.warehouse.current_view()
        assert final == oracle_view(scenario)
        assert final.cardinality == 6
        # 2x2: first operand pre-third-update, second operand post-second.
        assert 4 in seen_cards

    def test_snapshots_dropped_at_quiescence(self):
        scenario = chain_scenario(MaintainerKind.NSMR, cards=(8, 8))
        result = run(scenario)
        assert result.warehouse.store == {}
        assert result.warehouse.space_usage() == result.final_view.space_bytes


class TestReplicaIncremental:
    def test_auxiliary_level_charge_isolated(self):
        # 200-row replica + 5-row update = 205; the delta join scans the
        # 10-row sibling prefix (10 + 10*5 = 60) and, with nothing joining,
        # the view itself is never touched.
        scenario = chain_scenario(MaintainerKind.SMI, cards=(10, 200),
                                  update_base="r1", update_rows=five_rows())
        result = run(scenario)
        delta_join_rows = 10 + 10 * 5
        assert result.counter[WAREHOUSE] == 205 + delta_join_rows
        assert result.counter[SOURCE] == 0

    def test_update_to_base_feeding_no_view_is_free(self):
        spare = int_schema("spare", "s")
        r = int_schema("r", "x")
        hierarchy = ViewHierarchy([r, spare], [ViewDef("V", ("r",), ("x",))], "V")
        scenario = Scenario(
            initial={"r": Relation(r, [(1,)]), "spare": Relation(spare, [(9,)])},
            hierarchy=hierarchy,
            kind=MaintainerKind.SMI,
            replicate=frozenset({"r"}),
            updates=(SourceUpdate(1, "spare", DeltaRelation(spare, [(8,)])),),
            latency=LatencyModel(default=1),
            seed=0,
        )
        result = run(scenario)
        assert result.counter.total == 0
        assert result.final_view == oracle_view(scenario)

    def test_multilevel_walkthrough_touches_the_plan_only(self):
        scenario = multilevel_scenario(MaintainerKind.SMI)
        before = evaluate_hierarchy(scenario.hierarchy, scenario.initial,
                                    WAREHOUSE, AccessCounter.disabled())
        result = run(scenario)
        assert result.final_view == oracle_view(scenario)
        changed = {name for name in scenario.hierarchy.views
                   if name != "V" and result.warehouse.store[name] != before[name]}
        assert changed == {"v24", "v12", "v1"}
        # One maintenance round touching the two replicated leaf bases.
        assert result.nav_rounds == (2,)

    def test_missing_sibling_is_a_configuration_error(self):
        scenario = chain_scenario(MaintainerKind.SMI, cards=(5, 5),
                                  update_base="r1", replicate=("r1",))
        with pytest.raises(ConfigurationError):
            run(scenario)

    def test_diamond_fan_out_converges(self):
        b = int_schema("b", "k")
        x = int_schema("x", "p")
        y = int_schema("y", "q")
        views = [
            ViewDef("left", ("b", "x"), ("k", "p")),
            ViewDef("right", ("b", "y"), ("k", "q")),
            ViewDef("V", ("left", "right"), ("left.k", "p", "q")),
        ]
        hierarchy = ViewHierarchy([b, x, y], views, "V")
        scenario = Scenario(
            initial={"b": Relation(b, [(1,)]), "x": Relation(x, [(5,)]),
                     "y": Relation(y, [(7,)])},
            hierarchy=hierarchy,
            kind=MaintainerKind.SMI,
            replicate=frozenset({"b", "x", "y"}),
            updates=(SourceUpdate(1, "b", DeltaRelation(b, [(2,)])),
                     SourceUpdate(3, "b", DeltaRelation(b, [(3,)]))),
            latency=LatencyModel(default=1),
            seed=0,
        )
        result = run(scenario)
        assert result.final_view == oracle_view(scenario)


class TestAdaptiveIncremental:
    def test_fully_replicated_matches_replica_incremental(self):
        adaptive = run(chain_scenario(MaintainerKind.RUNTIME_SM, cards=(12, 9),
                                      update_base="r1", update_rows=five_rows()))
        incremental = run(chain_scenario(MaintainerKind.SMI, cards=(12, 9),
                                         update_base="r1", update_rows=five_rows()))
        assert adaptive.final_view == incremental.final_view
        assert adaptive.counter.snapshot() == incremental.counter.snapshot()
        assert measure(adaptive).queries_sent == 0

    def test_one_missing_sibling_fetches_exactly_it(self):
        scenario = chain_scenario(MaintainerKind.RUNTIME_SM, cards=(6, 6),
                                  update_base="r0", replicate=("r0",))
        result = run(scenario)
        fetches = [m for m in result.sent_messages if isinstance(m, FetchRelation)]
        assert [f.relation for f in fetches] == ["r1"]
        assert result.final_view == oracle_view(scenario)

    def test_no_replicas_queries_every_round(self):
        scenario = chain_scenario(MaintainerKind.RUNTIME_SM, cards=(4, 4),
                                  update_base="r0", replicate=())
        result = run(scenario)
        fetches = [m for m in result.sent_messages if isinstance(m, FetchRelation)]
        assert len(fetches) == 1  # one update, one missing sibling
        assert result.final_view == oracle_view(scenario)

    def test_out_of_order_notifications_are_reordered(self):
        r0 = int_schema("r0", "x")
        r1 = int_schema("r1", "y")
        view = ViewDef("V", ("r0", "r1"), ("x", "y"), tuple_size_bytes=8)
        hierarchy = ViewHierarchy([r0, r1], [view], "V")
        scenario = Scenario(
            initial={"r0": Relation(r0, [(1,)]), "r1": Relation(r1, [(9,)])},
            hierarchy=hierarchy,
            kind=MaintainerKind.RUNTIME_SM,
            replicate=frozenset({"r0", "r1"}),
            updates=(SourceUpdate(1, "r0", DeltaRelation(r0, [(2,)])),
                     SourceUpdate(2, "r1", DeltaRelation(r1, [(8,)]))),
            # Second notification overtakes the first.
            latency=LatencyModel(default=1, notification=(10, 1)),
            seed=0,
        )
        result = run(scenario)
        assert result.final_view == oracle_view(scenario)


class TestUncompensatedIncremental:
    def test_quiescent_single_update_matches_oracle(self):
        scenario = chain_scenario(MaintainerKind.NSMI_NAIVE, cards=(6, 6),
                                  update_base="r1")
        result = run(scenario)
        assert result.final_view == oracle_view(scenario)

    def test_empty_update_sends_no_query(self):
        scenario = chain_scenario(MaintainerKind.NSMI_NAIVE, cards=(6, 6),
                                  update_base="r1", update_rows=())
        result = run(scenario)
        assert measure(result).queries_sent == 0

    def test_query_ids_are_unique_and_increasing(self):
        from dataclasses import replace

        scenario = chain_scenario(MaintainerKind.NSMI_NAIVE, cards=(3, 3),
                                  update_base="r1",
                                  update_rows=((0, 0),))
        extra = scenario.updates + (
            SourceUpdate(5, "r0", DeltaRelation(scenario.initial["r0"].schema,
                                                [(1, 1)])),)
        result = run(replace(scenario, updates=extra))
        ids = [m.query_id for m in result.sent_messages if hasattr(m, "query_id")
               and m.kind == "query"]
        assert ids == sorted(ids) and len(set(ids)) == len(ids)


class TestMaintainerSurface:
    def test_space_usage_tracks_store_and_view(self):
        scenario = chain_scenario(MaintainerKind.SMI, cards=(10, 10),
                                  update_base="r1")
        result = run(scenario)
        expected = result.final_view.space_bytes + sum(
            rel.space_bytes for rel in result.warehouse.store.values())
        assert result.warehouse.space_usage() == expected

    def test_query_kinds_keep_no_replicas(self):
        for kind in (MaintainerKind.NSMR, MaintainerKind.NSMI_ECA,
                     MaintainerKind.NSMI_NAIVE):
            scenario = chain_scenario(kind, cards=(4, 4), update_base="r1")
            result = run(scenario)
            assert result.warehouse.store == {}

    def test_pending_queries_empty_at_quiescence(self):
        for kind in MaintainerKind:
            scenario = chain_scenario(kind, cards=(4, 4), update_base="r1")
            result = run(scenario)
            assert result.warehouse.pending_queries() == ()
