"""View evaluation, delta rules, hierarchy validation, and plan order."""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from vmsim import (
    SOURCE,
    WAREHOUSE,
    AccessCounter,
    Attr,
    CatalogError,
    Comparison,
    DeltaRelation,
    IntegrityError,
    Predicate,
    Relation,
    Schema,
    ViewDef,
    ViewHierarchy,
    affected_order,
    delta_insert,
    evaluate,
    evaluate_hierarchy,
)
from vmsim.views import delta_round

from tests.conftest import int_schema


def two_table_view():
    r1 = Schema("r1", (("a", "int"), ("b", "int")), 8)
    r2 = Schema("r2", (("b", "int"), ("c", "int")), 8)
    view = ViewDef("V", ("r1", "r2"), ("a", "c"),
                   join_conds=Predicate((Comparison("r1.b", "=", Attr("r2.b")),)),
                   tuple_size_bytes=8)
    return r1, r2, view


class TestEvaluate:
    def test_identity_single_operand_view(self):
        schema = int_schema("r", "a", "b")
        source = Relation(schema, [(1, 2), (3, 4)])
        view = ViewDef("copy", ("r",), ("a", "b"))
        out = evaluate(view, {"r": source}, WAREHOUSE, AccessCounter())
        assert out == source

    def test_hand_worked_join(self):
        r1, r2, view = two_table_view()
        catalog = {"r1": Relation(r1, [(1, 2)]), "r2": Relation(r2, [(2, 3)])}
        out = evaluate(view, catalog, WAREHOUSE, AccessCounter())
        assert out.contents == {(1, 3): 1}
        assert out.schema.attr_names == ("a", "c")
        assert out.schema.tuple_size_bytes == 8

    def test_charge_is_join_prefix_sum_only(self):
        # Selection and projection ride the join stream; only the join scans.
        schemas = [int_schema(f"r{i}", f"x{i}") for i in range(3)]
        catalog = {s.name: Relation(s, [(v,) for v in range(4)]) for s in schemas}
        view = ViewDef("V", ("r0", "r1", "r2"), ("x0",),
                       selection=Predicate((Comparison("x1", ">=", 0),)))
        counter = AccessCounter()
        evaluate(view, catalog, WAREHOUSE, counter)
        assert counter[WAREHOUSE] == 4 + 16 + 64

    def test_unresolved_operand(self):
        _, _, view = two_table_view()
        with pytest.raises(CatalogError):
            evaluate(view, {}, WAREHOUSE, AccessCounter())


class TestDeltaInsert:
    def test_empty_delta_gives_empty(self):
        r1, r2, view = two_table_view()
        out = delta_insert(view, "r2", DeltaRelation(r2),
                           {"r1": Relation(r1, [(1, 2)])}, WAREHOUSE, AccessCounter())
        assert out.is_empty

    def test_hand_worked_delta(self):
        r1, r2, view = two_table_view()
        out = delta_insert(view, "r2", DeltaRelation(r2, [(2, 3)]),
                           {"r1": Relation(r1, [(1, 2)])}, WAREHOUSE, AccessCounter())
        assert out.contents == {(1, 3): 1}

    def test_non_matching_insert_gives_empty(self):
        r1, r2, view = two_table_view()
        out = delta_insert(view, "r2", DeltaRelation(r2, [(99, 3)]),
                           {"r1": Relation(r1, [(1, 2)])}, WAREHOUSE, AccessCounter())
        assert out.is_empty

    def test_missing_sibling_is_catalog_error(self):
        r1, r2, view = two_table_view()
        with pytest.raises(CatalogError):
            delta_insert(view, "r2", DeltaRelation(r2, [(2, 3)]), {},
                         WAREHOUSE, AccessCounter())

    def test_changed_operand_must_belong_to_view(self):
        r1, r2, view = two_table_view()
        with pytest.raises(CatalogError):
            delta_insert(view, "zz", DeltaRelation(r2, [(2, 3)]),
                         {"r1": Relation(r1, [])}, WAREHOUSE, AccessCounter())

    def test_deletions_rejected(self):
        r1, r2, view = two_table_view()
        with pytest.raises(IntegrityError):
            delta_insert(view, "r2", DeltaRelation(r2, {(2, 3): -1}),
                         {"r1": Relation(r1, [(1, 2)])}, WAREHOUSE, AccessCounter())

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_incremental_equals_recompute(self, data):
        values = st.integers(min_value=0, max_value=3)
        r1, r2, view = two_table_view()
        before_rows = data.draw(st.lists(st.tuples(values, values), max_size=8))
        sibling_rows = data.draw(st.lists(st.tuples(values, values), max_size=8))
        delta_rows = data.draw(st.lists(st.tuples(values, values),
                                        min_size=1, max_size=4))
        silent = AccessCounter.disabled()
        catalog_before = {"r1": Relation(r1, sibling_rows),
                          "r2": Relation(r2, before_rows)}
        catalog_after = {"r1": catalog_before["r1"],
                         "r2": Relation(r2, before_rows + delta_rows)}
        full_before = evaluate(view, catalog_before, SOURCE, silent)
        full_after = evaluate(view, catalog_after, SOURCE, silent)
        delta = delta_insert(view, "r2", DeltaRelation(r2, delta_rows),
                             catalog_before, SOURCE, silent)
        merged = dict(full_before.contents)
        for row, mult in delta.contents.items():
            merged[row] = merged.get(row, 0) + mult
        assert merged == full_after.contents


class TestDeltaRound:
    def test_two_changed_operands_count_pairs_once(self):
        a = int_schema("a", "x")
        b = int_schema("b", "y")
        view = ViewDef("V", ("a", "b"), ("x", "y"))
        old = {"a": Relation(a, [(1,)]), "b": Relation(b, [(10,)])}
        new = {"a": Relation(a, [(1,), (2,)]), "b": Relation(b, [(10,), (20,)])}
        deltas = {"a": DeltaRelation(a, [(2,)]), "b": DeltaRelation(b, [(20,)])}
        out = delta_round(view, deltas, old, new, WAREHOUSE, AccessCounter())
        # delta = new x new - old x old
        assert out.contents == {(1, 20): 1, (2, 10): 1, (2, 20): 1}


class TestAffectedOrder:
    def test_multilevel_walkthrough(self, fig_hierarchy):
        assert affected_order(fig_hierarchy, "r33") == ["v24", "v12", "v1", "V"]

    def test_unaffected_base(self, fig_hierarchy):
        hierarchy = fig_hierarchy
        hierarchy.bases["spare"] = int_schema("spare", "spare_x")
        assert affected_order(hierarchy, "spare") == []

    def test_two_level_chain(self):
        base = int_schema("r", "x")
        hierarchy = ViewHierarchy(
            [base],
            [ViewDef("v", ("r",), ("x",)), ViewDef("V", ("v",), ("x",))],
            "V")
        assert affected_order(hierarchy, "r") == ["v", "V"]

    def test_unknown_base(self, fig_hierarchy):
        with pytest.raises(CatalogError):
            affected_order(fig_hierarchy, "nope")

    def test_plan_is_topological(self, fig_hierarchy):
        plan = affected_order(fig_hierarchy, "r33")
        seen = set()
        for name in plan:
            for op in fig_hierarchy.views[name].operands:
                if op in plan:
                    assert op in seen
            seen.add(name)

    def test_deterministic(self, fig_hierarchy):
        plans = {tuple(affected_order(fig_hierarchy, "r33")) for _ in range(5)}
        assert len(plans) == 1


class TestValidate:
    def test_multilevel_hierarchy_is_valid(self, fig_hierarchy):
        assert fig_hierarchy.validate() == []

    def test_self_loop_is_a_cycle(self):
        hierarchy = ViewHierarchy([], [ViewDef("V", ("V",), ("x",))], "V")
        diags = hierarchy.validate()
        assert diags and diags[0].code == "cycle"

    def test_unknown_projection_attribute(self):
        hierarchy = ViewHierarchy([int_schema("r", "x")],
                                  [ViewDef("V", ("r",), ("nope",))], "V")
        diags = hierarchy.validate()
        assert diags and diags[0].code == "schema" and diags[0].subject == "V"

    def test_unresolved_operand(self):
        hierarchy = ViewHierarchy([], [ViewDef("V", ("ghost",), ("x",))], "V")
        diags = hierarchy.validate()
        assert diags and diags[0].code == "unresolved-operand"

    def test_missing_primary(self):
        hierarchy = ViewHierarchy([int_schema("r", "x")],
                                  [ViewDef("v", ("r",), ("x",))], "V")
        diags = hierarchy.validate()
        assert diags and diags[0].code == "missing-primary"

    def test_mixed_base_and_view_operands(self):
        hierarchy = ViewHierarchy(
            [int_schema("r", "x"), int_schema("s", "y")],
            [ViewDef("v", ("r",), ("x",)), ViewDef("V", ("v", "s"), ("x", "y"))],
            "V")
        diags = hierarchy.validate()
        assert diags and diags[0].code == "mixed-operands"

    def test_base_view_name_collision(self):
        hierarchy = ViewHierarchy([int_schema("V", "x")],
                                  [ViewDef("V", ("V",), ("x",))], "V")
        diags = hierarchy.validate()
        assert diags and diags[0].code == "name-collision"


class TestEvaluateHierarchy:
    def test_materializes_everything_leaves_first(self, fig_hierarchy):
        initial = {name: Relation(schema, [(1,)])
                   for name, schema in fig_hierarchy.bases.items()}
        out = evaluate_hierarchy(fig_hierarchy, initial, SOURCE,
                                 AccessCounter.disabled())
        assert set(out) == set(fig_hierarchy.views)
        assert out["V"].cardinality == 1
        assert out["v24"].cardinality == 1
