"""Measured costs, the closed-form predictions they are checked against,
and the per-kind comparison table.

Two independent routes to the same numbers: :func:`measure` aggregates
what an instrumented run actually did, while :func:`analytic_rows` and
:func:`analytic_space` compute predictions from cardinalities alone.
Controlled single-update scenarios must agree exactly (integer equality);
that is the point of the harness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import AnalyticError
from .messages import DeltaQuery, FetchRelation
from .relational import SOURCE, WAREHOUSE, AccessCounter, Relation, join_access_charge
from .simulation import RunResult, Scenario, oracle_view, run
from .strategies import MaintainerKind, effective_replication
from .views import ViewHierarchy, affected_order, delta_insert, evaluate_hierarchy

CSV_COLUMNS = ("kind", "space_bytes", "rows_warehouse", "rows_source",
               "queries_sent", "compensations", "oracle_match")


@dataclass(frozen=True)
class CostReport:
    """Per-run measurements.

    ``nav_per_round`` counts the replicated base relations a maintenance
    round touched; it never exceeds the widest operand list in the
    hierarchy. ``space_bytes`` is the warehouse total at quiescence plus
    the COLLECT peak observed along the way.
    """

    kind: MaintainerKind
    space_bytes: int
    rows_warehouse: int
    rows_source: int
    queries_sent: int
    compensations: int
    messages: int
    nav_per_round: tuple[int, ...]
    collect_peak: int
    oracle_match: bool

    @property
    def rows_total(self) -> int:
        return self.rows_warehouse + self.rows_source

    def csv_row(self) -> str:
        return ",".join([
            self.kind.value,
            str(self.space_bytes),
            str(self.rows_warehouse),
            str(self.rows_source),
            str(self.queries_sent),
            str(self.compensations),
            "true" if self.oracle_match else "false",
        ])

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "space_bytes": self.space_bytes,
            "rows_warehouse": self.rows_warehouse,
            "rows_source": self.rows_source,
            "queries_sent": self.queries_sent,
            "compensations": self.compensations,
            "oracle_match": self.oracle_match,
        }


def measure(result: RunResult, oracle: Relation | None = None) -> CostReport:
    """Aggregate a completed run into a report."""
    counter = result.counter.snapshot()
    warehouse = result.warehouse
    ts_view = warehouse.current_view().schema.tuple_size_bytes
    space = warehouse.current_view().space_bytes
    space += sum(warehouse.store[name].space_bytes for name in sorted(warehouse.store))
    space += result.collect_peak * ts_view
    queries = [m for m in result.sent_messages if isinstance(m, (DeltaQuery, FetchRelation))]
    compensations = sum(m.compensation_count for m in queries if isinstance(m, DeltaQuery))
    if oracle is None:
        oracle = oracle_view(result.scenario)
    return CostReport(
        kind=result.scenario.kind,
        space_bytes=space,
        rows_warehouse=counter[WAREHOUSE],
        rows_source=counter[SOURCE],
        queries_sent=len(queries),
        compensations=compensations,
        messages=len(result.sent_messages),
        nav_per_round=result.nav_rounds,
        collect_peak=result.collect_peak,
        oracle_match=result.warehouse.current_view() == oracle,
    )


# --- analytic predictions ---

@dataclass(frozen=True)
class RowsPrediction:
    warehouse: int
    source: int

    @property
    def total(self) -> int:
        return self.warehouse + self.source


@dataclass(frozen=True)
class SingleUpdateProfile:
    """Cardinalities the closed forms are parameterized by, for one
    append of ``update_card`` rows to ``base``.

    ``cards`` holds pre-update cardinalities of every base relation and
    view; ``level_delta_cards`` the delta cardinality reaching each
    affected view, primary included.
    """

    hierarchy: ViewHierarchy
    base: str
    update_card: int
    cards: Mapping[str, int]
    level_delta_cards: Mapping[str, int]
    replicated: frozenset[str]
    collect_card: int | None = None


def single_update_profile(scenario: Scenario) -> SingleUpdateProfile:
    """Derive a profile from a one-update scenario by uncounted evaluation;
    multi-update schedules have no closed form and are rejected."""
    if len(scenario.updates) != 1:
        raise AnalyticError("the analytic model covers single-update schedules only")
    update = scenario.updates[0]
    silent = AccessCounter.disabled()
    hierarchy = scenario.hierarchy
    materialized = evaluate_hierarchy(hierarchy, scenario.initial, SOURCE, silent)
    cards = {name: rel.cardinality for name, rel in scenario.initial.items()}
    cards.update({name: rel.cardinality for name, rel in materialized.items()})

    level_deltas: dict[str, int] = {}
    pending = {update.base: update.delta}
    catalog = dict(scenario.initial)
    catalog.update(materialized)
    for name in affected_order(hierarchy, update.base):
        vdef = hierarchy.views[name]
        changed = [op for op in vdef.operands if op in pending]
        if len(changed) != 1:
            raise AnalyticError("the analytic model covers simple maintenance chains only")
        view_delta = delta_insert(vdef, changed[0], pending[changed[0]], catalog,
                                  SOURCE, silent)
        pending[name] = view_delta
        level_deltas[name] = view_delta.cardinality
    return SingleUpdateProfile(
        hierarchy=hierarchy,
        base=update.base,
        update_card=update.delta.cardinality,
        cards=cards,
        level_delta_cards=level_deltas,
        replicated=effective_replication(scenario.kind, scenario.replicate),
        collect_card=level_deltas.get(hierarchy.primary, 0),
    )


def _post_cards(profile: SingleUpdateProfile) -> dict[str, int]:
    post = dict(profile.cards)
    post[profile.base] = post[profile.base] + profile.update_card
    for name, extra in profile.level_delta_cards.items():
        post[name] = post[name] + extra
    return post


def analytic_rows(kind: MaintainerKind, profile: SingleUpdateProfile) -> RowsPrediction:
    """Row-access prediction for one append under each maintenance kind.

    Recomputation from replicas: propagate into the replica, Card(r) +
    Card(U), then re-join everything locally. Source recomputation: the
    full nested-loop total over source relations plus writing the shipped
    view back. Replica-backed incremental: per affected level, the
    delta-join scans plus integrating Card(delta) + Card(level). Query-
    based incremental, quiescent best case: the source evaluates the
    substituted join, and the flush rescans the view.
    """
    hierarchy = profile.hierarchy
    plan = affected_order(hierarchy, profile.base)
    post = _post_cards(profile)

    if kind == MaintainerKind.SMR:
        warehouse = 0
        if profile.base in profile.replicated:
            warehouse += profile.cards[profile.base] + profile.update_card
        if plan and profile.update_card:
            for name in plan:
                vdef = hierarchy.views[name]
                warehouse += join_access_charge([post[op] for op in vdef.operands])
        return RowsPrediction(warehouse=warehouse, source=0)

    if kind == MaintainerKind.NSMR:
        source = 0
        supporting = hierarchy.supporting_views(hierarchy.primary)
        for name in hierarchy.topological_views():
            if name not in supporting:
                continue
            vdef = hierarchy.views[name]
            source += join_access_charge([post[op] for op in vdef.operands])
        return RowsPrediction(warehouse=post[hierarchy.primary], source=source)

    if kind == MaintainerKind.SMI:
        warehouse = 0
        if profile.base in profile.replicated:
            warehouse += profile.cards[profile.base] + profile.update_card
        if plan and profile.update_card:
            pending = {profile.base: profile.update_card}
            for name in plan:
                vdef = hierarchy.views[name]
                changed = [op for op in vdef.operands if op in pending]
                if len(changed) != 1:
                    raise AnalyticError("the analytic model covers simple chains only")
                delta_card = pending[changed[0]]
                if not delta_card:
                    break
                warehouse += join_access_charge(
                    [delta_card if op == changed[0] else profile.cards[op]
                     for op in vdef.operands])
                level_delta = profile.level_delta_cards[name]
                if level_delta:
                    warehouse += level_delta + profile.cards[name]
                pending[name] = level_delta
        return RowsPrediction(warehouse=warehouse, source=0)

    if kind in (MaintainerKind.NSMI_ECA, MaintainerKind.NSMI_NAIVE):
        if not profile.update_card:
            return RowsPrediction(warehouse=0, source=0)
        vdef = hierarchy.views[hierarchy.primary]
        if profile.base not in vdef.operands:
            return RowsPrediction(warehouse=0, source=0)
        source = join_access_charge(
            [profile.update_card if op == profile.base else profile.cards[op]
             for op in vdef.operands])
        collect = profile.collect_card
        if collect is None:
            collect = profile.level_delta_cards.get(hierarchy.primary, 0)
        warehouse = profile.cards[hierarchy.primary] + collect
        return RowsPrediction(warehouse=warehouse, source=source)

    raise AnalyticError(f"no closed form for kind {kind!r}")


def analytic_space(kind: MaintainerKind, catalog: Mapping[str, Relation],
                   hierarchy: ViewHierarchy, replicated: frozenset[str] = frozenset(),
                   collect_peak: int = 0) -> int:
    """Warehouse bytes by kind: the view alone for the query-based kinds
    (plus the COLLECT peak for the compensating one), the view plus every
    replica and auxiliary materialization for the replicating kinds."""
    view = catalog[hierarchy.primary]
    total = view.space_bytes
    if kind in (MaintainerKind.NSMR, MaintainerKind.NSMI_NAIVE):
        return total
    if kind == MaintainerKind.NSMI_ECA:
        return total + collect_peak * view.schema.tuple_size_bytes
    if kind in (MaintainerKind.SMR, MaintainerKind.SMI, MaintainerKind.RUNTIME_SM):
        replicated = effective_replication(kind, replicated)
        for name in sorted(replicated):
            total += catalog[name].space_bytes
        if kind in (MaintainerKind.SMR, MaintainerKind.SMI):
            for name in sorted(hierarchy.views):
                if name != hierarchy.primary:
                    total += catalog[name].space_bytes
        return total
    raise AnalyticError(f"no space model for kind {kind!r}")


# --- comparison ---

@dataclass(frozen=True)
class ComparisonTable:
    reports: tuple[CostReport, ...]

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        lines.extend(report.csv_row() for report in self.reports)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        import json

        return json.dumps([report.as_dict() for report in self.reports], indent=2) + "\n"

    def by_kind(self, kind: MaintainerKind) -> CostReport:
        for report in self.reports:
            if report.kind == kind:
                return report
        raise KeyError(kind.value)


def compare(scenario: Scenario, kinds: Sequence[MaintainerKind]) -> ComparisonTable:
    """Run the same scenario once per kind; one report row per kind, in
    the order given."""
    oracle = oracle_view(scenario)
    reports = tuple(measure(run(scenario.with_kind(kind)), oracle=oracle)
                    for kind in kinds)
    return ComparisonTable(reports)
