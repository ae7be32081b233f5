"""Miniature order-processing workload and the built-in schedules.

Three base relations -- customer(custkey, nation), orders(orderkey,
custkey), lineitem(orderkey, qty) -- with referential containment: every
generated orders row points at an existing custkey and every lineitem row
at an existing orderkey. The benchmark view joins all three and keeps
(nation, qty); it stands in for a decision-support join at desk scale.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import ScenarioError
from .relational import Attr, Comparison, DeltaRelation, Predicate, Relation, Schema
from .simulation import LatencyModel, Scenario, SourceUpdate
from .strategies import MaintainerKind
from .views import ViewDef, ViewHierarchy

NATIONS = ("BRAZIL", "CANADA", "EGYPT", "FRANCE", "GERMANY",
           "INDIA", "JAPAN", "KENYA", "MEXICO", "PERU")

DEFAULT_MIX: Mapping[str, float] = {"customer": 0.2, "orders": 0.3, "lineitem": 0.5}


def workload_schemas() -> dict[str, Schema]:
    return {
        "customer": Schema("customer", (("custkey", "int"), ("nation", "str")), 16),
        "orders": Schema("orders", (("orderkey", "int"), ("custkey", "int")), 16),
        "lineitem": Schema("lineitem", (("orderkey", "int"), ("qty", "int")), 16),
    }


def benchmark_view() -> ViewDef:
    return ViewDef(
        "V",
        ("customer", "orders", "lineitem"),
        ("nation", "qty"),
        join_conds=Predicate((
            Comparison("customer.custkey", "=", Attr("orders.custkey")),
            Comparison("orders.orderkey", "=", Attr("lineitem.orderkey")),
        )),
        selection=Predicate((Comparison("qty", ">", 0),)),
        tuple_size_bytes=16,
    )


@dataclass(frozen=True)
class GeneratorSpec:
    """Deterministic workload parameters: rows per base relation, the
    append stream, and the target mix of those appends."""

    scale: int
    update_count: int = 0
    mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    seed: int = 0
    spacing: int = 10

    def __post_init__(self):
        if self.scale < 1:
            raise ScenarioError("scale must be at least 1")
        if self.update_count < 0:
            raise ScenarioError("update_count must be non-negative")
        if self.spacing < 1:
            raise ScenarioError("spacing must be at least 1")
        unknown = set(self.mix) - {"customer", "orders", "lineitem"}
        if unknown:
            raise ScenarioError(f"mix names unknown relations: {sorted(unknown)}")
        if not self.mix or any(w < 0 for w in self.mix.values()) or not sum(self.mix.values()):
            raise ScenarioError("mix weights must be non-negative and not all zero")


def generate(spec: GeneratorSpec) -> tuple[dict[str, Relation], tuple[SourceUpdate, ...]]:
    """Initial relation contents plus the append stream, reproducible
    from the seed byte for byte."""
    rng = random.Random(spec.seed)
    schemas = workload_schemas()

    custkeys = list(range(1, spec.scale + 1))
    orderkeys = list(range(1, spec.scale + 1))
    customer = [(key, rng.choice(NATIONS)) for key in custkeys]
    orders = [(key, rng.choice(custkeys)) for key in orderkeys]
    lineitem = [(rng.choice(orderkeys), rng.randint(1, 50)) for _ in range(spec.scale)]

    targets = sorted(spec.mix)
    weights = [spec.mix[t] for t in targets]
    updates = []
    next_custkey = spec.scale + 1
    next_orderkey = spec.scale + 1
    for i in range(spec.update_count):
        target = rng.choices(targets, weights=weights)[0]
        if target == "customer":
            row = (next_custkey, rng.choice(NATIONS))
            custkeys.append(next_custkey)
            next_custkey += 1
        elif target == "orders":
            row = (next_orderkey, rng.choice(custkeys))
            orderkeys.append(next_orderkey)
            next_orderkey += 1
        else:
            row = (rng.choice(orderkeys), rng.randint(1, 50))
        updates.append(SourceUpdate((i + 1) * spec.spacing, target,
                                    DeltaRelation(schemas[target], [row])))

    initial = {
        "customer": Relation(schemas["customer"], customer),
        "orders": Relation(schemas["orders"], orders),
        "lineitem": Relation(schemas["lineitem"], lineitem),
    }
    return initial, tuple(updates)


def benchmark_scenario(scale: int, update_count: int, seed: int,
                       kind: MaintainerKind = MaintainerKind.SMI,
                       spacing: int = 10,
                       latency: LatencyModel | None = None) -> Scenario:
    """The standard comparison workload over the three-relation join."""
    spec = GeneratorSpec(scale=scale, update_count=update_count, seed=seed,
                         spacing=spacing)
    initial, updates = generate(spec)
    hierarchy = ViewHierarchy(workload_schemas().values(), [benchmark_view()], "V")
    return Scenario(
        initial=initial,
        hierarchy=hierarchy,
        kind=kind,
        replicate=frozenset(initial),
        updates=updates,
        latency=latency or LatencyModel(default=1),
        seed=seed,
    )


def worst_case_schedule(scenario: Scenario) -> Scenario:
    """Maximal interleaving: every query reaches the source only after the
    last scheduled update has been applied, so every answer is delayed past
    every update and each new query finds all earlier ones unanswered."""
    horizon = max((u.time for u in scenario.updates), default=0)
    latency = replace(scenario.latency, query_default=horizon + 1000)
    return replace(scenario, latency=latency)


def anomaly_scenario(kind: MaintainerKind = MaintainerKind.NSMI_ECA) -> Scenario:
    """The fixed two-update interleaving that exhibits the maintenance
    anomaly: the source answers the first delta query only after it has
    applied a second update, so the uncompensated maintainer double-counts
    the joined row.

    Timeline: append (2,3) to r2 at t=1 (query lands at the source at t=4,
    its answer arrives at t=5); append (4,2) to r1 at t=3, noticed by the
    warehouse at t=4 while the first query is still unanswered.
    """
    r1 = Schema("r1", (("a", "int"), ("b", "int")), 8)
    r2 = Schema("r2", (("b", "int"), ("c", "int")), 8)
    view = ViewDef(
        "V", ("r1", "r2"), ("a", "c"),
        join_conds=Predicate((Comparison("r1.b", "=", Attr("r2.b")),)),
        tuple_size_bytes=8,
    )
    hierarchy = ViewHierarchy([r1, r2], [view], "V")
    return Scenario(
        initial={"r1": Relation(r1, [(1, 2)]), "r2": Relation(r2, [])},
        hierarchy=hierarchy,
        kind=kind,
        replicate=frozenset(),
        updates=(
            SourceUpdate(1, "r2", DeltaRelation(r2, [(2, 3)])),
            SourceUpdate(3, "r1", DeltaRelation(r1, [(4, 2)])),
        ),
        latency=LatencyModel(default=1, query=(2, 1)),
        seed=0,
    )
