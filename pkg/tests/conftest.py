"""Shared fixtures: the multi-level hierarchy walkthrough, randomized
scenarios, and brute-force oracles kept independent of the code under test."""

from __future__ import annotations

import random

import pytest

from vmsim import (
    Attr,
    Comparison,
    DeltaRelation,
    LatencyModel,
    MaintainerKind,
    Predicate,
    Relation,
    Scenario,
    Schema,
    SourceUpdate,
    ViewDef,
    ViewHierarchy,
)


def int_schema(name: str, *attrs: str, ts: int = 8) -> Schema:
    return Schema(name, tuple((a, "int") for a in attrs), ts)


def rows_relation(schema: Schema, rows) -> Relation:
    return Relation(schema, rows)


def enumerated_scan_count(cardinalities) -> int:
    """Independent oracle for the nested-loop charge: literally enumerate
    the left-deep loops and count each row touch."""
    count = 0
    prefixes = [()]
    for size in cardinalities:
        extended = []
        for prefix in prefixes:
            for i in range(size):
                count += 1
                extended.append(prefix + (i,))
        prefixes = extended
    return count


def multilevel_hierarchy() -> ViewHierarchy:
    """Three-level hierarchy with fan-out: v24 reads two bases, v12 reads
    two leaf views, v1 and the primary sit above. An update to r33 must
    walk v24, v12, v1, V in that order."""
    base_names = ["r11", "r13", "r14", "r23", "r31", "r33", "r34"]
    bases = [int_schema(n, n + "_x") for n in base_names]

    def leaf(name, *ops):
        return ViewDef(name, tuple(ops), tuple(o + "_x" for o in ops))

    views = [
        leaf("v11", "r11"),
        leaf("v13", "r13"),
        leaf("v14", "r14"),
        leaf("v23", "r23"),
        leaf("v3", "r31"),
        leaf("v24", "r33", "r34"),
        ViewDef("v12", ("v14", "v24"), ("r14_x", "r33_x", "r34_x")),
        ViewDef("v2", ("v23",), ("r23_x",)),
        ViewDef("v1", ("v11", "v12", "v13"),
                ("r11_x", "r14_x", "r33_x", "r34_x", "r13_x")),
        ViewDef("V", ("v1", "v2", "v3"),
                ("r11_x", "r14_x", "r33_x", "r34_x", "r13_x", "r23_x", "r31_x")),
    ]
    return ViewHierarchy(bases, views, "V")


def multilevel_scenario(kind=MaintainerKind.SMI, update_rows=((7,),)) -> Scenario:
    hierarchy = multilevel_hierarchy()
    initial = {name: Relation(schema, [(1,), (2,)])
               for name, schema in hierarchy.bases.items()}
    delta = DeltaRelation(hierarchy.bases["r33"], list(update_rows))
    return Scenario(
        initial=initial,
        hierarchy=hierarchy,
        kind=kind,
        replicate=frozenset(hierarchy.bases),
        updates=(SourceUpdate(1, "r33", delta),),
        latency=LatencyModel(default=1),
        seed=0,
    )


def chain_scenario(kind, *, cards=(6, 5), update_base=None, update_rows=((0, 0),),
                   update_time=1, replicate="all", latency=None, seed=0,
                   domain=3) -> Scenario:
    """Single view over a chain of joined two-column relations; rows drawn
    deterministically from the seed."""
    rng = random.Random(seed * 7919 + 17)
    n = len(cards)
    names = [f"r{i}" for i in range(n)]
    schemas = {name: Schema(name, ((f"a{i}", "int"), (f"b{i}", "int")), 8)
               for i, name in enumerate(names)}
    initial = {name: Relation(schemas[name],
                              [(rng.randint(0, domain), rng.randint(0, domain))
                               for _ in range(cards[i])])
               for i, name in enumerate(names)}
    conds = [Comparison(f"b{i}", "=", Attr(f"a{i+1}")) for i in range(n - 1)]
    view = ViewDef("V", tuple(names), ("a0", f"b{n-1}"),
                   join_conds=Predicate(tuple(conds)), tuple_size_bytes=8)
    hierarchy = ViewHierarchy(schemas.values(), [view], "V")
    update_base = update_base or names[-1]
    updates = (SourceUpdate(update_time, update_base,
                            DeltaRelation(schemas[update_base], list(update_rows))),)
    replicated = frozenset(names) if replicate == "all" else frozenset(replicate)
    return Scenario(initial=initial, hierarchy=hierarchy, kind=kind,
                    replicate=replicated, updates=updates,
                    latency=latency or LatencyModel(default=1), seed=seed)


def random_scenario(seed: int, kind: MaintainerKind,
                    replicate_subset: bool = False,
                    max_rows: int = 120, max_updates: int = 25) -> Scenario:
    """Randomized chain-join scenario with randomized per-message delays:
    up to four base relations, single-row appends at random times."""
    rng = random.Random(seed)
    n = rng.randint(2, 4)
    names = [f"r{i}" for i in range(n)]
    schemas = {name: Schema(name, ((f"a{i}", "int"), (f"b{i}", "int")), 8)
               for i, name in enumerate(names)}
    domain = rng.randint(2, 8)
    initial = {name: Relation(schemas[name],
                              [(rng.randint(0, domain), rng.randint(0, domain))
                               for _ in range(rng.randint(0, max_rows))])
               for name in names}
    conds = [Comparison(f"b{i}", "=", Attr(f"a{i+1}")) for i in range(n - 1)]
    view = ViewDef("V", tuple(names), ("a0", f"b{n-1}"),
                   join_conds=Predicate(tuple(conds)), tuple_size_bytes=8)
    hierarchy = ViewHierarchy(schemas.values(), [view], "V")
    updates = []
    for _ in range(rng.randint(1, max_updates)):
        base = rng.choice(names)
        updates.append(SourceUpdate(
            rng.randint(1, 60), base,
            DeltaRelation(schemas[base],
                          [(rng.randint(0, domain), rng.randint(0, domain))])))
    replicate = (frozenset(x for x in names if rng.random() < 0.5)
                 if replicate_subset else frozenset(names))
    return Scenario(initial=initial, hierarchy=hierarchy, kind=kind,
                    replicate=replicate, updates=tuple(updates),
                    latency=LatencyModel(random_range=(0, rng.randint(1, 12))),
                    seed=seed)


@pytest.fixture
def fig_hierarchy() -> ViewHierarchy:
    return multilevel_hierarchy()
