"""Scenario files: a JSON document describing schemas, data, views, the
maintainer, replication, the update schedule, and latencies.

Parsing is strict -- unknown keys and malformed fields fail with a
diagnostic anchored to the offending path -- because scenario files are
fixtures people diff and edit by hand.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .errors import ScenarioError, VmsimError
from .generator import DEFAULT_MIX, GeneratorSpec, generate, workload_schemas
from .relational import Attr, Comparison, DeltaRelation, Predicate, Relation, Schema
from .simulation import LatencyModel, Scenario, SourceUpdate
from .strategies import MaintainerKind
from .views import ViewDef, ViewHierarchy

_TOP_KEYS = {"seed", "maintainer", "schemas", "data", "views", "primary_view",
             "replicate", "updates", "latencies"}
_VIEW_KEYS = {"name", "operands", "project", "join", "where", "tuple_size_bytes"}
_LATENCY_KEYS = {"default", "notification", "query", "answer",
                 "notification_default", "query_default", "answer_default", "random"}


def _expect(condition: bool, message: str, path: str) -> None:
    if not condition:
        raise ScenarioError(message, path)


def _parse_predicate(raw: Any, path: str) -> Predicate:
    _expect(isinstance(raw, list), "expected a list of [lhs, op, rhs] triples", path)
    conjuncts = []
    for i, item in enumerate(raw):
        where = f"{path}[{i}]"
        _expect(isinstance(item, list) and len(item) == 3,
                "expected a [lhs, op, rhs] triple", where)
        lhs, op, rhs = item
        _expect(isinstance(lhs, str), "lhs must be an attribute name", where)
        _expect(isinstance(op, str), "op must be a string", where)
        if isinstance(rhs, dict):
            _expect(set(rhs) == {"attr"} and isinstance(rhs.get("attr"), str),
                    'attribute reference must be {"attr": name}', where)
            rhs = Attr(rhs["attr"])
        else:
            _expect(isinstance(rhs, (int, str)) and not isinstance(rhs, bool),
                    "rhs must be an int, a string, or an attribute reference", where)
        try:
            conjuncts.append(Comparison(lhs, op, rhs))
        except VmsimError as exc:
            raise ScenarioError(str(exc), where) from exc
    return Predicate(tuple(conjuncts))


def _predicate_to_json(pred: Predicate) -> list:
    out = []
    for c in pred.conjuncts:
        rhs = {"attr": c.rhs.name} if isinstance(c.rhs, Attr) else c.rhs
        out.append([c.lhs, c.op, rhs])
    return out


def _parse_schema(raw: Any, path: str) -> Schema:
    _expect(isinstance(raw, dict), "expected a schema object", path)
    _expect(set(raw) <= {"name", "attributes", "tuple_size_bytes"},
            f"unknown schema keys {sorted(set(raw) - {'name', 'attributes', 'tuple_size_bytes'})}",
            path)
    for key in ("name", "attributes", "tuple_size_bytes"):
        _expect(key in raw, f"schema needs {key!r}", path)
    attrs = raw["attributes"]
    _expect(isinstance(attrs, list) and all(
        isinstance(a, list) and len(a) == 2 for a in attrs),
        "attributes must be [name, type] pairs", f"{path}.attributes")
    try:
        return Schema(raw["name"], tuple((a, t) for a, t in attrs), raw["tuple_size_bytes"])
    except VmsimError as exc:
        raise ScenarioError(str(exc), path) from exc


def _parse_rows(raw: Any, schema: Schema, path: str) -> list[tuple]:
    _expect(isinstance(raw, list), "expected a list of rows", path)
    rows = []
    for i, row in enumerate(raw):
        _expect(isinstance(row, list), "each row is a list of values", f"{path}[{i}]")
        rows.append(tuple(row))
    try:
        Relation(schema, rows)
    except VmsimError as exc:
        raise ScenarioError(str(exc), path) from exc
    return rows


def scenario_from_dict(doc: Mapping[str, Any], seed_override: int | None = None) -> Scenario:
    _expect(isinstance(doc, Mapping), "scenario must be a JSON object", "$")
    unknown = set(doc) - _TOP_KEYS
    _expect(not unknown, f"unknown keys {sorted(unknown)}", "$")
    for key in ("maintainer", "views", "primary_view"):
        _expect(key in doc, f"missing required key {key!r}", "$")

    try:
        kind = MaintainerKind(doc["maintainer"])
    except ValueError:
        raise ScenarioError(
            f"unknown maintainer {doc['maintainer']!r}; one of "
            f"{[k.value for k in MaintainerKind]}", "$.maintainer") from None

    # Schemas and data, either inline or from the generator directive.
    data = doc.get("data", {})
    generated_updates: tuple[SourceUpdate, ...] = ()
    if isinstance(data, Mapping) and "generator" in data:
        _expect(set(data) == {"generator"}, "generator replaces inline data", "$.data")
        gen = data["generator"]
        _expect(isinstance(gen, Mapping), "generator must be an object", "$.data.generator")
        allowed = {"scale", "updates", "mix", "seed", "spacing"}
        _expect(set(gen) <= allowed,
                f"unknown generator keys {sorted(set(gen) - allowed)}", "$.data.generator")
        _expect("scale" in gen, "generator needs scale", "$.data.generator")
        try:
            spec = GeneratorSpec(scale=gen["scale"],
                                 update_count=gen.get("updates", 0),
                                 mix=gen.get("mix", None) or dict(DEFAULT_MIX),
                                 seed=gen.get("seed", doc.get("seed", 0)),
                                 spacing=gen.get("spacing", 10))
        except VmsimError as exc:
            raise ScenarioError(str(exc), "$.data.generator") from exc
        initial, generated_updates = generate(spec)
        schemas = workload_schemas()
        _expect("schemas" not in doc, "generator supplies the schemas", "$.schemas")
        _expect("updates" not in doc, "generator supplies the update stream", "$.updates")
    else:
        _expect("schemas" in doc, "missing required key 'schemas'", "$")
        schemas = {}
        raw_schemas = doc["schemas"]
        _expect(isinstance(raw_schemas, list), "schemas must be a list", "$.schemas")
        for i, raw in enumerate(raw_schemas):
            schema = _parse_schema(raw, f"$.schemas[{i}]")
            _expect(schema.name not in schemas, f"duplicate schema {schema.name!r}",
                    f"$.schemas[{i}]")
            schemas[schema.name] = schema
        _expect(isinstance(data, Mapping), "data must map relation names to rows", "$.data")
        initial = {}
        for name in sorted(schemas):
            rows = data.get(name, [])
            initial[name] = Relation(schemas[name],
                                     _parse_rows(rows, schemas[name], f"$.data.{name}"))
        extra = set(data) - set(schemas)
        _expect(not extra, f"data for undeclared relations {sorted(extra)}", "$.data")

    # Views.
    raw_views = doc["views"]
    _expect(isinstance(raw_views, list) and raw_views, "views must be a nonempty list",
            "$.views")
    views = []
    for i, raw in enumerate(raw_views):
        where = f"$.views[{i}]"
        _expect(isinstance(raw, dict), "expected a view object", where)
        unknown = set(raw) - _VIEW_KEYS
        _expect(not unknown, f"unknown view keys {sorted(unknown)}", where)
        for key in ("name", "operands", "project"):
            _expect(key in raw, f"view needs {key!r}", where)
        try:
            views.append(ViewDef(
                raw["name"], tuple(raw["operands"]), tuple(raw["project"]),
                join_conds=_parse_predicate(raw.get("join", []), f"{where}.join"),
                selection=_parse_predicate(raw.get("where", []), f"{where}.where"),
                tuple_size_bytes=raw.get("tuple_size_bytes"),
            ))
        except VmsimError as exc:
            raise ScenarioError(str(exc), where) from exc

    try:
        hierarchy = ViewHierarchy(schemas.values(), views, doc["primary_view"])
    except VmsimError as exc:
        raise ScenarioError(str(exc), "$.views") from exc

    # Replication.
    replicate_raw = doc.get("replicate", "all")
    if replicate_raw == "all":
        replicate = frozenset(hierarchy.bases_under(hierarchy.primary)
                              if hierarchy.is_view(hierarchy.primary) else schemas)
    else:
        _expect(isinstance(replicate_raw, list), 'replicate is "all" or a list', "$.replicate")
        replicate = frozenset(replicate_raw)

    # Updates.
    if generated_updates:
        updates = generated_updates
    else:
        raw_updates = doc.get("updates", [])
        _expect(isinstance(raw_updates, list), "updates must be a list", "$.updates")
        updates = []
        for i, raw in enumerate(raw_updates):
            where = f"$.updates[{i}]"
            _expect(isinstance(raw, dict) and set(raw) <= {"time", "base", "rows"},
                    "update objects carry time, base, rows", where)
            for key in ("time", "base", "rows"):
                _expect(key in raw, f"update needs {key!r}", where)
            _expect(isinstance(raw["time"], int), "time must be an integer", where)
            base = raw["base"]
            _expect(base in schemas, f"unknown base relation {base!r}", where)
            rows = _parse_rows(raw["rows"], schemas[base], f"{where}.rows")
            updates.append(SourceUpdate(raw["time"], base,
                                        DeltaRelation(schemas[base], rows)))
        updates = tuple(updates)

    # Latencies.
    raw_latency = doc.get("latencies", {})
    _expect(isinstance(raw_latency, Mapping), "latencies must be an object", "$.latencies")
    unknown = set(raw_latency) - _LATENCY_KEYS
    _expect(not unknown, f"unknown latency keys {sorted(unknown)}", "$.latencies")
    random_range = None
    if "random" in raw_latency:
        rnd = raw_latency["random"]
        _expect(isinstance(rnd, Mapping) and set(rnd) == {"min", "max"},
                'random latencies need {"min": a, "max": b}', "$.latencies.random")
        random_range = (rnd["min"], rnd["max"])
    latency = LatencyModel(
        default=raw_latency.get("default", 1),
        notification=tuple(raw_latency.get("notification", ())),
        query=tuple(raw_latency.get("query", ())),
        answer=tuple(raw_latency.get("answer", ())),
        notification_default=raw_latency.get("notification_default"),
        query_default=raw_latency.get("query_default"),
        answer_default=raw_latency.get("answer_default"),
        random_range=random_range,
    )

    seed = doc.get("seed", 0)
    _expect(isinstance(seed, int), "seed must be an integer", "$.seed")
    if seed_override is not None:
        seed = seed_override

    scenario = Scenario(initial=initial, hierarchy=hierarchy, kind=kind,
                        replicate=replicate, updates=tuple(updates),
                        latency=latency, seed=seed)
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of :func:`scenario_from_dict` for inline-data scenarios."""
    hierarchy = scenario.hierarchy
    doc: dict[str, Any] = {
        "seed": scenario.seed,
        "maintainer": scenario.kind.value,
        "schemas": [
            {"name": s.name, "attributes": [[a, t] for a, t in s.attributes],
             "tuple_size_bytes": s.tuple_size_bytes}
            for s in (hierarchy.bases[name] for name in sorted(hierarchy.bases))
        ],
        "data": {name: [list(row) for row, mult in scenario.initial[name].sorted_items()
                        for _ in range(mult)]
                 for name in sorted(scenario.initial)},
        "views": [_view_to_json(v) for v in hierarchy.views.values()],
        "primary_view": hierarchy.primary,
        "replicate": sorted(scenario.replicate),
        "updates": [
            {"time": u.time, "base": u.base,
             "rows": [list(row) for row, mult in u.delta.sorted_items()
                      for _ in range(mult)]}
            for u in scenario.updates
        ],
        "latencies": _latency_to_json(scenario.latency),
    }
    return doc


def _view_to_json(view: ViewDef) -> dict:
    doc = {"name": view.name, "operands": list(view.operands),
           "project": list(view.projection),
           "join": _predicate_to_json(view.join_conds),
           "where": _predicate_to_json(view.selection)}
    if view.tuple_size_bytes is not None:
        doc["tuple_size_bytes"] = view.tuple_size_bytes
    return doc


def _latency_to_json(latency: LatencyModel) -> dict:
    out: dict[str, Any] = {"default": latency.default}
    for kind in ("notification", "query", "answer"):
        declared = getattr(latency, kind)
        if declared:
            out[kind] = list(declared)
        fallback = getattr(latency, f"{kind}_default")
        if fallback is not None:
            out[f"{kind}_default"] = fallback
    if latency.random_range is not None:
        out["random"] = {"min": latency.random_range[0], "max": latency.random_range[1]}
    return out


def dumps(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc.msg}", f"{path}:{exc.lineno}") from exc
    return scenario_from_dict(doc, seed_override=seed_override)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(scenario), encoding="utf-8")
