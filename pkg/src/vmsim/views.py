"""Select-project-join view definitions, hierarchies, and delta rules.

A view joins its operands left-deep in declared order, filters, then
projects. Operands are other views or base relations; the hierarchy is
the DAG of those dependencies, maintained leaves first. Selection and
projection run on the join stream in flight, so only the join itself
touches stored rows and carries an access charge.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import CatalogError, IntegrityError, SchemaError
from .relational import (
    TRUE,
    AccessCounter,
    DeltaRelation,
    Predicate,
    Relation,
    Schema,
    _projected,
    delta_union,
    nested_loop_join,
)

DEFAULT_ATTR_BYTES = 8


@dataclass(frozen=True)
class ViewDef:
    """One select-project-join expression over named operands."""

    name: str
    operands: tuple[str, ...]
    projection: tuple[str, ...]
    join_conds: Predicate = TRUE
    selection: Predicate = TRUE
    tuple_size_bytes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "operands", tuple(self.operands))
        object.__setattr__(self, "projection", tuple(self.projection))
        if not self.operands:
            raise SchemaError(f"view {self.name} needs at least one operand")
        if len(set(self.operands)) != len(self.operands):
            raise SchemaError(f"view {self.name} lists an operand twice")
        if not self.projection:
            raise SchemaError(f"view {self.name} projects nothing")
        if self.tuple_size_bytes is not None and self.tuple_size_bytes < 1:
            raise SchemaError(f"view {self.name} declares a non-positive tuple size")

    @property
    def declared_tuple_size(self) -> int:
        if self.tuple_size_bytes is not None:
            return self.tuple_size_bytes
        return DEFAULT_ATTR_BYTES * len(self.projection)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} [{self.subject}]: {self.message}"


class ViewHierarchy:
    """Base relation schemas plus the views defined over them."""

    def __init__(self, base_schemas: Iterable[Schema], views: Iterable[ViewDef], primary: str):
        self.bases: dict[str, Schema] = {}
        for schema in base_schemas:
            if schema.name in self.bases:
                raise SchemaError(f"duplicate base relation {schema.name}")
            self.bases[schema.name] = schema
        self.views: dict[str, ViewDef] = {}
        for vdef in views:
            if vdef.name in self.views:
                raise SchemaError(f"duplicate view {vdef.name}")
            self.views[vdef.name] = vdef
        self.primary = primary
        self._schema_cache: dict[str, Schema] = {}

    def is_base(self, name: str) -> bool:
        return name in self.bases

    def is_view(self, name: str) -> bool:
        return name in self.views

    def __eq__(self, other) -> bool:
        if not isinstance(other, ViewHierarchy):
            return NotImplemented
        return (self.bases == other.bases and self.views == other.views
                and self.primary == other.primary)

    __hash__ = None

    # --- structure ---

    def dependents(self) -> dict[str, list[str]]:
        """Reverse edges: operand name -> views that read it, sorted."""
        rev: dict[str, list[str]] = {}
        for name in sorted(self.views):
            for op in self.views[name].operands:
                rev.setdefault(op, []).append(name)
        return rev

    def topological_views(self) -> list[str]:
        """All views, leaves first; lexicographic tie-break."""
        remaining = {name: set(op for op in vdef.operands if op in self.views)
                     for name, vdef in self.views.items()}
        ready = [name for name, deps in remaining.items() if not deps]
        heapq.heapify(ready)
        rev = self.dependents()
        out: list[str] = []
        while ready:
            name = heapq.heappop(ready)
            out.append(name)
            for dep in rev.get(name, ()):
                deps = remaining[dep]
                deps.discard(name)
                if not deps:
                    heapq.heappush(ready, dep)
        if len(out) != len(self.views):
            raise SchemaError("view hierarchy contains a cycle")
        return out

    def bases_under(self, name: str) -> set[str]:
        """Base relations a view transitively reads."""
        if self.is_base(name):
            return {name}
        found: set[str] = set()
        stack = [name]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            for op in self.views[cur].operands:
                if self.is_base(op):
                    found.add(op)
                elif self.is_view(op):
                    stack.append(op)
        return found

    def supporting_views(self, name: str) -> set[str]:
        """Views the named view transitively reads, itself included."""
        found: set[str] = set()
        stack = [name]
        while stack:
            cur = stack.pop()
            if cur in found or not self.is_view(cur):
                continue
            found.add(cur)
            stack.extend(self.views[cur].operands)
        return found

    def output_schema(self, name: str) -> Schema:
        """Schema a view materializes to, inferred bottom-up."""
        if self.is_base(name):
            return self.bases[name]
        if name in self._schema_cache:
            return self._schema_cache[name]
        vdef = self.views.get(name)
        if vdef is None:
            raise CatalogError(f"unknown relation {name!r}")
        attrs: list[tuple[str, str]] = []
        for op in vdef.operands:
            schema = self.output_schema(op).renamed(op)
            attrs.extend(schema.qualified().attributes)
        concat = Schema("joined", tuple(attrs), 1)
        for ref in vdef.join_conds.referenced():
            concat.resolve(ref)
        for ref in vdef.selection.referenced():
            concat.resolve(ref)
        out_attrs = tuple((written, concat.type_at(concat.resolve(written)))
                          for written in vdef.projection)
        schema = Schema(vdef.name, out_attrs, vdef.declared_tuple_size)
        self._schema_cache[name] = schema
        return schema

    # --- validation ---

    def validate(self) -> list[Diagnostic]:
        """Check every structural invariant; empty list means valid."""
        diags: list[Diagnostic] = []
        overlap = set(self.bases) & set(self.views)
        for name in sorted(overlap):
            diags.append(Diagnostic("name-collision", name,
                                    "declared as both a base relation and a view"))
        if self.primary not in self.views:
            diags.append(Diagnostic("missing-primary", self.primary,
                                    "primary view is not defined"))
            return diags

        for name in sorted(self.views):
            for op in self.views[name].operands:
                if not (self.is_base(op) or self.is_view(op)):
                    diags.append(Diagnostic("unresolved-operand", name,
                                            f"operand {op!r} is neither a view nor a base relation"))
        if diags:
            return diags

        # Cycle detection before schema inference, which would recurse forever.
        state: dict[str, int] = {}

        def visit(name: str) -> bool:
            state[name] = 1
            for op in self.views[name].operands:
                if self.is_view(op):
                    mark = state.get(op)
                    if mark == 1:
                        return False
                    if mark is None and not visit(op):
                        return False
            state[name] = 2
            return True

        for name in sorted(self.views):
            if state.get(name) is None and not visit(name):
                diags.append(Diagnostic("cycle", name, "view participates in a dependency cycle"))
                return diags

        for name in sorted(self.views):
            ops = self.views[name].operands
            kinds = {self.is_base(op) for op in ops}
            if kinds == {True, False}:
                diags.append(Diagnostic("mixed-operands", name,
                                        "mixes base relations and views; leaves read bases only"))
        if diags:
            return diags

        for name in self.topological_views():
            try:
                self.output_schema(name)
            except SchemaError as exc:
                diags.append(Diagnostic("schema", name, str(exc)))
                return diags
        return diags


def affected_order(hierarchy: ViewHierarchy, base: str) -> list[str]:
    """Views that transitively depend on ``base``, leaves first, ending at
    the primary view when it is affected; lexicographic tie-break."""
    if not hierarchy.is_base(base):
        raise CatalogError(f"unknown base relation {base!r}")
    rev = hierarchy.dependents()
    affected: set[str] = set()
    stack = list(rev.get(base, ()))
    while stack:
        name = stack.pop()
        if name in affected:
            continue
        affected.add(name)
        stack.extend(rev.get(name, ()))
    remaining = {name: set(op for op in hierarchy.views[name].operands if op in affected)
                 for name in affected}
    ready = sorted(name for name, deps in remaining.items() if not deps)
    heapq.heapify(ready)
    plan: list[str] = []
    while ready:
        name = heapq.heappop(ready)
        plan.append(name)
        for dep in rev.get(name, ()):
            if dep in remaining and name in remaining[dep]:
                remaining[dep].discard(name)
                if not remaining[dep]:
                    heapq.heappush(ready, dep)
    return plan


def _operand_relation(catalog: Mapping[str, Relation], name: str) -> Relation:
    rel = catalog.get(name)
    if rel is None:
        raise CatalogError(f"operand {name!r} is not available in the catalog")
    return rel.renamed(name)


def evaluate(vdef: ViewDef, catalog: Mapping[str, Relation], site: str,
             counter: AccessCounter,
             substitutions: Mapping[str, Relation] | None = None) -> Relation:
    """Materialize a view: counted left-deep join, then uncounted in-flight
    selection and projection (the join stream is never a stored relation).

    ``substitutions`` replaces named operands with literal relations, which
    is how delta rules and delta queries reuse the evaluator.
    """
    rels = []
    for op in vdef.operands:
        if substitutions and op in substitutions:
            rels.append(substitutions[op].renamed(op))
        else:
            rels.append(_operand_relation(catalog, op))
    joined = nested_loop_join(rels, vdef.join_conds, site, counter)
    contents = joined.contents
    if not vdef.selection.is_true:
        test = vdef.selection.bind(joined.schema)
        contents = {row: m for row, m in contents.items() if test(row)}
    out_schema, projected = _projected(joined.schema, contents, vdef.projection)
    final = Schema(vdef.name, out_schema.attributes, vdef.declared_tuple_size)
    return Relation._trusted(final, projected)


def delta_insert(vdef: ViewDef, changed_operand: str, delta: DeltaRelation,
                 catalog: Mapping[str, Relation], site: str,
                 counter: AccessCounter) -> DeltaRelation:
    """View delta for a pure-insert change to one operand: the view
    expression with the delta substituted in that operand's position."""
    if changed_operand not in vdef.operands:
        raise CatalogError(f"{changed_operand!r} is not an operand of view {vdef.name}")
    if not delta.is_pure_insert:
        raise IntegrityError(f"delta for {changed_operand} must be insert-only")
    result = evaluate(vdef, catalog, site, counter,
                      substitutions={changed_operand: delta.as_insert_relation(changed_operand)})
    return DeltaRelation._trusted(result.schema, dict(result.contents))


def delta_round(vdef: ViewDef, deltas: Mapping[str, DeltaRelation],
                old_catalog: Mapping[str, Relation],
                new_catalog: Mapping[str, Relation], site: str,
                counter: AccessCounter) -> DeltaRelation:
    """View delta when several operands changed in one maintenance round.

    Standard expansion of the bag join delta: one substituted join per
    changed operand, with operands to its left read post-change and
    operands to its right read pre-change, so every cross pair of new
    tuples is produced exactly once.
    """
    out_schema = None
    total: DeltaRelation | None = None
    for k, op in enumerate(vdef.operands):
        d = deltas.get(op)
        if d is None or d.is_empty:
            continue
        catalog = {}
        for j, other in enumerate(vdef.operands):
            if other == op:
                continue
            source = new_catalog if j < k else old_catalog
            rel = source.get(other)
            if rel is None:
                raise CatalogError(f"operand {other!r} is not available in the catalog")
            catalog[other] = rel
        part = delta_insert(vdef, op, d, catalog, site, counter)
        total = part if total is None else delta_union(total, part)
        out_schema = part.schema
    if total is None:
        raise ValueError("delta_round called without any nonempty operand delta")
    return total


def evaluate_hierarchy(hierarchy: ViewHierarchy, base_catalog: Mapping[str, Relation],
                       site: str, counter: AccessCounter) -> dict[str, Relation]:
    """Materialize every view leaves-first from the given base relations."""
    catalog: dict[str, Relation] = dict(base_catalog)
    out: dict[str, Relation] = {}
    for name in hierarchy.topological_views():
        rel = evaluate(hierarchy.views[name], catalog, site, counter)
        catalog[name] = rel
        out[name] = rel
    return out
