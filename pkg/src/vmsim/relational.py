"""In-memory bag relational algebra with row-access accounting.

Relations are multisets: contents map each tuple to a positive integer
multiplicity, deltas map tuples to signed nonzero counts. Every operation
is pure -- inputs are never mutated -- so a reference to a relation value
is a stable snapshot.

Row accesses are charged to an :class:`AccessCounter` under a
linear-search cost model: a stored relation contributes its full
cardinality each time it is scanned, a join charges the left-deep
nested-loop total in the declared operand order regardless of predicate
selectivity, and applying a delta rescans the stored relation once. The
physical evaluation of a join is free to pick a cheaper operand order and
hash lookups; that affects speed only, never the charge or the result.
"""

from __future__ import annotations

import json
import operator
import re
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union

from .errors import IntegrityError, SchemaError

WAREHOUSE = "warehouse"
SOURCE = "source"
SITES = (WAREHOUSE, SOURCE)

INT = "int"
STR = "str"
_TYPES = (INT, STR)

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_ATTR_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*\Z")

Scalar = Union[int, str]
Row = tuple


@dataclass(frozen=True)
class Schema:
    """Relation name, typed attribute list, and declared bytes per tuple.

    ``tuple_size_bytes`` is a declared constant, not derived from the
    attribute types; space accounting multiplies it by cardinality.
    """

    name: str
    attributes: tuple[tuple[str, str], ...]
    tuple_size_bytes: int

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple((a, t) for a, t in self.attributes))
        if not _NAME_RE.match(self.name):
            raise SchemaError(f"invalid relation name {self.name!r}")
        seen = set()
        for attr, typ in self.attributes:
            if not _ATTR_RE.match(attr):
                raise SchemaError(f"invalid attribute name {attr!r} in {self.name}")
            if typ not in _TYPES:
                raise SchemaError(f"unknown type {typ!r} for {self.name}.{attr}")
            if attr in seen:
                raise SchemaError(f"duplicate attribute {attr!r} in {self.name}")
            seen.add(attr)
        if not isinstance(self.tuple_size_bytes, int) or self.tuple_size_bytes < 1:
            raise SchemaError(f"tuple_size_bytes must be a positive integer for {self.name}")

    @property
    def arity(self) -> int:
        return len(self.attributes)

    @property
    def attr_names(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.attributes)

    def resolve(self, name: str) -> int:
        """Index of ``name``: exact match first, else an unambiguous
        unqualified suffix (``custkey`` finds ``orders.custkey``)."""
        names = self.attr_names
        if name in names:
            return names.index(name)
        if "." not in name:
            hits = [i for i, a in enumerate(names) if a.rsplit(".", 1)[-1] == name]
            if len(hits) == 1:
                return hits[0]
            if len(hits) > 1:
                raise SchemaError(f"ambiguous attribute {name!r} in {self.name}: matches "
                                  + ", ".join(names[i] for i in hits))
        raise SchemaError(f"unknown attribute {name!r} in {self.name}({', '.join(names)})")

    def type_at(self, index: int) -> str:
        return self.attributes[index][1]

    def qualified(self) -> Schema:
        """Attributes prefixed with the relation name, for join output."""
        return replace(self, attributes=tuple((f"{self.name}.{a}", t) for a, t in self.attributes))

    def renamed(self, name: str) -> Schema:
        return replace(self, name=name)


def _check_row(schema: Schema, row: Sequence) -> Row:
    values = tuple(row)
    if len(values) != schema.arity:
        raise SchemaError(f"row {values!r} has arity {len(values)}, schema {schema.name} expects {schema.arity}")
    for value, (attr, typ) in zip(values, schema.attributes):
        if typ == INT:
            if not isinstance(value, int) or isinstance(value, bool):
                raise SchemaError(f"{schema.name}.{attr} expects int, got {value!r}")
        elif not isinstance(value, str):
            raise SchemaError(f"{schema.name}.{attr} expects str, got {value!r}")
    return values


def _render_value(value: Scalar) -> str:
    return json.dumps(value) if isinstance(value, str) else str(value)


def _render_row(row: Row) -> str:
    return "(" + ",".join(_render_value(v) for v in row) + ")"


class Relation:
    """A bag of tuples over a schema; multiplicities are >= 1."""

    __slots__ = ("schema", "contents")

    def __init__(self, schema: Schema, contents: Mapping[Row, int] | Iterable[Sequence] = ()):
        counts: dict[Row, int] = {}
        if isinstance(contents, Mapping):
            for row, mult in contents.items():
                if not isinstance(mult, int) or mult < 0:
                    raise IntegrityError(f"multiplicity {mult!r} for {row!r} in {schema.name}")
                if mult == 0:
                    continue
                counts[_check_row(schema, row)] = mult
        else:
            for row in contents:
                checked = _check_row(schema, row)
                counts[checked] = counts.get(checked, 0) + 1
        self.schema = schema
        self.contents = counts

    @classmethod
    def _trusted(cls, schema: Schema, contents: dict[Row, int]) -> Relation:
        rel = object.__new__(cls)
        rel.schema = schema
        rel.contents = contents
        return rel

    @property
    def cardinality(self) -> int:
        return sum(self.contents.values())

    @property
    def space_bytes(self) -> int:
        return self.cardinality * self.schema.tuple_size_bytes

    @property
    def is_empty(self) -> bool:
        return not self.contents

    def sorted_items(self) -> list[tuple[Row, int]]:
        return sorted(self.contents.items())

    def renamed(self, name: str) -> Relation:
        if name == self.schema.name:
            return self
        return Relation._trusted(self.schema.renamed(name), self.contents)

    def canonical(self) -> str:
        """Stable serialization: attributes in schema order, tuples in
        lexicographic order, ``x{k}`` multiplicity suffixes."""
        body = ",".join(f"{_render_row(row)}×{mult}" for row, mult in self.sorted_items())
        return f"{self.schema.name}({','.join(self.schema.attr_names)}){{{body}}}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.schema.attributes == other.schema.attributes and self.contents == other.contents

    __hash__ = None

    def __repr__(self) -> str:
        return f"Relation[{self.canonical()}]"


class DeltaRelation:
    """A signed bag of tuples: the change to apply to a relation.

    Cardinality counts absolute multiplicities, so a delta carrying five
    insertions has cardinality 5 whether or not signs mix.
    """

    __slots__ = ("schema", "contents")

    def __init__(self, schema: Schema, contents: Mapping[Row, int] | Iterable[Sequence] = ()):
        counts: dict[Row, int] = {}
        if isinstance(contents, Mapping):
            for row, mult in contents.items():
                if not isinstance(mult, int):
                    raise IntegrityError(f"multiplicity {mult!r} for {row!r} in {schema.name}")
                if mult == 0:
                    continue
                counts[_check_row(schema, row)] = mult
        else:
            for row in contents:
                checked = _check_row(schema, row)
                counts[checked] = counts.get(checked, 0) + 1
        self.schema = schema
        self.contents = counts

    @classmethod
    def _trusted(cls, schema: Schema, contents: dict[Row, int]) -> DeltaRelation:
        delta = object.__new__(cls)
        delta.schema = schema
        delta.contents = contents
        return delta

    @classmethod
    def empty(cls, schema: Schema) -> DeltaRelation:
        return cls._trusted(schema, {})

    @property
    def cardinality(self) -> int:
        return sum(abs(m) for m in self.contents.values())

    @property
    def signed_total(self) -> int:
        return sum(self.contents.values())

    @property
    def is_empty(self) -> bool:
        return not self.contents

    @property
    def is_pure_insert(self) -> bool:
        return all(m > 0 for m in self.contents.values())

    def sorted_items(self) -> list[tuple[Row, int]]:
        return sorted(self.contents.items())

    def as_insert_relation(self, name: str | None = None) -> Relation:
        """View a pure-insert delta as a relation, optionally renamed."""
        if not self.is_pure_insert:
            raise IntegrityError(f"delta on {self.schema.name} holds negative counts")
        schema = self.schema if name is None else self.schema.renamed(name)
        return Relation._trusted(schema, dict(self.contents))

    def canonical(self) -> str:
        body = ",".join(f"{_render_row(row)}×{mult:+d}" for row, mult in self.sorted_items())
        return f"{self.schema.name}({','.join(self.schema.attr_names)}){{{body}}}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeltaRelation):
            return NotImplemented
        return self.schema.attributes == other.schema.attributes and self.contents == other.contents

    __hash__ = None

    def __repr__(self) -> str:
        return f"DeltaRelation[{self.canonical()}]"


class AccessCounter:
    """Per-site monotone row-access tally.

    A disabled counter swallows every charge; oracle evaluations use it so
    ground truth never perturbs measurements.
    """

    __slots__ = ("enabled", "_counts")

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._counts = {WAREHOUSE: 0, SOURCE: 0}

    @classmethod
    def disabled(cls) -> AccessCounter:
        return cls(enabled=False)

    def add(self, site: str, rows: int) -> None:
        if site not in self._counts:
            raise ValueError(f"unknown site {site!r}")
        if rows < 0:
            raise ValueError("row-access counts never decrease")
        if self.enabled:
            self._counts[site] += rows

    def __getitem__(self, site: str) -> int:
        return self._counts[site]

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def snapshot(self) -> dict[str, int]:
        return dict(self._counts)


# --- Predicates ---

@dataclass(frozen=True)
class Attr:
    """Marks the right-hand side of a comparison as an attribute reference."""

    name: str


_OPS: dict[str, Callable] = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class Comparison:
    lhs: str
    op: str
    rhs: Attr | int | str

    def __post_init__(self):
        if self.op not in _OPS:
            raise SchemaError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class Predicate:
    """A conjunction of atomic comparisons; empty means always true."""

    conjuncts: tuple[Comparison, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "conjuncts", tuple(self.conjuncts))

    @property
    def is_true(self) -> bool:
        return not self.conjuncts

    def referenced(self) -> tuple[str, ...]:
        names = []
        for c in self.conjuncts:
            names.append(c.lhs)
            if isinstance(c.rhs, Attr):
                names.append(c.rhs.name)
        return tuple(names)

    def bind(self, schema: Schema) -> Callable[[Row], bool]:
        """Resolve attribute references once; returns a row test."""
        checks: list[tuple[int, Callable, object, bool]] = []
        for c in self.conjuncts:
            li = schema.resolve(c.lhs)
            if isinstance(c.rhs, Attr):
                ri = schema.resolve(c.rhs.name)
                if schema.type_at(li) != schema.type_at(ri):
                    raise SchemaError(f"type mismatch comparing {c.lhs} and {c.rhs.name}")
                checks.append((li, _OPS[c.op], ri, True))
            else:
                expected = INT if isinstance(c.rhs, int) and not isinstance(c.rhs, bool) else STR
                if not isinstance(c.rhs, (int, str)) or isinstance(c.rhs, bool):
                    raise SchemaError(f"unsupported constant {c.rhs!r}")
                if schema.type_at(li) != expected:
                    raise SchemaError(f"type mismatch comparing {c.lhs} with {c.rhs!r}")
                checks.append((li, _OPS[c.op], c.rhs, False))
        if not checks:
            return lambda row: True

        def test(row: Row) -> bool:
            for li, fn, rhs, is_attr in checks:
                if not fn(row[li], row[rhs] if is_attr else rhs):
                    return False
            return True

        return test


TRUE = Predicate()


# --- Operations ---

def scan(rel: Relation, site: str, counter: AccessCounter) -> Iterator[Row]:
    """Yield tuples in canonical order, repeated by multiplicity, charging
    one access per row as it is produced."""

    def generate():
        for row, mult in rel.sorted_items():
            for _ in range(mult):
                counter.add(site, 1)
                yield row

    return generate()


def select(rel: Relation, pred: Predicate, site: str, counter: AccessCounter) -> Relation:
    test = pred.bind(rel.schema)
    counter.add(site, rel.cardinality)
    return Relation._trusted(rel.schema, {row: m for row, m in rel.contents.items() if test(row)})


def _projected(schema: Schema, contents: Mapping[Row, int],
               attrs: Sequence[str]) -> tuple[Schema, dict[Row, int]]:
    if not attrs:
        raise SchemaError("projection needs at least one attribute")
    indexes = [schema.resolve(a) for a in attrs]
    out_attrs = tuple((name, schema.type_at(i)) for name, i in zip(attrs, indexes))
    seen = set()
    for name, _ in out_attrs:
        if name in seen:
            raise SchemaError(f"duplicate projected attribute {name!r}")
        seen.add(name)
    out_schema = Schema(schema.name, out_attrs, schema.tuple_size_bytes)
    out: dict[Row, int] = {}
    for row, mult in contents.items():
        key = tuple(row[i] for i in indexes)
        out[key] = out.get(key, 0) + mult
    return out_schema, out


def project(rel: Relation, attrs: Sequence[str], site: str, counter: AccessCounter) -> Relation:
    out_schema, out = _projected(rel.schema, rel.contents, attrs)
    counter.add(site, rel.cardinality)
    return Relation._trusted(out_schema, out)


def _concat_schema(operands: Sequence[Relation]) -> Schema:
    names = []
    attrs: list[tuple[str, str]] = []
    size = 0
    for rel in operands:
        if rel.schema.name in names:
            raise SchemaError(f"duplicate operand name {rel.schema.name!r} in join")
        names.append(rel.schema.name)
        attrs.extend(rel.schema.qualified().attributes)
        size += rel.schema.tuple_size_bytes
    return Schema("joined", tuple(attrs), max(size, 1))


def join_access_charge(cardinalities: Sequence[int]) -> int:
    """Left-deep nested-loop row total: sum over prefixes of the running
    cardinality product."""
    total = 0
    running = 1
    for card in cardinalities:
        running *= card
        total += running
    return total


def _execution_order(operands: Sequence[Relation],
                     links: list[tuple[int, int]]) -> list[int]:
    # Cheapest-first greedy order preferring operands reachable through an
    # equality link; changes evaluation cost only, never charge or result.
    remaining = list(range(len(operands)))
    remaining.sort(key=lambda i: (operands[i].cardinality, i))
    order = [remaining.pop(0)]
    chosen = {order[0]}
    while remaining:
        connected = [i for i in remaining
                     if any((a in chosen) != (b in chosen) and i in (a, b) for a, b in links)]
        pick = connected[0] if connected else remaining[0]
        remaining.remove(pick)
        order.append(pick)
        chosen.add(pick)
    return order


def nested_loop_join(operands: Sequence[Relation], join_conds: Predicate,
                     site: str, counter: AccessCounter) -> Relation:
    """Join in the declared operand order with relation-qualified attribute
    names; output multiplicity is the product of input multiplicities.

    The charge is the full cross-product scan total for the declared order
    (predicates never reduce it); execution itself reorders operands and
    uses hash lookups for equality conjuncts.
    """
    if not operands:
        raise SchemaError("join needs at least one operand")
    concat = _concat_schema(operands)

    # Column offset of each operand inside the declared concatenation.
    offsets = []
    at = 0
    for rel in operands:
        offsets.append(at)
        at += rel.schema.arity
    owner = []
    for i, rel in enumerate(operands):
        owner.extend([i] * rel.schema.arity)

    # Resolve every conjunct against the concatenated schema up front so
    # schema errors surface before anything is charged.
    resolved: list[tuple[int, str, object, bool]] = []
    links: list[tuple[int, int]] = []
    for c in join_conds.conjuncts:
        li = concat.resolve(c.lhs)
        if isinstance(c.rhs, Attr):
            ri = concat.resolve(c.rhs.name)
            if concat.type_at(li) != concat.type_at(ri):
                raise SchemaError(f"type mismatch comparing {c.lhs} and {c.rhs.name}")
            resolved.append((li, c.op, ri, True))
            if c.op == "=" and owner[li] != owner[ri]:
                links.append((owner[li], owner[ri]))
        else:
            expected = INT if isinstance(c.rhs, int) and not isinstance(c.rhs, bool) else STR
            if concat.type_at(li) != expected:
                raise SchemaError(f"type mismatch comparing {c.lhs} with {c.rhs!r}")
            resolved.append((li, c.op, c.rhs, False))

    counter.add(site, join_access_charge([rel.cardinality for rel in operands]))

    order = _execution_order(operands, links)
    contents = _execute_join(operands, order, offsets, owner, resolved)
    return Relation._trusted(concat, contents)


def _execute_join(operands, order, offsets, owner, resolved) -> dict[Row, int]:
    n = len(operands)
    placed: dict[int, int] = {}  # concat column -> position in working row
    width = 0

    def local_cols(op_index: int) -> range:
        return range(offsets[op_index], offsets[op_index] + operands[op_index].schema.arity)

    applied: set[int] = set()
    rows: list[tuple[tuple, int]] = []
    bound: set[int] = set()
    for step, op_index in enumerate(order):
        rel = operands[op_index]
        new_cols = list(local_cols(op_index))

        # A conjunct becomes applicable at the step its last operand joins.
        eq_keys: list[tuple[int, int]] = []
        filters: list[tuple[int, str, object, bool]] = []
        for ci, (li, op, rhs, is_attr) in enumerate(resolved):
            if ci in applied:
                continue
            cols = {owner[li]} | ({owner[rhs]} if is_attr else set())
            if op_index not in cols or not cols <= bound | {op_index}:
                continue
            if is_attr and op == "=" and owner[li] != owner[rhs] and step > 0:
                eq_keys.append((li, rhs))
            else:
                filters.append((li, op, rhs, is_attr))
            applied.add(ci)

        # Split filters into ones local to the incoming operand (applied
        # before hashing) and cross filters (applied to combined rows).
        local_filters, cross_filters = [], []
        for li, op, rhs, is_attr in filters:
            cols = {owner[li]} | ({owner[rhs]} if is_attr else set())
            if cols == {op_index}:
                local_filters.append((li, op, rhs, is_attr))
            else:
                cross_filters.append((li, op, rhs, is_attr))

        def value_of(working_row, new_row, col):
            if col in placed:
                return working_row[placed[col]]
            return new_row[col - offsets[op_index]]

        new_rows = []
        for row, mult in rel.contents.items():
            ok = True
            for li, op, rhs, is_attr in local_filters:
                left = row[li - offsets[op_index]]
                right = row[rhs - offsets[op_index]] if is_attr else rhs
                if not _OPS[op](left, right):
                    ok = False
                    break
            if ok:
                new_rows.append((row, mult))

        if step == 0:
            rows = new_rows
            # cross filters impossible at step 0
        else:
            if not rows or not new_rows:
                rows = []
            elif eq_keys:
                bound_key_cols, new_key_cols = [], []
                for li, ri in eq_keys:
                    if owner[li] == op_index:
                        new_key_cols.append(li - offsets[op_index])
                        bound_key_cols.append(placed[ri])
                    else:
                        new_key_cols.append(ri - offsets[op_index])
                        bound_key_cols.append(placed[li])
                table: dict[tuple, list[tuple[tuple, int]]] = {}
                for row, mult in new_rows:
                    key = tuple(row[c] for c in new_key_cols)
                    table.setdefault(key, []).append((row, mult))
                combined = []
                for wrow, wmult in rows:
                    key = tuple(wrow[c] for c in bound_key_cols)
                    for nrow, nmult in table.get(key, ()):
                        if all(_OPS[op](value_of(wrow, nrow, li),
                                        value_of(wrow, nrow, rhs) if is_attr else rhs)
                               for li, op, rhs, is_attr in cross_filters):
                            combined.append((wrow + nrow, wmult * nmult))
                rows = combined
            else:
                combined = []
                for wrow, wmult in rows:
                    for nrow, nmult in new_rows:
                        if all(_OPS[op](value_of(wrow, nrow, li),
                                        value_of(wrow, nrow, rhs) if is_attr else rhs)
                               for li, op, rhs, is_attr in cross_filters):
                            combined.append((wrow + nrow, wmult * nmult))
                rows = combined

        for col in new_cols:
            placed[col] = width
            width += 1
        bound.add(op_index)
        if not rows:
            return {}

    # Permute working rows back to the declared column order.
    perm = [placed[col] for col in range(sum(r.schema.arity for r in operands))]
    out: dict[Row, int] = {}
    for wrow, mult in rows:
        row = tuple(wrow[p] for p in perm)
        out[row] = out.get(row, 0) + mult
    return out


def apply_delta(rel: Relation, delta: DeltaRelation, site: str, counter: AccessCounter) -> Relation:
    """Integrate a delta into a stored relation, charging Card(rel) +
    Card(delta): the stored rows are rescanned plus the update rows."""
    if rel.schema.attributes != delta.schema.attributes:
        raise SchemaError(f"delta schema {delta.schema.name} does not match {rel.schema.name}")
    counter.add(site, rel.cardinality + delta.cardinality)
    merged = dict(rel.contents)
    for row, mult in delta.contents.items():
        updated = merged.get(row, 0) + mult
        if updated < 0:
            raise IntegrityError(f"negative multiplicity for {row!r} in {rel.schema.name}")
        if updated == 0:
            merged.pop(row, None)
        else:
            merged[row] = updated
    return Relation._trusted(rel.schema, merged)


def _combine(a: DeltaRelation, b: DeltaRelation, sign: int) -> DeltaRelation:
    if a.schema.attributes != b.schema.attributes:
        raise SchemaError(f"delta schemas {a.schema.name} and {b.schema.name} do not match")
    merged = dict(a.contents)
    for row, mult in b.contents.items():
        updated = merged.get(row, 0) + sign * mult
        if updated == 0:
            merged.pop(row, None)
        else:
            merged[row] = updated
    return DeltaRelation._trusted(a.schema, merged)


def delta_union(a: DeltaRelation, b: DeltaRelation) -> DeltaRelation:
    """Signed sum of two deltas; pure bookkeeping, charges nothing."""
    return _combine(a, b, 1)


def delta_minus(a: DeltaRelation, b: DeltaRelation) -> DeltaRelation:
    """Signed difference of two deltas; pure bookkeeping, charges nothing."""
    return _combine(a, b, -1)
