"""Wire payloads exchanged between the source and the warehouse.

Notifications and answers carry the source's update sequence number so
receivers can reason about what a message reflects; everything else is
the minimum each maintainer needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

from .relational import DeltaRelation, Relation

NOTIFICATION = "notification"
QUERY = "query"
ANSWER = "answer"


@dataclass(frozen=True)
class UpdateNotification:
    base: str
    delta: DeltaRelation
    source_seq: int
    kind: ClassVar[str] = NOTIFICATION


@dataclass(frozen=True)
class FetchRelation:
    """Ask the source to ship one relation as it currently stands."""

    query_id: int
    relation: str
    kind: ClassVar[str] = QUERY


@dataclass(frozen=True)
class QueryTerm:
    """One signed product in a delta query.

    ``substitutions`` pins named operands to delta literals (with the
    source sequence of the update each came from); remaining operands are
    read from the source's live state. ``guards`` make a compensation
    term conditional: ``(query_id, min_seq)`` keeps the term only if that
    query's answer was computed at update count >= min_seq (a query not
    yet answered passes, since its answer can only be computed later).
    """

    sign: int
    substitutions: tuple[tuple[str, DeltaRelation, int], ...]
    guards: tuple[tuple[int, int], ...] = ()

    def substituted_bases(self) -> frozenset[str]:
        return frozenset(base for base, _, _ in self.substitutions)


@dataclass(frozen=True)
class DeltaQuery:
    query_id: int
    view: str
    terms: tuple[QueryTerm, ...]
    kind: ClassVar[str] = QUERY

    @property
    def compensation_count(self) -> int:
        return len(self.terms) - 1


@dataclass(frozen=True)
class QueryAnswer:
    query_id: int
    source_seq: int
    relation: Relation | None = None
    delta: DeltaRelation | None = None
    kind: ClassVar[str] = ANSWER


def _term_summary(term: QueryTerm) -> str:
    # Delta operands are inlined as literal relations.
    subs = ",".join(f"{base}:={delta.canonical()}"
                    for base, delta, _ in term.substitutions)
    guards = "".join(f"g({qid},{seq})" for qid, seq in term.guards)
    sign = "+" if term.sign > 0 else "-"
    return f"{sign}[{subs}]{guards}"


def describe(msg) -> str:
    """Stable one-line rendering used by traces."""
    if isinstance(msg, UpdateNotification):
        return f"notify base={msg.base} seq={msg.source_seq} delta={msg.delta.canonical()}"
    if isinstance(msg, FetchRelation):
        return f"fetch id={msg.query_id} rel={msg.relation}"
    if isinstance(msg, DeltaQuery):
        terms = " ".join(_term_summary(t) for t in msg.terms)
        return f"query id={msg.query_id} view={msg.view} terms={terms}"
    if isinstance(msg, QueryAnswer):
        if msg.relation is not None:
            return (f"answer id={msg.query_id} seq={msg.source_seq} "
                    f"rows={msg.relation.cardinality}")
        return (f"answer id={msg.query_id} seq={msg.source_seq} "
                f"delta={msg.delta.canonical()}")
    raise TypeError(f"not a protocol message: {msg!r}")
