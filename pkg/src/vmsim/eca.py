"""Eager compensating bookkeeping: the unanswered-query set and COLLECT.

The hazard: while a delta query is in flight, the source keeps applying
updates, and it answers against whatever state it has when the query
arrives. The answer for an earlier update therefore already carries rows
contributed by later updates, and those same rows arrive again through
the later updates' own queries.

The fix built here: each new query subtracts, for every query still
unanswered, the part of that pending answer the new update will have
injected. Compensations nest -- a compensation can itself be
over-compensated by a yet later update -- so query expressions are flat
lists of signed product terms built by recursive substitution, which
gives the inclusion-exclusion alternation needed for three-way and
deeper overlaps. Every derived term carries a guard naming the pending
query it corrects; the source drops the term if that answer was in fact
computed before the compensated update landed (possible only when an
answer overtakes a notification on the wire).

Answers accumulate in COLLECT, a signed table, and are folded into the
materialized view only when no query is outstanding; COLLECT is empty
whenever the unanswered set is.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ProtocolError
from .messages import QueryTerm
from .relational import DeltaRelation, Schema, delta_union


@dataclass(frozen=True)
class PendingQuery:
    query_id: int
    terms: tuple[QueryTerm, ...]
    issued_at: int


def compensated_terms(base: str, delta: DeltaRelation, source_seq: int,
                      overlapping: list[PendingQuery]) -> tuple[QueryTerm, ...]:
    """Terms for a new update's query: the substituted view expression
    minus one compensating copy of every overlapping query's expression.

    Terms already carrying a literal for ``base`` are skipped: their
    answers read no live state for that operand, so the new update cannot
    leak into them. Guards inherited from a derived term are raised to
    this update's sequence: every answer along a compensation chain must
    itself contain every delta substituted outside it, or the chain term
    corrects a contribution that was never delivered.
    """
    terms = [QueryTerm(1, ((base, delta, source_seq),))]
    for query in overlapping:
        for term in query.terms:
            if base in term.substituted_bases():
                continue
            raised = tuple((qid, max(seq, source_seq)) for qid, seq in term.guards)
            terms.append(QueryTerm(
                -term.sign,
                term.substitutions + ((base, delta, source_seq),),
                raised + ((query.query_id, source_seq),),
            ))
    return tuple(terms)


class EcaState:
    """Unanswered-query set plus the COLLECT accumulator for one warehouse."""

    def __init__(self, view_schema: Schema):
        self.pending: dict[int, PendingQuery] = {}
        self.collect: DeltaRelation = DeltaRelation.empty(view_schema)

    @property
    def unanswered_ids(self) -> tuple[int, ...]:
        return tuple(self.pending)

    @property
    def collect_cardinality(self) -> int:
        return self.collect.cardinality

    def open_query(self, query: PendingQuery) -> None:
        if query.query_id in self.pending:
            raise ProtocolError(f"query id {query.query_id} reused")
        self.pending[query.query_id] = query

    def absorb_answer(self, query_id: int, answer: DeltaRelation) -> DeltaRelation | None:
        """Fold an answer into COLLECT; returns the flush delta when the
        last outstanding query is answered, else None."""
        if query_id not in self.pending:
            raise ProtocolError(f"answer for unknown query id {query_id}")
        del self.pending[query_id]
        self.collect = delta_union(self.collect, answer)
        if self.pending:
            return None
        flushed = self.collect
        self.collect = DeltaRelation.empty(flushed.schema)
        return flushed

    def check_flush_invariant(self) -> None:
        if not self.pending and not self.collect.is_empty:
            raise ProtocolError("COLLECT must be empty when no query is unanswered")
