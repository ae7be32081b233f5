"""The maintenance strategies behind one Maintainer interface.

Two axes: recompute the view from scratch versus apply a computed delta,
and answer maintenance from warehouse-local data alone versus query the
source. That gives four categories -- replica-backed recomputation,
source recomputation, replica-backed incremental, and compensating
incremental -- plus two derived baselines: an uncompensated incremental
maintainer that exists to exhibit the interleaving anomaly, and an
adaptive maintainer that tests at runtime whether a round can be served
locally and fetches only what is missing.

Accounting conventions the counters encode:

- Integrating a delta into a stored relation rescans it: Card(rel) +
  Card(delta), charged at the warehouse.
- Source recomputation charges its join scans at the source even though
  the join runs over shipped snapshots: every row touched is a source
  row, and the shipped copies are not warehouse state. Shipping a fetch
  answer itself charges nothing; the consumer's scans carry the cost.
- Delta queries are evaluated by the source against live state, charged
  at the source.
- The adaptive maintainer's fallback joins fetched rows with local
  replicas at the warehouse, so those scans are warehouse-side; only the
  fetch round-trips touch the source.
"""

from __future__ import annotations

from collections import ChainMap
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Mapping

from .eca import EcaState, PendingQuery, compensated_terms
from .errors import ConfigurationError, ProtocolError
from .messages import DeltaQuery, FetchRelation, QueryAnswer, UpdateNotification
from .relational import (
    SOURCE,
    WAREHOUSE,
    AccessCounter,
    DeltaRelation,
    Relation,
    apply_delta,
)
from .views import (
    ViewHierarchy,
    affected_order,
    delta_insert,
    delta_round,
    evaluate,
    evaluate_hierarchy,
)

Message = object


class MaintainerKind(str, Enum):
    SMR = "SMR"
    NSMR = "NSMR"
    SMI = "SMI"
    NSMI_ECA = "NSMI_ECA"
    NSMI_NAIVE = "NSMI_NAIVE"
    RUNTIME_SM = "RUNTIME_SM"


REPLICATING_KINDS = frozenset({MaintainerKind.SMR, MaintainerKind.SMI, MaintainerKind.RUNTIME_SM})
ONE_LEVEL_KINDS = frozenset({MaintainerKind.NSMI_ECA, MaintainerKind.NSMI_NAIVE,
                             MaintainerKind.RUNTIME_SM})


class Maintainer:
    """Warehouse-side state machine driven by the simulation event loop.

    Handlers return outbound messages; they never block. ``store`` holds
    whatever the strategy materializes beyond the primary view: base
    replicas and auxiliary view materializations.
    """

    kind: ClassVar[MaintainerKind]

    def __init__(self, hierarchy: ViewHierarchy, counter: AccessCounter,
                 view: Relation, store: dict[str, Relation],
                 replicated: frozenset[str]):
        self.hierarchy = hierarchy
        self.counter = counter
        self.view = view
        self.store = store
        self.replicated = replicated
        self.nav_rounds: list[int] = []
        # One entry per view integration: (view rows, delta rows, rows charged).
        self.flush_log: list[tuple[int, int, int]] = []
        self._query_seq = 0

    # --- interface ---

    def on_update_notification(self, note: UpdateNotification, now: int) -> list[Message]:
        raise NotImplementedError

    def on_query_answer(self, answer: QueryAnswer, now: int) -> list[Message]:
        raise ProtocolError(f"{self.kind.value} received an unexpected answer")

    def current_view(self) -> Relation:
        return self.view

    def space_usage(self) -> int:
        total = self.view.space_bytes
        total += sum(self.store[name].space_bytes for name in sorted(self.store))
        total += self.collect_cardinality() * self.view.schema.tuple_size_bytes
        return total

    def pending_queries(self) -> tuple[int, ...]:
        return ()

    def quiescent(self) -> bool:
        return not self.pending_queries()

    def collect_cardinality(self) -> int:
        return 0

    def check_invariants(self) -> None:
        """Hook the event loop calls after every event."""

    # --- shared helpers ---

    def _next_query_id(self) -> int:
        self._query_seq += 1
        return self._query_seq

    def _maintain_replica(self, base: str, delta: DeltaRelation) -> bool:
        if base not in self.store or base not in self.replicated:
            return False
        self.store[base] = apply_delta(self.store[base], delta, WAREHOUSE, self.counter)
        return True

    def _primary_operands(self) -> tuple[str, ...]:
        return self.hierarchy.views[self.hierarchy.primary].operands


class ReplicaRecompute(Maintainer):
    """Re-evaluate affected views from local replicas on every update."""

    kind = MaintainerKind.SMR

    def on_update_notification(self, note, now):
        plan = affected_order(self.hierarchy, note.base)
        touched: set[str] = set()
        if self._maintain_replica(note.base, note.delta):
            touched.add(note.base)
        elif plan:
            raise ConfigurationError(
                f"recomputation needs a replica of {note.base}, none is configured")
        if plan and not note.delta.is_empty:
            for name in plan:
                vdef = self.hierarchy.views[name]
                touched.update(op for op in vdef.operands if self.hierarchy.is_base(op))
                result = evaluate(vdef, self.store, WAREHOUSE, self.counter)
                if name == self.hierarchy.primary:
                    self.view = result
                else:
                    self.store[name] = result
        self.nav_rounds.append(len(touched))
        return []


class SourceRecompute(Maintainer):
    """Fetch every base relation on each update and rebuild the view.

    Fetch answers reflect the source's live state at answer time, so a
    round's snapshots can mix update generations. The warehouse keeps the
    freshest answer seen per relation (by source sequence) and rebuilds
    from those whenever a round completes; the cache is dropped once no
    round is outstanding, leaving the view as the only stored relation.
    """

    kind = MaintainerKind.NSMR

    def __init__(self, *args):
        super().__init__(*args)
        self._bases = tuple(sorted(self.hierarchy.bases_under(self.hierarchy.primary)))
        self._rounds: dict[int, set[int]] = {}
        self._fetch_targets: dict[int, tuple[int, str]] = {}
        self._snapshots: dict[str, tuple[int, Relation]] = {}
        self._round_seq = 0

    def on_update_notification(self, note, now):
        # Update contents are ignored; the notification alone triggers a refetch.
        self._round_seq += 1
        queries = []
        qids = set()
        for base in self._bases:
            qid = self._next_query_id()
            self._fetch_targets[qid] = (self._round_seq, base)
            qids.add(qid)
            queries.append(FetchRelation(qid, base))
        self._rounds[self._round_seq] = qids
        self.nav_rounds.append(0)
        return queries

    def on_query_answer(self, answer, now):
        target = self._fetch_targets.pop(answer.query_id, None)
        if target is None:
            raise ProtocolError(f"answer for unknown query id {answer.query_id}")
        round_id, base = target
        held = self._snapshots.get(base)
        if held is None or answer.source_seq >= held[0]:
            self._snapshots[base] = (answer.source_seq, answer.relation)
        outstanding = self._rounds[round_id]
        outstanding.discard(answer.query_id)
        if not outstanding:
            del self._rounds[round_id]
            self._recompute()
            if not self._rounds:
                self._snapshots.clear()
        return []

    def _recompute(self):
        catalog: dict[str, Relation] = {base: rel for base, (_, rel) in self._snapshots.items()}
        supporting = self.hierarchy.supporting_views(self.hierarchy.primary)
        for name in self.hierarchy.topological_views():
            if name in supporting:
                catalog[name] = evaluate(self.hierarchy.views[name], catalog,
                                         SOURCE, self.counter)
        self.view = catalog[self.hierarchy.primary]
        # The shipped result is written through into the only stored relation.
        self.counter.add(WAREHOUSE, self.view.cardinality)

    def pending_queries(self):
        return tuple(sorted(self._fetch_targets))


class ReplicaIncremental(Maintainer):
    """Propagate deltas leaves-first through locally stored relations."""

    kind = MaintainerKind.SMI

    def on_update_notification(self, note, now):
        base, delta = note.base, note.delta
        plan = affected_order(self.hierarchy, base)
        touched: set[str] = set()
        round_old: dict[str, Relation] = {}
        if base in self.store:
            round_old[base] = self.store[base]
        if self._maintain_replica(base, delta):
            touched.add(base)
        if not plan or delta.is_empty:
            self.nav_rounds.append(len(touched))
            return []

        pending: dict[str, DeltaRelation] = {base: delta}
        old_catalog = ChainMap(round_old, self.store)
        for name in plan:
            vdef = self.hierarchy.views[name]
            changed = {op for op in vdef.operands
                       if op in pending and not pending[op].is_empty}
            if not changed:
                continue
            for op in vdef.operands:
                if op not in changed and op not in self.store:
                    raise ConfigurationError(
                        f"view {name} needs {op} locally; this configuration is "
                        f"not self-maintainable")
            touched.update(op for op in vdef.operands
                           if op not in changed and self.hierarchy.is_base(op))
            view_delta = delta_round(vdef, {op: pending[op] for op in changed},
                                     old_catalog, self.store, WAREHOUSE, self.counter)
            pending[name] = view_delta
            if view_delta.is_empty:
                continue
            if name == self.hierarchy.primary:
                self.view = apply_delta(self.view, view_delta, WAREHOUSE, self.counter)
            else:
                round_old[name] = self.store[name]
                self.store[name] = apply_delta(self.store[name], view_delta,
                                               WAREHOUSE, self.counter)
        self.nav_rounds.append(len(touched))
        return []


class _IncrementalQuerier(Maintainer):
    """Shared plumbing for the two query-the-source incremental kinds."""

    def _should_query(self, note) -> bool:
        return note.base in self._primary_operands() and not note.delta.is_empty


class CompensatingIncremental(_IncrementalQuerier):
    """Send compensated delta queries; integrate answers through COLLECT.

    Compensation targets every query whose answer can carry the new
    update's contribution: everything still unanswered, and -- because an
    answer may be delivered before a slower notification it already
    reflects -- recently answered queries whose answers were computed at
    a source sequence at or past the new update's. A completed query is
    forgotten once every sequence up to its answer's has been seen, since
    no later notification can then overlap it.
    """

    kind = MaintainerKind.NSMI_ECA

    def __init__(self, *args):
        super().__init__(*args)
        self.eca = EcaState(self.view.schema)
        self.sent_queries: list[DeltaQuery] = []
        self._completed: dict[int, tuple[PendingQuery, int]] = {}
        self._seen_seqs: set[int] = set()
        self._contiguous_seq = 0

    def _note_seen(self, seq: int) -> None:
        self._seen_seqs.add(seq)
        while self._contiguous_seq + 1 in self._seen_seqs:
            self._contiguous_seq += 1
            self._seen_seqs.discard(self._contiguous_seq)

    def on_update_notification(self, note, now):
        self._note_seen(note.source_seq)
        if not self._should_query(note):
            self._prune_completed()
            return []
        qid = self._next_query_id()
        overlapping = list(self.eca.pending.values())
        overlapping.extend(query for query, answer_seq in self._completed.values()
                           if answer_seq >= note.source_seq)
        terms = compensated_terms(note.base, note.delta, note.source_seq, overlapping)
        self._prune_completed()
        self.eca.open_query(PendingQuery(qid, terms, issued_at=now))
        query = DeltaQuery(qid, self.hierarchy.primary, terms)
        self.sent_queries.append(query)
        return [query]

    def on_query_answer(self, answer, now):
        pending = self.eca.pending.get(answer.query_id)
        flushed = self.eca.absorb_answer(answer.query_id, answer.delta)
        self._completed[answer.query_id] = (pending, answer.source_seq)
        self._prune_completed()
        if flushed is not None:
            before = self.counter[WAREHOUSE]
            view_card = self.view.cardinality
            self.view = apply_delta(self.view, flushed, WAREHOUSE, self.counter)
            self.flush_log.append((view_card, flushed.cardinality,
                                   self.counter[WAREHOUSE] - before))
        return []

    def _prune_completed(self) -> None:
        stale = [qid for qid, (_, answer_seq) in self._completed.items()
                 if answer_seq <= self._contiguous_seq]
        for qid in stale:
            del self._completed[qid]

    def pending_queries(self):
        return self.eca.unanswered_ids

    def collect_cardinality(self):
        return self.eca.collect_cardinality

    def check_invariants(self):
        self.eca.check_flush_invariant()


class UncompensatedIncremental(_IncrementalQuerier):
    """Delta queries with no compensation: correct only when nothing
    interleaves a query round-trip. Kept as the anomaly witness."""

    kind = MaintainerKind.NSMI_NAIVE

    def __init__(self, *args):
        super().__init__(*args)
        self._open: set[int] = set()
        self.sent_queries: list[DeltaQuery] = []

    def on_update_notification(self, note, now):
        if not self._should_query(note):
            return []
        qid = self._next_query_id()
        query = DeltaQuery(qid, self.hierarchy.primary,
                           compensated_terms(note.base, note.delta, note.source_seq, []))
        self._open.add(qid)
        self.sent_queries.append(query)
        return [query]

    def on_query_answer(self, answer, now):
        if answer.query_id not in self._open:
            raise ProtocolError(f"answer for unknown query id {answer.query_id}")
        self._open.discard(answer.query_id)
        before = self.counter[WAREHOUSE]
        view_card = self.view.cardinality
        self.view = apply_delta(self.view, answer.delta, WAREHOUSE, self.counter)
        self.flush_log.append((view_card, answer.delta.cardinality,
                               self.counter[WAREHOUSE] - before))
        return []

    def pending_queries(self):
        return tuple(sorted(self._open))


@dataclass
class _FetchRound:
    seq: int
    base: str
    delta: DeltaRelation
    local: dict[str, Relation]
    outstanding: dict[int, str] = field(default_factory=dict)
    fetched: dict[str, tuple[Relation, int]] = field(default_factory=dict)


class AdaptiveIncremental(Maintainer):
    """Test per update whether the round is answerable locally; fetch the
    missing sibling relations when it is not.

    Correctness under reordered messages relies on every round reading
    each operand as of the round's own update sequence:

    - notifications are processed in source-sequence order (out-of-order
      arrivals wait in a parking buffer), so local replicas hold exactly
      the earlier updates when a round starts;
    - a fetched snapshot reflects the source's live state at answer time,
      so the round holds until every update the snapshot can contain has
      been processed, then subtracts the logged deltas newer than its own
      sequence before joining.

    That makes each cross pair of updates count exactly once: in the
    later round, never the earlier one.
    """

    kind = MaintainerKind.RUNTIME_SM

    def __init__(self, *args):
        super().__init__(*args)
        self._next_seq = 1
        self._parked: dict[int, UpdateNotification] = {}
        self._delta_log: dict[str, list[tuple[int, DeltaRelation]]] = {}
        self._rounds: dict[int, _FetchRound] = {}
        self._qid_round: dict[int, int] = {}

    def on_update_notification(self, note, now):
        self._parked[note.source_seq] = note
        out: list[Message] = []
        while self._next_seq in self._parked:
            out.extend(self._process(self._parked.pop(self._next_seq)))
            self._next_seq += 1
        self._complete_ready()
        return out

    def on_query_answer(self, answer, now):
        round_seq = self._qid_round.pop(answer.query_id, None)
        if round_seq is None:
            raise ProtocolError(f"answer for unknown query id {answer.query_id}")
        round_ = self._rounds[round_seq]
        operand = round_.outstanding.pop(answer.query_id)
        round_.fetched[operand] = (answer.relation, answer.source_seq)
        self._complete_ready()
        return []

    def _process(self, note) -> list[Message]:
        base, delta, seq = note.base, note.delta, note.source_seq
        self._delta_log.setdefault(base, []).append((seq, delta))
        touched: set[str] = set()
        if self._maintain_replica(base, delta):
            touched.add(base)
        operands = self._primary_operands()
        if base not in operands or delta.is_empty:
            self.nav_rounds.append(len(touched))
            return []
        missing = [op for op in operands if op != base and op not in self.store]
        if not missing:
            vdef = self.hierarchy.views[self.hierarchy.primary]
            view_delta = delta_insert(vdef, base, delta, self.store,
                                      WAREHOUSE, self.counter)
            touched.update(op for op in operands if op != base)
            self._integrate(view_delta)
            self.nav_rounds.append(len(touched))
            return []
        round_ = _FetchRound(seq=seq, base=base, delta=delta,
                             local={op: self.store[op] for op in operands
                                    if op != base and op in self.store})
        touched.update(round_.local)
        queries = []
        for op in missing:
            qid = self._next_query_id()
            round_.outstanding[qid] = op
            self._qid_round[qid] = seq
            queries.append(FetchRelation(qid, op))
        self._rounds[seq] = round_
        self.nav_rounds.append(len(touched))
        return queries

    def _complete_ready(self) -> None:
        for seq in sorted(self._rounds):
            round_ = self._rounds[seq]
            if round_.outstanding:
                continue
            if any(fetch_seq >= self._next_seq
                   for _, fetch_seq in round_.fetched.values()):
                continue  # snapshot may contain updates not yet processed
            catalog = dict(round_.local)
            for op, (rel, fetch_seq) in round_.fetched.items():
                catalog[op] = self._rewound(rel, op, after=round_.seq, upto=fetch_seq)
            vdef = self.hierarchy.views[self.hierarchy.primary]
            view_delta = delta_insert(vdef, round_.base, round_.delta, catalog,
                                      WAREHOUSE, self.counter)
            self._integrate(view_delta)
            del self._rounds[seq]

    def _rewound(self, rel: Relation, base: str, after: int, upto: int) -> Relation:
        """Snapshot of a fetched relation as of sequence ``after``: remove
        the logged deltas in (after, upto]. Bookkeeping, not a scan."""
        contents = dict(rel.contents)
        for seq, delta in self._delta_log.get(base, ()):
            if after < seq <= upto:
                for row, mult in delta.contents.items():
                    remaining = contents.get(row, 0) - mult
                    if remaining < 0:
                        raise ProtocolError(
                            f"fetched snapshot of {base} is missing rows it must contain")
                    if remaining == 0:
                        contents.pop(row, None)
                    else:
                        contents[row] = remaining
        return Relation._trusted(rel.schema, contents)

    def _integrate(self, view_delta: DeltaRelation) -> None:
        if view_delta.is_empty:
            return
        self.view = apply_delta(self.view, view_delta, WAREHOUSE, self.counter)

    def pending_queries(self):
        return tuple(sorted(self._qid_round))

    def quiescent(self):
        return not self._parked and not self._rounds


_MAINTAINERS = {
    MaintainerKind.SMR: ReplicaRecompute,
    MaintainerKind.NSMR: SourceRecompute,
    MaintainerKind.SMI: ReplicaIncremental,
    MaintainerKind.NSMI_ECA: CompensatingIncremental,
    MaintainerKind.NSMI_NAIVE: UncompensatedIncremental,
    MaintainerKind.RUNTIME_SM: AdaptiveIncremental,
}


def effective_replication(kind: MaintainerKind, declared: frozenset[str]) -> frozenset[str]:
    """Kinds that never store source data keep an empty local store."""
    return declared if kind in REPLICATING_KINDS else frozenset()


def make_maintainer(kind: MaintainerKind, hierarchy: ViewHierarchy,
                    initial_source: Mapping[str, Relation],
                    replicated: frozenset[str],
                    counter: AccessCounter) -> Maintainer:
    """Build a maintainer with the view (and, per kind, replicas and
    auxiliary materializations) seeded from the initial source state."""
    replicated = effective_replication(kind, replicated)
    silent = AccessCounter.disabled()
    materialized = evaluate_hierarchy(hierarchy, initial_source, WAREHOUSE, silent)
    view = materialized[hierarchy.primary]
    store: dict[str, Relation] = {}
    for base in sorted(replicated):
        store[base] = initial_source[base]
    if kind in (MaintainerKind.SMR, MaintainerKind.SMI):
        for name in hierarchy.topological_views():
            if name != hierarchy.primary:
                store[name] = materialized[name]
    return _MAINTAINERS[kind](hierarchy, counter, view, store, replicated)
