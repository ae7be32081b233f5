"""Deterministic discrete-event loop: one source, one warehouse, delayed
messages.

Time is an integer tick counter. The source applies scheduled updates the
moment their tick is processed and answers queries against whatever state
it holds when the query arrives -- never a snapshot; that behavior is the
root cause the compensating maintainers exist to correct, so the
simulator must not soften it. Per-message delays are either declared
explicitly (anomaly schedules need exact interleavings) or drawn from the
scenario seed, and every run is a pure function of the scenario.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, replace

from .errors import ProtocolError, ScenarioError
from .messages import (
    DeltaQuery,
    FetchRelation,
    QueryAnswer,
    UpdateNotification,
    describe,
)
from .relational import (
    SOURCE,
    WAREHOUSE,
    AccessCounter,
    DeltaRelation,
    Relation,
    apply_delta,
)
from .strategies import Maintainer, MaintainerKind, ONE_LEVEL_KINDS, make_maintainer
from .views import Diagnostic, ViewHierarchy, evaluate, evaluate_hierarchy


@dataclass(frozen=True)
class SourceUpdate:
    time: int
    base: str
    delta: DeltaRelation


@dataclass(frozen=True)
class LatencyModel:
    """Delay, in ticks, between sending a message and delivering it.

    Explicit per-kind lists are consumed in send order and fall back to
    the per-kind default, then ``default``. ``random_range`` switches to
    seed-derived delays for every message instead.
    """

    default: int = 1
    notification: tuple[int, ...] = ()
    query: tuple[int, ...] = ()
    answer: tuple[int, ...] = ()
    notification_default: int | None = None
    query_default: int | None = None
    answer_default: int | None = None
    random_range: tuple[int, int] | None = None

    def validate(self) -> list[str]:
        problems = []
        values = [self.default, *(self.notification + self.query + self.answer)]
        values += [v for v in (self.notification_default, self.query_default,
                               self.answer_default) if v is not None]
        if any(not isinstance(v, int) or v < 0 for v in values):
            problems.append("latencies must be non-negative integers")
        if self.random_range is not None:
            low, high = self.random_range
            if not (isinstance(low, int) and isinstance(high, int) and 0 <= low <= high):
                problems.append("random latency range must satisfy 0 <= min <= max")
        return problems

    def delay(self, kind: str, index: int, rng: random.Random) -> int:
        if self.random_range is not None:
            return rng.randint(*self.random_range)
        declared: tuple[int, ...] = getattr(self, kind)
        if index < len(declared):
            return declared[index]
        fallback = getattr(self, f"{kind}_default")
        return self.default if fallback is None else fallback


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs: initial data, the view hierarchy, the
    maintainer kind, what the warehouse replicates, the update schedule,
    and the latency model."""

    initial: dict[str, Relation]
    hierarchy: ViewHierarchy
    kind: MaintainerKind
    replicate: frozenset[str]
    updates: tuple[SourceUpdate, ...]
    latency: LatencyModel = LatencyModel()
    seed: int = 0

    def with_kind(self, kind: MaintainerKind) -> Scenario:
        return replace(self, kind=kind)

    def validate(self) -> list[Diagnostic]:
        diags = self.hierarchy.validate()
        if diags:
            return diags
        bases = set(self.hierarchy.bases)
        for name in sorted(set(self.initial) ^ bases):
            diags.append(Diagnostic("data", name,
                                    "initial data and declared base relations must match"))
        for name in sorted(self.initial.keys() & bases):
            if self.initial[name].schema.attributes != self.hierarchy.bases[name].attributes:
                diags.append(Diagnostic("data", name, "initial rows do not fit the schema"))
        for i, update in enumerate(self.updates):
            where = f"updates[{i}]"
            if update.base not in bases:
                diags.append(Diagnostic("update", where, f"unknown base relation {update.base!r}"))
                continue
            if update.time < 0:
                diags.append(Diagnostic("update", where, "time must be non-negative"))
            if not update.delta.is_pure_insert:
                diags.append(Diagnostic("update", where, "updates are append-only"))
            if update.delta.schema.attributes != self.hierarchy.bases[update.base].attributes:
                diags.append(Diagnostic("update", where, "delta rows do not fit the schema"))
        for name in sorted(self.replicate - bases):
            diags.append(Diagnostic("replicate", name, "not a declared base relation"))
        for problem in self.latency.validate():
            diags.append(Diagnostic("latency", "latencies", problem))
        if self.kind in ONE_LEVEL_KINDS:
            primary = self.hierarchy.views.get(self.hierarchy.primary)
            if primary and not all(self.hierarchy.is_base(op) for op in primary.operands):
                diags.append(Diagnostic(
                    "kind", self.kind.value,
                    "query-the-source kinds maintain a view defined directly over "
                    "base relations"))
        return diags


class Trace:
    """Line-oriented, byte-reproducible log of one run."""

    def __init__(self):
        self.lines: list[str] = []
        self.quiescent_points: list[tuple[int, str]] = []

    def event(self, time: int, text: str) -> None:
        self.lines.append(f"t={time} {text}")

    def quiescent(self, time: int, view: Relation, counter: AccessCounter) -> None:
        snap = counter.snapshot()
        line = (f"t={time} quiescent view={view.canonical()} "
                f"wh={snap[WAREHOUSE]} src={snap[SOURCE]}")
        self.lines.append(line)
        self.quiescent_points.append((time, view.canonical()))

    def render(self) -> str:
        return "\n".join(self.lines) + "\n"


class Source:
    """The remote site: live relations, update history, query answering.

    The history makes compensation exact: a compensation term corrects
    rows inside an answer that was computed at an earlier update count,
    so its free operand slots are read from the state as of that count
    (append-only relations rewind by subtracting later deltas), never
    from the live state, which sibling updates may have advanced since.
    """

    def __init__(self, hierarchy: ViewHierarchy, relations: dict[str, Relation],
                 counter: AccessCounter):
        self.hierarchy = hierarchy
        self.relations = relations
        self.counter = counter
        self.update_seq = 0
        self.answered_at: dict[int, int] = {}
        self._history: dict[str, list[tuple[int, DeltaRelation]]] = {}
        self._rewound: dict[tuple[str, int], Relation] = {}

    def apply(self, base: str, delta: DeltaRelation) -> int:
        # Local transaction work is not maintenance traffic; no charge.
        silent = AccessCounter.disabled()
        self.relations[base] = apply_delta(self.relations[base], delta, SOURCE, silent)
        self.update_seq += 1
        self._history.setdefault(base, []).append((self.update_seq, delta))
        return self.update_seq

    def answer(self, query) -> QueryAnswer:
        if isinstance(query, FetchRelation):
            rel = self.relations.get(query.relation)
            if rel is None:
                raise ProtocolError(f"fetch of unknown relation {query.relation!r}")
            result = QueryAnswer(query.query_id, self.update_seq, relation=rel)
        elif isinstance(query, DeltaQuery):
            result = QueryAnswer(query.query_id, self.update_seq,
                                 delta=self._evaluate(query))
        else:
            raise ProtocolError(f"source cannot answer {query!r}")
        self.answered_at[query.query_id] = self.update_seq
        return result

    def state_at(self, base: str, seq: int) -> Relation:
        """The relation as of update count ``seq``."""
        live = self.relations[base]
        newer = [(s, d) for s, d in self._history.get(base, ()) if s > seq]
        if not newer:
            return live
        key = (base, seq)
        cached = self._rewound.get(key)
        if cached is not None:
            return cached
        contents = dict(live.contents)
        for _, delta in newer:
            for row, mult in delta.contents.items():
                remaining = contents.get(row, 0) - mult
                if remaining < 0:
                    raise ProtocolError(f"history of {base} is inconsistent")
                if remaining == 0:
                    contents.pop(row, None)
                else:
                    contents[row] = remaining
        rel = Relation._trusted(live.schema, contents)
        self._rewound[key] = rel
        return rel

    def _guard_holds(self, guard: tuple[int, int]) -> bool:
        query_id, min_seq = guard
        answered = self.answered_at.get(query_id)
        if answered is None:
            raise ProtocolError(
                f"compensation names query {query_id}, which has not been answered")
        return answered >= min_seq

    def _evaluate(self, query: DeltaQuery) -> DeltaRelation:
        vdef = self.hierarchy.views.get(query.view)
        if vdef is None:
            raise ProtocolError(f"delta query against unknown view {query.view!r}")
        total: dict[tuple, int] = {}
        schema = None
        for term in query.terms:
            if not all(self._guard_holds(g) for g in term.guards):
                continue
            if term.guards:
                # Free slots as of the innermost compensated answer.
                as_of = self.answered_at[term.guards[0][0]]
                catalog = {name: self.state_at(name, as_of) for name in self.relations}
            else:
                catalog = self.relations
            subs = {base: delta.as_insert_relation(base)
                    for base, delta, _ in term.substitutions}
            part = evaluate(vdef, catalog, SOURCE, self.counter,
                            substitutions=subs)
            schema = part.schema
            for row, mult in part.contents.items():
                updated = total.get(row, 0) + term.sign * mult
                if updated == 0:
                    total.pop(row, None)
                else:
                    total[row] = updated
        if schema is None:
            schema = self.hierarchy.output_schema(query.view)
        return DeltaRelation._trusted(schema, total)


@dataclass
class RunResult:
    scenario: Scenario
    warehouse: Maintainer
    source: Source
    trace: Trace
    counter: AccessCounter
    sent_messages: list
    collect_peak: int

    @property
    def final_view(self) -> Relation:
        return self.warehouse.current_view()

    @property
    def nav_rounds(self) -> tuple[int, ...]:
        return tuple(self.warehouse.nav_rounds)


class Simulator:
    """Owns the event heap and all mutable run state."""

    def __init__(self, scenario: Scenario):
        diagnostics = scenario.validate()
        if diagnostics:
            raise ScenarioError("; ".join(str(d) for d in diagnostics))
        self.scenario = scenario
        self.counter = AccessCounter()
        self.source = Source(scenario.hierarchy, dict(scenario.initial), self.counter)
        self.warehouse = make_maintainer(scenario.kind, scenario.hierarchy,
                                         scenario.initial, scenario.replicate,
                                         self.counter)
        self.trace = Trace()
        self.sent_messages: list = []
        self.collect_peak = 0
        self._rng = random.Random(scenario.seed)
        self._heap: list[tuple[int, int, str, object]] = []
        self._event_seq = 0
        self._sent_counts = {"notification": 0, "query": 0, "answer": 0}
        self._in_flight = 0
        self._last_query_eta = 0
        for update in scenario.updates:
            self._push(update.time, "apply", update)
        self._was_quiescent = True
        self.trace.quiescent(0, self.warehouse.current_view(), self.counter)

    # --- event plumbing ---

    def _push(self, time: int, channel: str, payload) -> None:
        self._event_seq += 1
        heapq.heappush(self._heap, (time, self._event_seq, channel, payload))

    def _send(self, now: int, channel: str, message) -> None:
        delay = self.scenario.latency.delay(message.kind,
                                            self._sent_counts[message.kind], self._rng)
        self._sent_counts[message.kind] += 1
        self.sent_messages.append(message)
        self._in_flight += 1
        eta = now + delay
        if channel == "source":
            # Queries are delivered in send order: a compensated query must
            # be evaluated before the query compensating it. Notifications
            # and answers (the other direction) may still overtake freely.
            eta = max(eta, self._last_query_eta)
            self._last_query_eta = eta
        self.trace.event(now, f"send {describe(message)} eta={eta}")
        self._push(eta, channel, message)

    def quiescent(self) -> bool:
        """No message in flight and no protocol state awaiting one."""
        return self._in_flight == 0 and self.warehouse.quiescent()

    def step(self) -> bool:
        """Process one event; returns False when the heap is drained."""
        if not self._heap:
            return False
        time, _, channel, payload = heapq.heappop(self._heap)
        if channel == "apply":
            seq = self.source.apply(payload.base, payload.delta)
            self.trace.event(time, f"apply base={payload.base} seq={seq} "
                                   f"delta={payload.delta.canonical()}")
            self._send(time, "warehouse", UpdateNotification(payload.base, payload.delta, seq))
        elif channel == "warehouse":
            self._in_flight -= 1
            self.trace.event(time, f"recv@warehouse {describe(payload)}")
            if isinstance(payload, UpdateNotification):
                out = self.warehouse.on_update_notification(payload, time)
            else:
                out = self.warehouse.on_query_answer(payload, time)
            for message in out:
                self._send(time, "source", message)
        elif channel == "source":
            self._in_flight -= 1
            self.trace.event(time, f"recv@source {describe(payload)}")
            self._send(time, "warehouse", self.source.answer(payload))
        else:  # pragma: no cover - channels are fixed above
            raise ProtocolError(f"unknown channel {channel!r}")

        self.collect_peak = max(self.collect_peak, self.warehouse.collect_cardinality())
        self.warehouse.check_invariants()
        now_quiescent = self.quiescent()
        if now_quiescent and not self._was_quiescent:
            self.trace.quiescent(time, self.warehouse.current_view(), self.counter)
        self._was_quiescent = now_quiescent
        return bool(self._heap)

    def run(self) -> RunResult:
        while self.step():
            pass
        if not self.quiescent():
            raise ProtocolError("event heap drained but the warehouse is not quiescent")
        return RunResult(self.scenario, self.warehouse, self.source, self.trace,
                         self.counter, self.sent_messages, self.collect_peak)


def run(scenario: Scenario) -> RunResult:
    """Run a scenario to quiescence; pure function of the scenario."""
    return Simulator(scenario).run()


def oracle_view(scenario: Scenario) -> Relation:
    """Ground truth: apply every update to the initial source state, then
    evaluate the hierarchy from scratch with counting disabled."""
    silent = AccessCounter.disabled()
    relations = dict(scenario.initial)
    for update in scenario.updates:
        relations[update.base] = apply_delta(relations[update.base], update.delta,
                                             SOURCE, silent)
    materialized = evaluate_hierarchy(scenario.hierarchy, relations, SOURCE, silent)
    return materialized[scenario.hierarchy.primary]
