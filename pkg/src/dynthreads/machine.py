"""Small-step operational semantics: thread pools and labelled transitions.

A configuration holds a finite world of runtime thread IDs, a waiting
relation ``prec`` (``b prec a``: thread ``a`` waits for ``b``), and a map
from IDs to computations or ``finished``.  A thread may step only when
everything it waits for has finished; ``fork`` steps spawn a child whose ID
extends the parent's path by the next spawn ordinal, so fresh names do not
depend on the schedule and configurations from different interleavings are
directly comparable.

``prec`` pairs between finished threads are never garbage-collected; the
relation only grows and is kept transitively closed.

Observations: the labelled steps of a terminated run, ordered by the final
waiting relation, form a pomset (see :class:`dynthreads.posets.Pomset`).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Optional, Union

from .lang import (
    ApplyC,
    CaseV,
    Comp,
    ConstV,
    InjV,
    LambdaV,
    LangType,
    LetC,
    ProjC,
    Ret,
    Sum,
    TID,
    Tid,
    TidV,
    TupleV,
    UNIT,
    UNIT_V,
    check_comp,
    is_core,
    print_comp,
    subst_value,
    tid_str,
    tids_of_value,
)
from .posets import Pomset


class MachineError(Exception):
    pass


class StuckThread(MachineError):
    pass


class Deadlock(MachineError):
    pass


class FuelExhausted(MachineError):
    pass


FINISHED = "finished"
ThreadState = Union[Comp, str]


@dataclass(frozen=True)
class Configuration:
    """World, waiting relation, and thread map, all hashable for dedup.

    Spawn counters are not stored: threads never leave the world, so the
    next spawn ordinal of ``a`` is one plus the number of direct children
    of ``a`` present.
    """

    world: frozenset  # frozenset[Tid]
    prec: frozenset  # frozenset[tuple[Tid, Tid]]  (b, a): a waits for b
    threads: tuple  # tuple[tuple[Tid, ThreadState], ...] sorted by tid

    def __hash__(self) -> int:
        # exploration hashes configurations constantly; walking the thread
        # syntax trees every time dominates, so cache the hash
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.world, self.prec, self.threads))
            self.__dict__["_hash"] = h
        return h

    @staticmethod
    def initial(comp: Comp, tid: Tid = ()) -> "Configuration":
        return Configuration(frozenset({tid}), frozenset(), ((tid, comp),))

    @cached_property
    def thread_map(self) -> dict:
        return dict(self.threads)

    def thread(self, tid: Tid) -> ThreadState:
        return self.thread_map[tid]

    def is_terminal(self) -> bool:
        return all(state == FINISHED for _, state in self.threads)

    def spawn_count(self, tid: Tid) -> int:
        depth = len(tid) + 1
        return sum(1 for p in self.world if len(p) == depth and p[:-1] == tid)

    def waited_by(self, tid: Tid) -> frozenset:
        return frozenset(b for (b, a) in self.prec if a == tid)


@dataclass(frozen=True)
class StepLabel:
    acting: Tid
    action: Optional[str]  # None for silent steps


@dataclass(frozen=True)
class _LocalOut:
    action: Optional[str]
    threads: tuple  # tuple[tuple[Tid, ThreadState], ...]
    new_prec: frozenset


def _local_step(comp: Comp, tid: Tid, alloc: Callable[[], Tid]) -> Optional[_LocalOut]:
    """One thread-local reduction of ``comp`` running as ``tid``."""
    match comp:
        case ApplyC(ConstV("fork", _), _):
            child = alloc()
            fork_result = Sum((TID, UNIT))
            return _LocalOut(
                None,
                (
                    (tid, Ret(InjV(1, TidV(child), fork_result))),
                    (child, Ret(InjV(2, UNIT_V, fork_result))),
                ),
                frozenset(),
            )
        case ApplyC(ConstV("wait", _), v):
            waits = frozenset((b, tid) for b in tids_of_value(v))
            return _LocalOut(None, ((tid, Ret(UNIT_V)),), waits)
        case ApplyC(ConstV("stop", _), _):
            return _LocalOut(None, ((tid, FINISHED),), frozenset())
        case ApplyC(ConstV("printstop", action), _):
            return _LocalOut(action, ((tid, FINISHED),), frozenset())
        case ApplyC(ConstV(name, _), _):
            raise StuckThread(f"constant {name!r} has no reduction rule; desugar first")
        case ApplyC(LambdaV(param, _, body), v):
            return _LocalOut(None, ((tid, subst_value(body, param, v)),), frozenset())
        case ApplyC(fn, _):
            raise StuckThread(f"cannot apply non-function value {print_comp(Ret(fn))!r}")
        case ProjC(index, TupleV(items)):
            if not 1 <= index <= len(items):
                raise StuckThread(f"proj{index} of a {len(items)}-tuple")
            return _LocalOut(None, ((tid, Ret(items[index - 1])),), frozenset())
        case CaseV(InjV(index, payload), branches):
            if not 1 <= index <= len(branches):
                raise StuckThread(f"inj{index} with {len(branches)} branches")
            var, body = branches[index - 1]
            return _LocalOut(None, ((tid, subst_value(body, var, payload)),), frozenset())
        case LetC(var, Ret(v), body):
            return _LocalOut(None, ((tid, subst_value(body, var, v)),), frozenset())
        case LetC(var, bound, body):
            inner = _local_step(bound, tid, alloc)
            if inner is None:
                return None
            # every spawned thread continues with its own copy of the
            # continuation; finished threads stay finished
            wrapped = tuple(
                (t, state if state == FINISHED else LetC(var, state, body))
                for t, state in inner.threads
            )
            return _LocalOut(inner.action, wrapped, inner.new_prec)
        case Ret(_):
            return None
        case ProjC(_, _) | CaseV(_, _):
            raise StuckThread(f"no rule for {print_comp(comp)!r}")
    raise StuckThread(f"not a core computation: {comp!r}")


# Thread-local steps depend only on (computation, tid, next spawn ordinal),
# and identical thread states recur across thousands of interleavings, so
# memoize them.  Interning the threads tuple and waiting relation lets
# configuration comparisons hit identity fast paths.
_LOCAL_MEMO: dict = {}
_INTERN: dict = {}


def _intern(value):
    return _INTERN.setdefault(value, value)


def enabled_steps(c: Configuration) -> list[tuple[StepLabel, Configuration]]:
    """All global steps: one per runnable thread, in tid order."""
    out = []
    for tid, state in c.threads:
        if state == FINISHED:
            continue
        waited = c.waited_by(tid)
        blocked = False
        for b in waited:
            if b not in c.world or c.thread_map.get(b) != FINISHED:
                blocked = True
                break
        if blocked:
            continue

        ordinal = c.spawn_count(tid) + 1
        key = (state, tid, ordinal)
        if key in _LOCAL_MEMO:
            local = _LOCAL_MEMO[key]
        else:
            local = _local_step(state, tid, lambda: tid + (ordinal,))
            _LOCAL_MEMO[key] = local
        if local is None:
            continue
        spawned = tuple(t for t, _ in local.threads)
        inherited = {(b, t) for b in waited for t in spawned}
        prec = _intern(_close_with(c.prec, set(local.new_prec) | inherited))
        threads = dict(c.threads)
        threads.update(local.threads)
        world = c.world if len(spawned) == 1 else c.world | frozenset(spawned)
        new = Configuration(
            _intern(world),
            prec,
            _intern(tuple(sorted(threads.items()))),
        )
        out.append((StepLabel(tid, local.action), new))
    return out


def _close_with(closed: frozenset, new_edges: set) -> frozenset:
    """Transitive closure of an already-closed relation plus extra edges."""
    if not new_edges or new_edges <= closed:
        return closed
    succs: dict = {}
    for a, b in closed:
        succs.setdefault(a, set()).add(b)
    for a, b in new_edges:
        succs.setdefault(a, set()).add(b)
    total = set()
    for start, direct in succs.items():
        seen: set = set()
        stack = list(direct)
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succs.get(x, ()))
        total.update((start, y) for y in seen)
    return frozenset(total)


# --- running ---------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    terminal: Configuration
    events: tuple  # tuple[StepLabel, ...], every step
    pomset: Pomset
    trace: tuple  # tuple[str, ...] human-readable lines


def observation(events: Iterable[StepLabel], final: Configuration) -> Pomset:
    """The pomset of a terminated run: labelled steps ordered by the final
    waiting relation."""
    labelled = [e for e in events if e.action is not None]
    labels = {tid_str(e.acting): e.action for e in labelled}
    acting = {e.acting for e in labelled}
    order = {
        (tid_str(b), tid_str(a))
        for (b, a) in final.prec
        if b in acting and a in acting
    }
    return Pomset.of(labels, order)


def run(
    comp: Comp,
    policy: str = "lowest-tid",
    seed: Optional[int] = None,
    fuel: int = 100_000,
):
    """Run to termination under a scheduler.

    ``lowest-tid`` and ``random`` (seeded) return one :class:`RunResult`;
    ``exhaustive`` returns a tuple of run results, one per terminal
    configuration reached over all schedules (states deduplicated).
    """
    if not is_core(comp):
        raise MachineError("run needs a desugared computation")
    if policy == "exhaustive":
        return run_exhaustive(comp, max_states=fuel)
    if policy == "random" and seed is None:
        raise MachineError("the random policy requires a seed")
    rng = random.Random(seed)
    c = Configuration.initial(comp)
    events: list[StepLabel] = []
    trace: list[str] = []
    for _ in range(fuel):
        steps = enabled_steps(c)
        if not steps:
            if c.is_terminal():
                return RunResult(c, tuple(events), observation(events, c), tuple(trace))
            raise Deadlock(
                "non-terminal configuration with no enabled steps: "
                + ", ".join(tid_str(t) for t, s in c.threads if s != FINISHED)
            )
        if policy == "lowest-tid":
            label, c = steps[0]
        elif policy == "random":
            label, c = rng.choice(steps)
        else:
            raise MachineError(f"unknown policy {policy!r}")
        events.append(label)
        trace.append(_trace_line(label, c))
    raise FuelExhausted(f"no terminal configuration within {fuel} steps")


def _trace_line(label: StepLabel, after: Configuration) -> str:
    state = after.thread(label.acting)
    if state == FINISHED:
        summary = "finished"
    else:
        summary = print_comp(state)
        if len(summary) > 60:
            summary = summary[:57] + "..."
    mark = label.action if label.action is not None else "·"
    return f"{tid_str(label.acting)} {mark} -> {summary}"


# --- exhaustive exploration ----------------------------------------------------------

@dataclass(frozen=True)
class ExploreResult:
    states: int
    terminals: tuple  # tuple[Configuration, ...]
    observations: tuple  # tuple[Pomset, ...] one per terminal
    traces: frozenset  # frozenset[tuple[str, ...]] distinct labelled traces
    all_iso: bool
    traces_match_linearizations: bool


def _state_graph(comp: Comp, max_states: int):
    """Build the full schedule graph with configuration dedup."""
    if not is_core(comp):
        raise MachineError("exploration needs a desugared computation")
    c0 = Configuration.initial(comp)
    steps_of: dict[Configuration, list[tuple[StepLabel, Configuration]]] = {}
    frontier = [c0]
    first_event: dict[Configuration, tuple[Configuration, StepLabel]] = {}
    while frontier:
        c = frontier.pop()
        if c in steps_of:
            continue
        if len(steps_of) >= max_states:
            raise FuelExhausted(f"state budget {max_states} exhausted")
        steps = enabled_steps(c)
        steps_of[c] = steps
        for label, nxt in steps:
            if nxt not in steps_of and nxt not in first_event:
                first_event[nxt] = (c, label)
            frontier.append(nxt)
        if not steps and not c.is_terminal():
            raise Deadlock(f"deadlocked configuration reached from {tid_str(())}")
    return c0, steps_of, first_event


def _witness_events(c0, terminal, first_event) -> list[StepLabel]:
    events: list[StepLabel] = []
    node = terminal
    while node != c0:
        prev, label = first_event[node]
        events.append(label)
        node = prev
    events.reverse()
    return events


def run_exhaustive(comp: Comp, max_states: int = 100_000) -> tuple:
    """One run result per terminal configuration over all schedules."""
    c0, steps_of, first_event = _state_graph(comp, max_states)
    results = []
    for terminal in sorted(
        (c for c, steps in steps_of.items() if not steps), key=lambda c: c.threads
    ):
        events = _witness_events(c0, terminal, first_event)
        results.append(
            RunResult(terminal, tuple(events), observation(events, terminal), ())
        )
    return tuple(results)


def explore(comp: Comp, max_states: int = 10_000) -> ExploreResult:
    """Explore every schedule (states deduplicated by configuration
    equality, which the deterministic naming scheme makes meaningful).

    Reports the distinct labelled traces, one observation per terminal
    configuration, whether all observations are isomorphic, and whether the
    trace set equals the linearizations of the observed pomset.
    """
    c0, steps_of, first_event = _state_graph(comp, max_states)

    terminals = sorted(
        (c for c, steps in steps_of.items() if not steps), key=lambda c: c.threads
    )

    observations = [
        observation(_witness_events(c0, terminal, first_event), terminal)
        for terminal in terminals
    ]

    traces = _label_traces(c0, steps_of)

    all_iso = all(
        observations[0].iso_to(pom) is not None for pom in observations[1:]
    )
    linearizations = set()
    for pom in observations:
        linearizations |= pom.linearizations()
    return ExploreResult(
        states=len(steps_of),
        terminals=tuple(terminals),
        observations=tuple(observations),
        traces=frozenset(traces),
        all_iso=all_iso,
        traces_match_linearizations=(set(traces) == linearizations),
    )


def _label_traces(c0: Configuration, steps_of) -> set[tuple[str, ...]]:
    memo: dict[Configuration, frozenset] = {}

    def go(c: Configuration) -> frozenset:
        if c in memo:
            return memo[c]
        steps = steps_of[c]
        if not steps:
            result = frozenset({()})
        else:
            acc = set()
            for label, nxt in steps:
                for rest in go(nxt):
                    acc.add(((label.action,) + rest) if label.action else rest)
            result = frozenset(acc)
        memo[c] = result
        return result

    return set(go(c0))


# --- confluence -----------------------------------------------------------------------

@dataclass(frozen=True)
class ConfluenceReport:
    ok: bool
    states: int
    truncated: bool
    detail: Optional[str]


def check_confluence(comp: Comp, max_states: int = 10_000) -> ConfluenceReport:
    """Check, over reachable configurations up to the state budget:
    per-thread determinacy, the one-step diamond property for distinct
    threads, and the prec-growth law (a new wait edge into an old thread
    comes from the acting thread or was already implied).

    Hitting the budget is reported as a truncated (but violation-free)
    check, not a failure.
    """
    if not is_core(comp):
        raise MachineError("check_confluence needs a desugared computation")
    c0 = Configuration.initial(comp)
    cache: dict[Configuration, list[tuple[StepLabel, Configuration]]] = {}

    def steps_of(c: Configuration) -> list[tuple[StepLabel, Configuration]]:
        steps = cache.get(c)
        if steps is None:
            steps = enabled_steps(c)
            cache[c] = steps
        return steps

    checked: set[Configuration] = set()
    frontier = [c0]
    truncated = False
    while frontier:
        c = frontier.pop()
        if c in checked:
            continue
        if len(checked) >= max_states:
            truncated = True
            break
        checked.add(c)
        steps = steps_of(c)
        frontier.extend(nxt for _, nxt in steps)

        acting = [label.acting for label, _ in steps]
        if len(set(acting)) != len(acting):
            return ConfluenceReport(
                False, len(checked), truncated,
                "thread with two distinct steps in one configuration",
            )

        for label, nxt in steps:
            a = label.acting
            for x, y in nxt.prec - c.prec:
                if y in c.world and not (
                    (x, y) in c.prec or a == y or (a, y) in c.prec
                ):
                    return ConfluenceReport(
                        False,
                        len(checked),
                        truncated,
                        f"prec pair ({tid_str(x)},{tid_str(y)}) not justified by "
                        f"acting thread {tid_str(a)}",
                    )

        for i, (l1, c1) in enumerate(steps):
            for l2, c2 in steps[i + 1:]:
                after1 = {lab.acting: (lab, nxt) for lab, nxt in steps_of(c1)}
                after2 = {lab.acting: (lab, nxt) for lab, nxt in steps_of(c2)}
                if l2.acting not in after1 or l1.acting not in after2:
                    return ConfluenceReport(
                        False, len(checked), truncated,
                        f"steps of {tid_str(l1.acting)} and {tid_str(l2.acting)} "
                        "do not commute (one disables the other)",
                    )
                lab12, c12 = after1[l2.acting]
                lab21, c21 = after2[l1.acting]
                if lab12.action != l2.action or lab21.action != l1.action or c12 != c21:
                    return ConfluenceReport(
                        False, len(checked), truncated,
                        f"no diamond for {tid_str(l1.acting)} / {tid_str(l2.acting)}",
                    )
    return ConfluenceReport(True, len(checked), truncated, None)


# --- well-formed configurations ----------------------------------------------------

def check_config_well_formed(
    c: Configuration,
    result_type: LangType,
    order: tuple,  # tuple[Tid, ...]: the potential creation order, smallest first
    external: frozenset = frozenset(),
) -> Optional[str]:
    """The four conditions for a configuration to look like a family of
    siblings created in the given linear order."""
    if set(order) != set(c.world) or len(order) != len(c.world):
        return "order is not a linear order on the world"
    position = {tid: i for i, tid in enumerate(order)}
    prec = set(c.prec)
    for b, a in prec:
        for x, y in prec:
            if a == x and (b, y) not in prec:
                return f"prec not transitive: {tid_str(b)} and {tid_str(y)}"
    for b, a in prec:
        if b not in c.world and b not in external:
            return f"{tid_str(a)} waits on unknown thread {tid_str(b)}"
    for b, a in prec:
        if b in c.world and a in c.world and position[b] >= position[a]:
            return f"{tid_str(a)} waits on later sibling {tid_str(b)}"
    for tid, state in c.threads:
        if state == FINISHED:
            continue
        visible = frozenset(
            t for t in c.world if position[t] < position[tid]
        ) | external
        try:
            check_comp({}, visible, state, result_type)
        except Exception as exc:  # noqa: BLE001 - report, don't raise
            return f"thread {tid_str(tid)} does not typecheck at the thread type: {exc}"
    return None


def find_extending_order(
    c: Configuration,
    result_type: LangType,
    prev_order: tuple,
    external: frozenset = frozenset(),
) -> Optional[tuple]:
    """Search for a creation order on ``c`` extending ``prev_order``
    (preservation: one is guaranteed to exist along well-typed runs)."""
    new = sorted(set(c.world) - set(prev_order))
    candidates = [prev_order]
    for tid in new:
        candidates = [
            order[:i] + (tid,) + order[i:]
            for order in candidates
            for i in range(len(order) + 1)
        ]
    for order in candidates:
        if check_config_well_formed(c, result_type, order, external) is None:
            return order
    return None


def run_with_preservation(
    comp: Comp,
    result_type: LangType,
    policy: str = "lowest-tid",
    seed: Optional[int] = None,
    fuel: int = 100_000,
) -> tuple[RunResult, int]:
    """Run while asserting well-formedness (with an extending order) at
    every configuration; returns the result and the number of checks."""
    if not is_core(comp):
        raise MachineError("run needs a desugared computation")
    if policy == "random" and seed is None:
        raise MachineError("the random policy requires a seed")
    rng = random.Random(seed)
    c = Configuration.initial(comp)
    order: tuple = ((),)
    bad = check_config_well_formed(c, result_type, order)
    if bad:
        raise MachineError(f"initial configuration ill-formed: {bad}")
    events: list[StepLabel] = []
    trace: list[str] = []
    checks = 1
    for _ in range(fuel):
        steps = enabled_steps(c)
        if not steps:
            if c.is_terminal():
                result = RunResult(c, tuple(events), observation(events, c), tuple(trace))
                return result, checks
            raise Deadlock("stuck non-terminal configuration")
        if policy == "lowest-tid":
            label, c = steps[0]
        else:
            label, c = rng.choice(steps)
        events.append(label)
        trace.append(_trace_line(label, c))
        order = find_extending_order(c, result_type, order)
        if order is None:
            raise MachineError(
                f"no creation order extends the previous one after step {len(events)}"
            )
        checks += 1
    raise FuelExhausted(f"no terminal configuration within {fuel} steps")


def run_result_to_json(result: RunResult, policy: str, seed: Optional[int]) -> dict:
    return {
        "policy": policy,
        "seed": seed,
        "steps": len(result.events),
        "events": [
            {"tid": tid_str(e.acting), "action": e.action} for e in result.events
        ],
        "pomset": result.pomset.to_json(),
    }
