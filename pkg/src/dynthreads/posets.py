"""Labelled posets with holes: the semantic model of dynamic threads.

A poset here has ``n`` input elements (free thread IDs), action-labelled
vertices, hole vertices labelled by computation variables, and a single
distinguished maximal element ``star`` marking the end of the main thread.
Holes carry one *visibility set* per argument slot: the elements whose
completion the substituted continuation may wait on (drawn dotted in diagrams; not part of the causal order).

The module provides:

* well-formedness checking and isomorphism search;
* the relabelling action along a finite relation, making posets a functor
  on worlds of thread IDs;
* the four model operations (fork/wait/stop/act);
* ``interp`` from terms to posets, ``reify`` back to normal forms, and the
  decision procedure ``decide_equal`` for the equational theory;
* substitution of a poset for a hole;
* JSON and DOT serialization, plus plain pomsets for run observations.

Causal order is stored strict and transitively closed at all times, and
hole visibility sets are kept downward-closed and containing their hole;
the trusted constructors enforce both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Optional, Union

from .tids import ParamContext, Relation, TidSet, graph_of
from .terms import (
    Act,
    CompContext,
    Fork,
    Stop,
    STOP,
    Term,
    Var,
    Wait,
    comp_vars,
    fresh_name,
    scope_check,
    subst_comp,
)


class PosetError(Exception):
    """Structural errors: malformed references, dimension mismatches."""


class IllFormed(PosetError):
    """A well-formedness condition is violated where one is required."""


# --- element references -----------------------------------------------------

@dataclass(frozen=True)
class In:
    """The i-th input element (1-based)."""

    index: int


@dataclass(frozen=True)
class Vert:
    """A labelled vertex (action or hole) by numeric id."""

    vid: int


@dataclass(frozen=True)
class Star:
    """The end-of-main-thread marker; unique and maximal."""


STAR = Star()

ElemRef = Union[In, Vert, Star]


def _ref_key(e: ElemRef) -> tuple:
    match e:
        case In(i):
            return (0, i)
        case Vert(v):
            return (1, v)
        case Star():
            return (2, 0)
    raise TypeError(f"not an element reference: {e!r}")


@dataclass(frozen=True)
class HoleLabel:
    var: str
    arity: int
    visibility: tuple[frozenset, ...]  # one frozenset[ElemRef] per slot

    def __post_init__(self) -> None:
        if len(self.visibility) != self.arity:
            raise PosetError(
                f"hole {self.var}: {len(self.visibility)} visibility sets for arity {self.arity}"
            )


@dataclass(frozen=True)
class PosetWithHoles:
    """A labelled poset with holes; ``order`` holds strict pairs."""

    n_inputs: int
    actions: tuple[tuple[int, str], ...]  # (vertex id, action label), sorted
    holes: tuple[tuple[int, HoleLabel], ...]  # (vertex id, label), sorted
    order: frozenset  # frozenset[tuple[ElemRef, ElemRef]]

    @cached_property
    def action_map(self) -> dict[int, str]:
        return dict(self.actions)

    @cached_property
    def hole_map(self) -> dict[int, HoleLabel]:
        return dict(self.holes)

    @cached_property
    def vertex_ids(self) -> frozenset[int]:
        return frozenset(self.action_map) | frozenset(self.hole_map)

    @cached_property
    def elements(self) -> frozenset:
        refs = {In(i) for i in range(1, self.n_inputs + 1)}
        refs |= {Vert(v) for v in self.vertex_ids}
        refs.add(STAR)
        return frozenset(refs)

    def below(self, e: ElemRef) -> frozenset:
        return frozenset(d for (d, f) in self.order if f == e)

    def above(self, e: ElemRef) -> frozenset:
        return frozenset(f for (d, f) in self.order if d == e)

    def validate_refs(self) -> None:
        """Raise :class:`PosetError` on out-of-range or unknown references."""
        ids = set(self.action_map) | set(self.hole_map)
        if len(ids) != len(self.actions) + len(self.holes):
            raise PosetError("action and hole vertex ids overlap")
        for d, e in self.order:
            self._check_ref(d)
            self._check_ref(e)
        for _, label in self.holes:
            for slot in label.visibility:
                for e in slot:
                    self._check_ref(e)

    def _check_ref(self, e: ElemRef) -> None:
        match e:
            case In(i):
                if not 1 <= i <= self.n_inputs:
                    raise PosetError(f"input {i} out of range 1..{self.n_inputs}")
            case Vert(v):
                if v not in self.action_map and v not in self.hole_map:
                    raise PosetError(f"unknown vertex id {v}")
            case Star():
                pass
            case _:
                raise PosetError(f"not an element reference: {e!r}")


def _close_pairs(pairs: set) -> frozenset:
    """Transitive closure of a set of strict pairs."""
    succs: dict = {}
    for a, b in pairs:
        succs.setdefault(a, set()).add(b)
    closed = set()
    for start in list(succs):
        seen: set = set()
        stack = list(succs[start])
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succs.get(x, ()))
        closed.update((start, y) for y in seen)
    return frozenset(closed)


def make_poset(
    n_inputs: int,
    actions: Mapping[int, str],
    holes: Mapping[int, tuple[str, int, Iterable[frozenset]]] | Mapping[int, HoleLabel],
    order: Iterable[tuple],
) -> PosetWithHoles:
    """Trusted constructor: closes the order transitively and normalizes
    each visibility set to contain its hole and be downward-closed."""
    closed = _close_pairs(set(order))
    below: dict = {}
    for d, e in closed:
        below.setdefault(e, set()).add(d)

    hole_entries = []
    for vid, label in holes.items():
        if not isinstance(label, HoleLabel):
            var, arity, slots = label
            label = HoleLabel(var, arity, tuple(frozenset(s) for s in slots))
        slots = []
        for slot in label.visibility:
            members = set(slot) | {Vert(vid)}
            grow = True
            while grow:
                grow = False
                for m in list(members):
                    extra = below.get(m, set()) - members
                    if extra:
                        members |= extra
                        grow = True
            slots.append(frozenset(members))
        hole_entries.append((vid, HoleLabel(label.var, label.arity, tuple(slots))))

    poset = PosetWithHoles(
        n_inputs,
        tuple(sorted(actions.items())),
        tuple(sorted(hole_entries)),
        closed,
    )
    poset.validate_refs()
    return poset


def raw_poset(
    n_inputs: int,
    actions: Mapping[int, str],
    holes: Mapping[int, HoleLabel],
    order: Iterable[tuple],
) -> PosetWithHoles:
    """Untrusted constructor: stores the data as given (for loading and for
    deliberately ill-formed test posets)."""
    poset = PosetWithHoles(
        n_inputs,
        tuple(sorted(actions.items())),
        tuple(sorted(holes.items())),
        frozenset(order),
    )
    poset.validate_refs()
    return poset


# --- well-formedness --------------------------------------------------------

def visibility_relation(p: PosetWithHoles) -> frozenset:
    """Pairs (e', e) where e is a hole and e' appears in a visibility set."""
    pairs = set()
    for vid, label in p.holes:
        hole = Vert(vid)
        for slot in label.visibility:
            pairs.update((e, hole) for e in slot)
    return frozenset(pairs)


def check_well_formed(p: PosetWithHoles) -> Optional[str]:
    """Return ``None`` if well-formed, else a description of the first
    violated condition."""
    p.validate_refs()
    order = p.order
    for d, e in order:
        if d == e:
            return f"order is reflexive at {d}"
    order_set = set(order)
    for a, b in order:
        for c in p.above(b):
            if (a, c) not in order_set:
                return f"order not transitively closed: {a} < {b} < {c}"
    for a, b in order:
        if (b, a) in order_set:
            return f"order not antisymmetric: {a} and {b}"
    for d, e in order:
        if isinstance(e, In):
            return f"input {e.index} is not minimal"
        if isinstance(d, Star):
            return "star is not maximal"
    for vid, label in p.holes:
        hole = Vert(vid)
        for i, slot in enumerate(label.visibility, start=1):
            if hole not in slot:
                return f"hole {label.var}(vertex {vid}) slot {i} misses the hole itself"
            if STAR in slot:
                return f"hole {label.var}(vertex {vid}) slot {i} contains star"
            for m in slot:
                missing = p.below(m) - slot
                if missing:
                    return (
                        f"hole {label.var}(vertex {vid}) slot {i} not downward-closed: "
                        f"misses {sorted(missing, key=_ref_key)}"
                    )
    combined = _close_pairs(set(order) | set(visibility_relation(p)))
    for a, b in combined:
        if a != b and (b, a) in combined:
            return f"visibility and order form a cycle through {a} and {b}"
    return None


def require_well_formed(p: PosetWithHoles) -> PosetWithHoles:
    violation = check_well_formed(p)
    if violation:
        raise IllFormed(violation)
    return p


# --- isomorphism ------------------------------------------------------------

def _vertex_signature(p: PosetWithHoles, vid: int) -> tuple:
    ref = Vert(vid)
    below = p.below(ref)
    above = p.above(ref)
    inputs_below = frozenset(e.index for e in below if isinstance(e, In))
    below_star = ref in p.below(STAR)
    if vid in p.action_map:
        head: tuple = ("act", p.action_map[vid])
        slots_profile: tuple = ()
    else:
        label = p.hole_map[vid]
        head = ("hole", label.var, label.arity)
        slots_profile = tuple(
            (
                frozenset(e.index for e in slot if isinstance(e, In)),
                sum(1 for e in slot if isinstance(e, Vert)),
            )
            for slot in label.visibility
        )
    n_vert_below = sum(1 for e in below if isinstance(e, Vert))
    n_vert_above = sum(1 for e in above if isinstance(e, Vert))
    return (head, inputs_below, below_star, n_vert_below, n_vert_above, slots_profile)


def iso_quick_reject(p: PosetWithHoles, q: PosetWithHoles) -> Optional[str]:
    """Cheap invariant comparison; a message means definitely not isomorphic."""
    if p.n_inputs != q.n_inputs:
        return f"input counts differ: {p.n_inputs} vs {q.n_inputs}"
    pa = sorted(label for _, label in p.actions)
    qa = sorted(label for _, label in q.actions)
    if pa != qa:
        return f"action label multisets differ: {pa} vs {qa}"
    ph = sorted((h.var, h.arity) for _, h in p.holes)
    qh = sorted((h.var, h.arity) for _, h in q.holes)
    if ph != qh:
        return f"hole label multisets differ: {ph} vs {qh}"
    if len(p.order) != len(q.order):
        return f"order sizes differ: {len(p.order)} vs {len(q.order)}"
    p_fixed = {(d, e) for (d, e) in p.order if not isinstance(d, Vert) and not isinstance(e, Vert)}
    q_fixed = {(d, e) for (d, e) in q.order if not isinstance(d, Vert) and not isinstance(e, Vert)}
    if p_fixed != q_fixed:
        return "order between inputs and star differs"
    p_sigs = sorted(map(str, (_vertex_signature(p, v) for v in p.vertex_ids)))
    q_sigs = sorted(map(str, (_vertex_signature(q, v) for v in q.vertex_ids)))
    if p_sigs != q_sigs:
        return "vertex invariant signatures differ"
    return None


def iso_check(p: PosetWithHoles, q: PosetWithHoles) -> Optional[dict]:
    """Search for an isomorphism fixing inputs and star pointwise.

    Returns a vertex-id mapping ``{p_vid: q_vid}`` or ``None``.  Labels,
    hole variables, slot-wise visibility, and the order (both directions)
    must all be preserved.
    """
    if iso_quick_reject(p, q) is not None:
        return None

    p_sig = {v: _vertex_signature(p, v) for v in p.vertex_ids}
    q_sig = {v: _vertex_signature(q, v) for v in q.vertex_ids}
    candidates = {
        v: [w for w in q.vertex_ids if q_sig[w] == p_sig[v]] for v in p.vertex_ids
    }
    if any(not c for c in candidates.values()):
        return None
    todo = sorted(candidates, key=lambda v: (len(candidates[v]), v))

    p_order = p.order
    q_order = q.order

    def consistent(v: int, w: int, mapping: dict[int, int]) -> bool:
        rv, rw = Vert(v), Vert(w)
        for u, x in mapping.items():
            ru, rx = Vert(u), Vert(x)
            if ((ru, rv) in p_order) != ((rx, rw) in q_order):
                return False
            if ((rv, ru) in p_order) != ((rw, rx) in q_order):
                return False
        return True

    def translate(e: ElemRef, mapping: dict[int, int]) -> ElemRef:
        return Vert(mapping[e.vid]) if isinstance(e, Vert) else e

    def full_check(mapping: dict[int, int]) -> bool:
        image = {(translate(d, mapping), translate(e, mapping)) for (d, e) in p_order}
        if image != set(q_order):
            return False
        for vid, label in p.holes:
            other = q.hole_map[mapping[vid]]
            if (label.var, label.arity) != (other.var, other.arity):
                return False
            for slot, oslot in zip(label.visibility, other.visibility):
                if {translate(e, mapping) for e in slot} != set(oslot):
                    return False
        return True

    used: set[int] = set()
    mapping: dict[int, int] = {}

    def search(k: int) -> bool:
        if k == len(todo):
            return full_check(mapping)
        v = todo[k]
        for w in candidates[v]:
            if w in used or not consistent(v, w, mapping):
                continue
            mapping[v] = w
            used.add(w)
            if search(k + 1):
                return True
            del mapping[v]
            used.discard(w)
        return False

    return dict(mapping) if search(0) else None


# --- functorial action and model operations ---------------------------------

def _map_ref_through(e: ElemRef, r: Relation) -> list[ElemRef]:
    if isinstance(e, In):
        return [In(j) for j in sorted(r.image(e.index))]
    return [e]


def relabel(p: PosetWithHoles, r: Relation) -> PosetWithHoles:
    """Re-point the inputs along ``r``: a pair ``i < e`` becomes ``i' < e``
    for every ``(i, i')`` in the relation, and visibility sets follow."""
    if r.src != p.n_inputs:
        raise PosetError(f"relation source {r.src} != inputs {p.n_inputs}")
    order = set()
    for d, e in p.order:
        for d2 in _map_ref_through(d, r):
            order.add((d2, e))
    holes = {}
    for vid, label in p.holes:
        slots = []
        for slot in label.visibility:
            out: set = set()
            for e in slot:
                out.update(_map_ref_through(e, r))
            slots.append(frozenset(out))
        holes[vid] = (label.var, label.arity, slots)
    return make_poset(r.dst, dict(p.actions), holes, order)


def op_stop(n: int) -> PosetWithHoles:
    """Discrete poset: just the ``n`` inputs and star."""
    return make_poset(n, {}, {}, set())


def op_act(label: str, n: int) -> PosetWithHoles:
    """One action vertex directly below star; inputs unconnected."""
    return make_poset(n, {1: label}, {}, {(Vert(1), STAR)})


def op_wait(p: PosetWithHoles) -> PosetWithHoles:
    """Add input ``n+1`` below every labelled vertex and below star."""
    n = p.n_inputs
    new = In(n + 1)
    order = set(p.order)
    order.update((new, Vert(v)) for v in p.vertex_ids)
    order.add((new, STAR))
    holes = {vid: (h.var, h.arity, h.visibility) for vid, h in p.holes}
    return make_poset(n + 1, dict(p.actions), holes, order)


def op_fork(p: PosetWithHoles, q: PosetWithHoles) -> PosetWithHoles:
    """Fork: run ``q`` as a child whose ID is input ``n+1`` of parent ``p``.

    Everything below ``q``'s star ends up below everything above the
    consumed input; the input and ``q``'s star then disappear.
    """
    n = q.n_inputs
    if p.n_inputs != n + 1:
        raise PosetError(f"fork arity: parent has {p.n_inputs} inputs, child {q.n_inputs}")
    offset = max(p.vertex_ids, default=0)

    def shift(e: ElemRef) -> ElemRef:
        return Vert(e.vid + offset) if isinstance(e, Vert) else e

    dead = In(n + 1)
    below_child_star = {shift(d) for (d, e) in q.order if isinstance(e, Star)}
    above_dead = {e for (d, e) in p.order if d == dead}

    actions = dict(p.actions)
    actions.update({vid + offset: label for vid, label in q.actions})
    holes: dict = {}
    for vid, label in p.holes:
        slots = []
        for slot in label.visibility:
            if dead in slot:
                slot = (slot - {dead}) | below_child_star
            slots.append(slot)
        holes[vid] = (label.var, label.arity, slots)
    for vid, label in q.holes:
        slots = [frozenset(shift(e) for e in slot) for slot in label.visibility]
        holes[vid + offset] = (label.var, label.arity, slots)

    order = set()
    for d, e in p.order:
        if d == dead:
            continue
        order.add((d, e))
    for d, e in q.order:
        if isinstance(e, Star):
            continue
        order.add((shift(d), shift(e)))
    order.update((d, e) for d in below_child_star for e in above_dead)
    return make_poset(n, actions, holes, order)


# --- interpretation of terms -------------------------------------------------

def interp(term: Term, gamma: CompContext, delta: ParamContext) -> PosetWithHoles:
    """Interpret a term as a labelled poset over ``len(delta)`` inputs."""
    scope_check(term, gamma, delta)
    return _interp(term, gamma, delta)


def _interp(term: Term, gamma: CompContext, delta: ParamContext) -> PosetWithHoles:
    p = len(delta)
    match term:
        case Stop():
            return op_stop(p)
        case Act(label):
            return op_act(label, p)
        case Var(name, args):
            slots = [
                frozenset(In(i) for i in _eval(u, delta).members) | {Vert(1)}
                for u in args
            ]
            return make_poset(p, {}, {1: (name, len(args), slots)}, {(Vert(1), STAR)})
        case Wait(guard, cont):
            inner = _interp(cont, gamma, delta)
            return relabel(op_wait(inner), graph_of([_eval(guard, delta)], p))
        case Fork(binder, parent, child):
            parent_poset = _interp(parent, gamma, delta.extend(binder))
            child_poset = _interp(child, gamma, delta)
            return op_fork(parent_poset, child_poset)
    raise TypeError(f"not a term: {term!r}")


def _eval(names: frozenset[str], delta: ParamContext) -> TidSet:
    return TidSet(len(delta), frozenset(delta.index(n) for n in names))


# --- normal forms -------------------------------------------------------------

@dataclass(frozen=True)
class Bnd:
    """Reference to the j-th forked child of a normal form (1-based)."""

    index: int


NfRef = Union[In, Bnd]


def _nf_ref_key(e: NfRef) -> tuple:
    return (0, e.index) if isinstance(e, In) else (1, e.index)


def _nf_ref_str(e: NfRef) -> str:
    return f"a{e.index}" if isinstance(e, In) else f"b{e.index}"


@dataclass(frozen=True)
class NfAct:
    label: str


@dataclass(frozen=True)
class NfVarApp:
    var: str
    args: tuple[frozenset, ...]  # frozenset[NfRef] per slot


@dataclass(frozen=True)
class NfChild:
    guard: frozenset  # frozenset[NfRef]
    body: Union[NfAct, NfVarApp]


@dataclass(frozen=True)
class NormalForm:
    """The fork-chain shape: ``p`` children (each one action or one variable
    call guarded by a compound ID), then a final wait before stop."""

    n_inputs: int
    children: tuple[NfChild, ...]
    final_guard: frozenset  # frozenset[NfRef]

    def check_closure(self) -> Optional[str]:
        """The closure conditions: guards are transитively propagated into
        later guards and into the argument sets of variable calls."""
        guards = [c.guard for c in self.children]

        def closed_into(target: frozenset, where: str) -> Optional[str]:
            for e in target:
                if isinstance(e, Bnd) and not guards[e.index - 1] <= target:
                    return f"guard of child {e.index} not included in {where}"
            return None

        for i, child in enumerate(self.children, start=1):
            bad = closed_into(child.guard, f"guard of child {i}")
            if bad:
                return bad
            if isinstance(child.body, NfVarApp):
                for k, arg in enumerate(child.body.args, start=1):
                    bad = closed_into(arg, f"argument {k} of child {i}")
                    if bad:
                        return bad
                    if not child.guard <= arg:
                        return f"guard of child {i} not included in its argument {k}"
        return closed_into(self.final_guard, "the final guard")


def reify(p: PosetWithHoles) -> NormalForm:
    """Linearize a well-formed poset into a normal form.

    Children are emitted in a topological order of ``order`` together with
    the visibility relation, tie-broken on (label kind, label, guard) so the
    output is deterministic.
    """
    require_well_formed(p)
    vertex_refs = {Vert(v) for v in p.vertex_ids}
    combined = _close_pairs(set(p.order) | set(visibility_relation(p)))
    preds = {
        v: {d for (d, e) in combined if e == v and isinstance(d, Vert) and d != v}
        for v in vertex_refs
    }

    index: dict[ElemRef, int] = {}

    def translate(refs: Iterable[ElemRef]) -> frozenset:
        out = set()
        for e in refs:
            if isinstance(e, In):
                out.add(e)
            else:
                out.add(Bnd(index[e]))
        return frozenset(out)

    def guard_of(v: ElemRef) -> frozenset:
        return translate(d for d in p.below(v) if not isinstance(d, Star))

    children: list[NfChild] = []
    remaining = set(vertex_refs)
    emitted: set[ElemRef] = set()
    while remaining:
        ready = [v for v in remaining if preds[v] <= emitted]
        if not ready:
            raise IllFormed("cannot linearize: visibility and order form a cycle")

        def sort_key(v: ElemRef) -> tuple:
            vid = v.vid
            if vid in p.action_map:
                head = (0, p.action_map[vid], 0)
            else:
                label = p.hole_map[vid]
                head = (1, label.var, label.arity)
            guard = sorted(map(_nf_ref_str, guard_of(v)))
            return (head, guard, vid)

        v = min(ready, key=sort_key)
        remaining.discard(v)
        emitted.add(v)
        index[v] = len(children) + 1
        if v.vid in p.action_map:
            body: Union[NfAct, NfVarApp] = NfAct(p.action_map[v.vid])
        else:
            label = p.hole_map[v.vid]
            body = NfVarApp(
                label.var,
                tuple(translate(slot - {v}) for slot in label.visibility),
            )
        children.append(NfChild(guard_of(v), body))

    final_guard = translate(d for d in p.below(STAR))
    nf = NormalForm(p.n_inputs, tuple(children), final_guard)
    bad = nf.check_closure()
    if bad:
        raise IllFormed(f"reified normal form breaks closure: {bad}")
    return nf


def nf_to_term(
    nf: NormalForm, input_names: tuple[str, ...] | None = None
) -> tuple[CompContext, ParamContext, Term]:
    """The inclusion of a normal form back into term syntax."""
    if input_names is None:
        input_names = tuple(f"a{i}" for i in range(1, nf.n_inputs + 1))
    if len(input_names) != nf.n_inputs:
        raise PosetError(f"{len(input_names)} names for {nf.n_inputs} inputs")
    binder_names: list[str] = []
    taken = set(input_names)
    for j in range(1, len(nf.children) + 1):
        name = fresh_name(f"b{j}", taken)
        taken.add(name)
        binder_names.append(name)

    def name_of(e: NfRef) -> str:
        return input_names[e.index - 1] if isinstance(e, In) else binder_names[e.index - 1]

    def names(refs: frozenset) -> frozenset[str]:
        return frozenset(name_of(e) for e in refs)

    vars_seen: dict[str, int] = {}
    term: Term = Wait(names(nf.final_guard), STOP)
    for j in range(len(nf.children), 0, -1):
        child = nf.children[j - 1]
        if isinstance(child.body, NfAct):
            body: Term = Act(child.body.label)
        else:
            body = Var(child.body.var, tuple(names(a) for a in child.body.args))
            arity = len(child.body.args)
            if vars_seen.setdefault(child.body.var, arity) != arity:
                raise PosetError(f"variable {child.body.var} used at two arities")
        term = Fork(binder_names[j - 1], term, Wait(names(child.guard), body))

    gamma = CompContext(tuple(sorted(vars_seen.items())))
    return gamma, ParamContext(tuple(input_names)), term


def normalize(term: Term, gamma: CompContext, delta: ParamContext) -> NormalForm:
    """The canonical normal form of a term: reify its interpretation."""
    return reify(interp(term, gamma, delta))


def print_normal_form(nf: NormalForm) -> str:
    """Readable one-line-per-child rendering."""
    lines = [f"inputs {nf.n_inputs}"]
    for j, child in enumerate(nf.children, start=1):
        guard = _print_refs(child.guard)
        if isinstance(child.body, NfAct):
            body = f"act[{child.body.label}]"
        else:
            body = f"{child.body.var}({', '.join(_print_refs(a) for a in child.body.args)})"
        lines.append(f"b{j}: wait({guard}) {body}")
    lines.append(f"main: wait({_print_refs(nf.final_guard)}) stop")
    return "\n".join(lines)


def _print_refs(refs: frozenset) -> str:
    items = sorted(map(_nf_ref_str, refs))
    return " + ".join(items) if items else "0"


# --- equality decision --------------------------------------------------------

@dataclass(frozen=True)
class Equality:
    equal: bool
    witness: Optional[dict]
    evidence: Optional[str]


def decide_equal(
    t1: Term, t2: Term, gamma: CompContext, delta: ParamContext
) -> Equality:
    """Decide derivable equality by isomorphism of interpretations."""
    p1 = interp(t1, gamma, delta)
    p2 = interp(t2, gamma, delta)
    return decide_equal_posets(p1, p2)


def decide_equal_posets(p1: PosetWithHoles, p2: PosetWithHoles) -> Equality:
    reason = iso_quick_reject(p1, p2)
    if reason is not None:
        return Equality(False, None, reason)
    witness = iso_check(p1, p2)
    if witness is None:
        return Equality(False, None, "no label/order/visibility-preserving matching exists")
    return Equality(True, witness, None)


# --- substitution of a poset for a hole ---------------------------------------

def poset_subst(
    host: PosetWithHoles, var: str, arity: int, guest: PosetWithHoles
) -> PosetWithHoles:
    """Substitute ``guest`` (over ``n + arity`` inputs) for every hole
    labelled ``var`` in ``host`` (over ``n`` inputs): reify both, substitute
    at the term level, interpret back."""
    n = host.n_inputs
    if guest.n_inputs != n + arity:
        raise PosetError(
            f"guest has {guest.n_inputs} inputs, expected {n} + {arity}"
        )
    for _, label in host.holes:
        if label.var == var and label.arity != arity:
            raise PosetError(
                f"hole {var} has arity {label.arity}, substitution expects {arity}"
            )

    input_names = tuple(f"a{i}" for i in range(1, n + 1))
    slot_names = tuple(f"s{i}" for i in range(1, arity + 1))
    gamma_h, delta_h, t_host = nf_to_term(reify(host), input_names)
    gamma_g, _, t_guest = nf_to_term(reify(guest), input_names + slot_names)

    result = subst_comp(
        t_host, slot_names, t_guest, var, avoid_extra=frozenset(delta_h.names)
    )

    arities: dict[str, int] = {}
    for name, m in gamma_h.entries:
        if name != var:
            arities[name] = m
    for name, m in gamma_g.entries:
        if arities.setdefault(name, m) != m:
            raise PosetError(f"variable {name} used at two arities")
    used = comp_vars(result)
    gamma = CompContext(tuple(sorted((v, arities[v]) for v in used)))
    return interp(result, gamma, delta_h)


# --- plain pomsets (observations) ----------------------------------------------

@dataclass(frozen=True)
class Pomset:
    """A plain labelled poset: elements with labels and a strict order."""

    labels: tuple[tuple[str, str], ...]  # (element, label), sorted
    order: frozenset  # frozenset[tuple[str, str]] strict, transitively closed

    @cached_property
    def label_map(self) -> dict[str, str]:
        return dict(self.labels)

    @cached_property
    def element_ids(self) -> frozenset[str]:
        return frozenset(self.label_map)

    @staticmethod
    def of(labels: Mapping[str, str], order: Iterable[tuple[str, str]]) -> "Pomset":
        closed = _close_pairs(set(order))
        for a, b in closed:
            if a == b:
                raise PosetError(f"pomset order has a cycle at {a}")
        known = set(labels)
        for a, b in closed:
            if a not in known or b not in known:
                raise PosetError(f"order pair ({a},{b}) mentions unknown elements")
        return Pomset(tuple(sorted(labels.items())), closed)

    def iso_to(self, other: "Pomset") -> Optional[dict[str, str]]:
        if sorted(l for _, l in self.labels) != sorted(l for _, l in other.labels):
            return None
        if len(self.order) != len(other.order):
            return None

        def sig(p: "Pomset", e: str) -> tuple:
            below = sorted(p.label_map[d] for (d, f) in p.order if f == e)
            above = sorted(p.label_map[f] for (d, f) in p.order if d == e)
            return (p.label_map[e], tuple(below), tuple(above))

        mine = {e: sig(self, e) for e in self.element_ids}
        theirs = {e: sig(other, e) for e in other.element_ids}
        candidates = {
            e: [f for f in other.element_ids if theirs[f] == mine[e]]
            for e in self.element_ids
        }
        if any(not c for c in candidates.values()):
            return None
        todo = sorted(candidates, key=lambda e: (len(candidates[e]), e))
        mapping: dict[str, str] = {}
        used: set[str] = set()

        def ok(e: str, f: str) -> bool:
            for d, g in mapping.items():
                if ((d, e) in self.order) != ((g, f) in other.order):
                    return False
                if ((e, d) in self.order) != ((f, g) in other.order):
                    return False
            return True

        def search(k: int) -> bool:
            if k == len(todo):
                image = {(mapping[a], mapping[b]) for (a, b) in self.order}
                return image == set(other.order)
            e = todo[k]
            for f in candidates[e]:
                if f in used or not ok(e, f):
                    continue
                mapping[e] = f
                used.add(f)
                if search(k + 1):
                    return True
                del mapping[e]
                used.discard(f)
            return False

        return dict(mapping) if search(0) else None

    def linearizations(self) -> set[tuple[str, ...]]:
        """All label sequences compatible with the order."""
        results: set[tuple[str, ...]] = set()
        elements = sorted(self.element_ids)
        preds = {
            e: {d for (d, f) in self.order if f == e} for e in elements
        }

        def go(done: tuple[str, ...], taken: frozenset[str]) -> None:
            if len(done) == len(elements):
                results.add(done)
                return
            for e in elements:
                if e in taken or not preds[e] <= taken:
                    continue
                go(done + (self.label_map[e],), taken | {e})

        go((), frozenset())
        return results

    def to_json(self) -> dict:
        return {
            "inputs": 0,
            "vertices": [
                {"id": e, "kind": "action", "label": l} for e, l in self.labels
            ],
            "order": [[{"v": a}, {"v": b}] for a, b in sorted(self.order)],
        }


def erase_star(p: PosetWithHoles) -> Pomset:
    """Forget the main-thread marker: the closed, hole-free poset without
    star and its incident pairs."""
    if p.n_inputs != 0 or p.holes:
        raise PosetError("erase_star needs a closed poset without holes")
    labels = {str(v): label for v, label in p.actions}
    order = {
        (str(d.vid), str(e.vid))
        for (d, e) in p.order
        if isinstance(d, Vert) and isinstance(e, Vert)
    }
    return Pomset.of(labels, order)


# --- serialization --------------------------------------------------------------

def _ref_to_json(e: ElemRef):
    match e:
        case In(i):
            return {"in": i}
        case Vert(v):
            return {"v": v}
        case Star():
            return "star"
    raise TypeError(f"not an element reference: {e!r}")


def _ref_from_json(obj) -> ElemRef:
    if obj == "star":
        return STAR
    if isinstance(obj, dict) and "in" in obj:
        return In(int(obj["in"]))
    if isinstance(obj, dict) and "v" in obj:
        return Vert(int(obj["v"]))
    raise PosetError(f"bad element reference: {obj!r}")


def poset_to_json(p: PosetWithHoles) -> dict:
    vertices = []
    for vid, label in p.actions:
        vertices.append({"id": vid, "kind": "action", "label": label})
    for vid, label in p.holes:
        vertices.append(
            {
                "id": vid,
                "kind": "hole",
                "label": label.var,
                "visibility": [
                    [_ref_to_json(e) for e in sorted(slot, key=_ref_key)]
                    for slot in label.visibility
                ],
            }
        )
    vertices.sort(key=lambda v: v["id"])
    order = sorted(p.order, key=lambda pair: (_ref_key(pair[0]), _ref_key(pair[1])))
    return {
        "inputs": p.n_inputs,
        "vertices": vertices,
        "order": [[_ref_to_json(d), _ref_to_json(e)] for d, e in order],
    }


def poset_from_json(data: dict) -> PosetWithHoles:
    actions: dict[int, str] = {}
    holes: dict[int, HoleLabel] = {}
    for v in data.get("vertices", ()):
        vid = int(v["id"])
        if v["kind"] == "action":
            actions[vid] = v["label"]
        elif v["kind"] == "hole":
            slots = tuple(
                frozenset(_ref_from_json(e) for e in slot)
                for slot in v.get("visibility", [])
            )
            holes[vid] = HoleLabel(v["label"], len(slots), slots)
        else:
            raise PosetError(f"unknown vertex kind {v['kind']!r}")
    order = {
        (_ref_from_json(d), _ref_from_json(e)) for d, e in data.get("order", ())
    }
    return raw_poset(int(data.get("inputs", 0)), actions, holes, order)


def poset_to_json_text(p: PosetWithHoles) -> str:
    return json.dumps(poset_to_json(p), indent=2, sort_keys=True) + "\n"


def covering_pairs(order: frozenset) -> set:
    """The Hasse diagram of a transitively closed strict order."""
    order_set = set(order)
    members = {a for a, _ in order_set} | {b for _, b in order_set}
    return {
        (a, b)
        for (a, b) in order_set
        if not any((a, c) in order_set and (c, b) in order_set for c in members)
    }


def poset_to_dot(p: PosetWithHoles) -> str:
    """DOT rendering: inputs as boxes, actions as circles, holes as diamonds,
    star filled; solid covering edges, dotted visibility edges."""
    def node_id(e: ElemRef) -> str:
        match e:
            case In(i):
                return f"in{i}"
            case Vert(v):
                return f"v{v}"
            case Star():
                return "star"
        raise TypeError(e)

    lines = ["digraph poset {", "  rankdir=BT;"]
    for i in range(1, p.n_inputs + 1):
        lines.append(f'  in{i} [shape=box, label="{i}"];')
    for vid, label in p.actions:
        lines.append(f'  v{vid} [shape=circle, label="{label}"];')
    for vid, label in p.holes:
        lines.append(f'  v{vid} [shape=diamond, label="{label.var}:{label.arity}"];')
    lines.append('  star [shape=point, style=filled, label=""];')
    for d, e in sorted(covering_pairs(p.order), key=lambda pr: (_ref_key(pr[0]), _ref_key(pr[1]))):
        lines.append(f"  {node_id(d)} -> {node_id(e)};")
    for vid, label in p.holes:
        seen = set()
        for slot in label.visibility:
            for e in slot:
                if e != Vert(vid) and e not in seen:
                    seen.add(e)
                    lines.append(f"  {node_id(e)} -> v{vid} [style=dotted];")
    lines.append("}")
    return "\n".join(lines) + "\n"
