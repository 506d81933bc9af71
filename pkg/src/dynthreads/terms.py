"""Terms of the algebraic theory of dynamic threads.

The signature has four operations:

* ``fork(a. t, u)``: spawn a child running ``u``; the parent continues as
  ``t`` and receives the child's ID as the bound parameter ``a``;
* ``wait(E, t)``: block on the compound thread ID ``E``, then continue as
  ``t``;
* ``stop``: end the current thread;
* ``act[s]``: perform the observable action ``s`` and end.

Terms live in a two-zone context ``vars x:m, ... ; tids a, ... ;``:
computation variables with arities, and parameter (thread-ID) names.
Compound IDs are stored pre-quotiented as frozensets of names.  All terms
are treated up to renaming of bound parameters; substitution renames apart
as needed and comparison helpers work up to alpha.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Union

from .tids import ParamContext, parse_tid_expr, names_of, print_tid_names


class TermError(Exception):
    """Base error for term formation and substitution."""


class UnboundParameter(TermError):
    pass


class UnboundVariable(TermError):
    pass


class ArityMismatch(TermError):
    pass


class ShadowedBinder(TermError):
    pass


# --- abstract syntax --------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str
    args: tuple[frozenset[str], ...] = ()


@dataclass(frozen=True)
class Fork:
    binder: str
    parent: "Term"
    child: "Term"


@dataclass(frozen=True)
class Wait:
    guard: frozenset[str]
    cont: "Term"


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Act:
    label: str


Term = Union[Var, Fork, Wait, Stop, Act]

STOP = Stop()


@dataclass(frozen=True)
class CompContext:
    """Computation variables with arities, e.g. ``x:1, y:0``."""

    entries: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise TermError(f"duplicate computation variables: {names}")
        if any(m < 0 for _, m in self.entries):
            raise TermError("negative arity")

    def arity(self, name: str) -> int:
        for n, m in self.entries:
            if n == name:
                return m
        raise UnboundVariable(f"unbound computation variable: {name!r}")

    def __contains__(self, name: str) -> bool:
        return any(n == name for n, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __str__(self) -> str:
        return ", ".join(f"{n}:{m}" for n, m in self.entries)


EMPTY_VARS = CompContext(())
EMPTY_TIDS = ParamContext(())


def tidset(*names: str) -> frozenset[str]:
    return frozenset(names)


def free_params(term: Term) -> frozenset[str]:
    match term:
        case Var(_, args):
            return frozenset().union(*args) if args else frozenset()
        case Fork(binder, parent, child):
            return (free_params(parent) - {binder}) | free_params(child)
        case Wait(guard, cont):
            return guard | free_params(cont)
        case Stop() | Act(_):
            return frozenset()
    raise TypeError(f"not a term: {term!r}")


def comp_vars(term: Term) -> frozenset[str]:
    match term:
        case Var(name, _):
            return frozenset({name})
        case Fork(_, parent, child):
            return comp_vars(parent) | comp_vars(child)
        case Wait(_, cont):
            return comp_vars(cont)
        case Stop() | Act(_):
            return frozenset()
    raise TypeError(f"not a term: {term!r}")


def binders_of(term: Term) -> frozenset[str]:
    match term:
        case Fork(binder, parent, child):
            return {binder} | binders_of(parent) | binders_of(child)
        case Wait(_, cont):
            return binders_of(cont)
        case _:
            return frozenset()


def scope_check(term: Term, gamma: CompContext, delta: ParamContext) -> None:
    """Check term formation in ``gamma | delta``; raise on the first failure.

    Binders must already be renamed apart: a fork binder that collides with
    an ambient parameter is rejected as :class:`ShadowedBinder`.
    """
    bound = set(delta.names)

    def go(t: Term, scope: frozenset[str]) -> None:
        match t:
            case Var(name, args):
                arity = gamma.arity(name)
                if arity != len(args):
                    raise ArityMismatch(
                        f"{name} declared with arity {arity}, applied to {len(args)} arguments"
                    )
                for u in args:
                    _check_names(u, scope)
            case Fork(binder, parent, child):
                if binder in scope:
                    raise ShadowedBinder(f"binder {binder!r} shadows a parameter in scope")
                go(parent, scope | {binder})
                go(child, scope)
            case Wait(guard, cont):
                _check_names(guard, scope)
                go(cont, scope)
            case Stop() | Act(_):
                pass
            case _:
                raise TypeError(f"not a term: {t!r}")

    go(term, frozenset(bound))


def _check_names(u: frozenset[str], scope: frozenset[str]) -> None:
    for n in sorted(u):
        if n not in scope:
            raise UnboundParameter(f"unbound parameter: {n!r}")


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    """A name not in ``avoid``: the base itself, else base2, base3, ..."""
    taken = set(avoid)
    if base not in taken:
        return base
    stem = base.rstrip("0123456789") or base
    for k in itertools.count(2):
        candidate = f"{stem}{k}"
        if candidate not in taken:
            return candidate
    raise AssertionError("unreachable")


def rename_binders_apart(term: Term, avoid: frozenset[str]) -> Term:
    """Rename every fork binder to avoid ``avoid`` and each other."""
    taken = set(avoid)

    def go(t: Term, renaming: dict[str, str]) -> Term:
        match t:
            case Var(name, args):
                return Var(name, tuple(_apply_renaming(u, renaming) for u in args))
            case Fork(binder, parent, child):
                new = fresh_name(binder, taken)
                taken.add(new)
                inner = dict(renaming)
                inner[binder] = new
                return Fork(new, go(parent, inner), go(child, renaming))
            case Wait(guard, cont):
                return Wait(_apply_renaming(guard, renaming), go(cont, renaming))
            case _:
                return t

    return go(term, {})


def _apply_renaming(u: frozenset[str], renaming: dict[str, str]) -> frozenset[str]:
    return frozenset(renaming.get(n, n) for n in u)


def subst_param(term: Term, replacement: frozenset[str], target: str) -> Term:
    """Capture-avoiding parameter substitution ``term[replacement / target]``."""

    def go(t: Term) -> Term:
        match t:
            case Var(name, args):
                return Var(name, tuple(_subst_set(u) for u in args))
            case Fork(binder, parent, child):
                if binder == target:
                    # target rebound: substitution does not reach the parent
                    return Fork(binder, parent, go(child))
                if binder in replacement:
                    fresh = fresh_name(
                        binder,
                        replacement | free_params(parent) | {target} | binders_of(parent),
                    )
                    parent = subst_param(parent, frozenset({fresh}), binder)
                    return Fork(fresh, go(parent), go(child))
                return Fork(binder, go(parent), go(child))
            case Wait(guard, cont):
                return Wait(_subst_set(guard), go(cont))
            case _:
                return t

    def _subst_set(u: frozenset[str]) -> frozenset[str]:
        return (u - {target}) | replacement if target in u else u

    return go(term)


def subst_comp(
    term: Term,
    binders: tuple[str, ...],
    body: Term,
    target: str,
    avoid_extra: frozenset[str] = frozenset(),
) -> Term:
    """Computation-variable substitution ``term[binders. body / target]``.

    Every occurrence ``target(u_1, ..., u_m)`` becomes ``body`` with its
    bound parameters replaced by the ``u_i`` simultaneously.  ``avoid_extra``
    keeps the renamed binders away from ambient names the term itself does
    not mention (e.g. unused context parameters).
    """
    if len(set(binders)) != len(binders):
        raise TermError(f"duplicate binders: {binders}")
    body_free = free_params(body) - set(binders)
    host_names = free_params(term) | binders_of(term) | avoid_extra

    def instantiate(args: tuple[frozenset[str], ...]) -> Term:
        if len(args) != len(binders):
            raise ArityMismatch(
                f"{target} applied to {len(args)} arguments, body binds {len(binders)}"
            )
        # rename the body's own fork binders away from the incoming IDs and
        # from every name the host scope could put around this occurrence
        avoid = set(body_free) | set(binders) | host_names
        for u in args:
            avoid |= u
        result = rename_binders_apart(body, frozenset(avoid))
        # route through fresh temporaries so the replacement is simultaneous
        temps: list[str] = []
        taken = avoid | binders_of(result)
        for i in range(len(binders)):
            tmp = fresh_name(f"_s{i}", taken)
            taken.add(tmp)
            temps.append(tmp)
        for b, tmp in zip(binders, temps):
            result = subst_param(result, frozenset({tmp}), b)
        for tmp, u in zip(temps, args):
            result = subst_param(result, u, tmp)
        return result

    def go(t: Term) -> Term:
        match t:
            case Var(name, args):
                return instantiate(args) if name == target else t
            case Fork(binder, parent, child):
                if binder in body_free:
                    fresh = fresh_name(
                        binder,
                        body_free | set(binders) | free_params(parent) | binders_of(parent),
                    )
                    parent = subst_param(parent, frozenset({fresh}), binder)
                    return Fork(fresh, go(parent), go(child))
                return Fork(binder, go(parent), go(child))
            case Wait(guard, cont):
                return Wait(guard, go(cont))
            case _:
                return t

    return go(term)


def alpha_eq(t1: Term, t2: Term) -> bool:
    """Syntactic equality up to renaming of fork binders."""

    def go(a: Term, b: Term, env1: dict[str, str], env2: dict[str, str]) -> bool:
        match a, b:
            case Var(n1, args1), Var(n2, args2):
                if n1 != n2 or len(args1) != len(args2):
                    return False
                return all(
                    _resolve(u1, env1) == _resolve(u2, env2)
                    for u1, u2 in zip(args1, args2)
                )
            case Fork(b1, p1, c1), Fork(b2, p2, c2):
                tick = f"#{len(env1)}"
                e1 = dict(env1)
                e1[b1] = tick
                e2 = dict(env2)
                e2[b2] = tick
                return go(p1, p2, e1, e2) and go(c1, c2, env1, env2)
            case Wait(g1, k1), Wait(g2, k2):
                return _resolve(g1, env1) == _resolve(g2, env2) and go(k1, k2, env1, env2)
            case Stop(), Stop():
                return True
            case Act(l1), Act(l2):
                return l1 == l2
        return False

    def _resolve(u: frozenset[str], env: dict[str, str]) -> frozenset[str]:
        return frozenset(env.get(n, n) for n in u)

    return go(t1, t2, {}, {})


# --- the eight axioms -------------------------------------------------------

@dataclass(frozen=True)
class AxiomInstance:
    name: str
    gamma: CompContext
    delta: ParamContext
    lhs: Term
    rhs: Term


def axiom_schemas() -> list[AxiomInstance]:
    """The eight defining equations, each at its minimal context."""
    g = CompContext
    d = ParamContext
    x0 = Var("x")
    x1 = lambda *names: Var("x", (frozenset(names),))  # noqa: E731
    empty = frozenset()
    return [
        AxiomInstance(
            "W-UNIT",
            g((("x", 0),)), d(()),
            Wait(empty, x0),
            x0,
        ),
        AxiomInstance(
            "W-ACC",
            g((("x", 0),)), d(("a", "b")),
            Wait(tidset("a"), Wait(tidset("b"), x0)),
            Wait(tidset("a", "b"), x0),
        ),
        AxiomInstance(
            "W-CLOSE",
            g((("x", 1),)), d(("a", "b")),
            Wait(tidset("a"), x1("b")),
            Wait(tidset("a"), x1("a", "b")),
        ),
        AxiomInstance(
            "FW-COMM",
            g((("x", 1), ("y", 0))), d(("b",)),
            Wait(tidset("b"), Fork("a", x1("a"), Var("y"))),
            Fork("a", Wait(tidset("b"), x1("a")), Wait(tidset("b"), Var("y"))),
        ),
        AxiomInstance(
            "F-COMM",
            g((("x", 2), ("y", 0), ("z", 0))), d(()),
            Fork("a", Fork("b", Var("x", (tidset("a"), tidset("b"))), Var("y")), Var("z")),
            Fork("b", Fork("a", Var("x", (tidset("a"), tidset("b"))), Var("z")), Var("y")),
        ),
        AxiomInstance(
            "F-ASSOC",
            g((("x", 1), ("y", 1), ("z", 0))), d(()),
            Fork("a", x1("a"), Fork("b", Var("y", (tidset("b"),)), Var("z"))),
            Fork("b", Fork("a", x1("a"), Var("y", (tidset("b"),))), Var("z")),
        ),
        AxiomInstance(
            "F-UNIT-L",
            g((("x", 0),)), d(()),
            Fork("a", Wait(tidset("a"), STOP), x0),
            x0,
        ),
        AxiomInstance(
            "F-UNIT-R",
            g((("x", 1),)), d(("b",)),
            Fork("a", x1("a"), Wait(tidset("b"), STOP)),
            x1("b"),
        ),
    ]


def derived_node(label: str, guard: frozenset[str], binder: str, cont: Term) -> Term:
    """The node macro: fork a child that waits on ``guard`` then acts.

    ``node[s](E, b. t)`` stands for ``fork(b. t, wait(E, act[s]))``: the new
    child performs ``s`` once everything in ``E`` is done, and the main
    thread continues as ``t`` knowing the child's ID ``b``.
    """
    return Fork(binder, cont, Wait(guard, Act(label)))


# --- textual syntax ---------------------------------------------------------
#
# term file:   [vars x:1, y:0;] [tids a, b;] TERM
# TERM      ::= fork(a. TERM, TERM) | wait(E, TERM) | stop | act[label]
#             | x(E, ..., E) | x | node[label](E, a. TERM)

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<punct>[().,;:+]|=>)|(?P<label>\[[^\]]*\])|(?P<name>[A-Za-z0-9_'$]+))"
)

_KEYWORDS = {"fork", "wait", "stop", "act", "node", "vars", "tids"}


class _Tokens:
    def __init__(self, text: str):
        self.items: list[str] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                rest = text[pos:].strip()
                if not rest:
                    break
                raise TermError(f"cannot tokenize near {rest[:20]!r}")
            self.items.append(m.group("punct") or m.group("label") or m.group("name"))
            pos = m.end()
        self.pos = 0

    def peek(self) -> str | None:
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise TermError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise TermError(f"expected {tok!r}, got {got!r} (token {self.pos})")


def parse_term_file(text: str) -> tuple[CompContext, ParamContext, Term]:
    """Parse an optional ``vars``/``tids`` header followed by a term."""
    toks = _Tokens(text)
    gamma = EMPTY_VARS
    delta = EMPTY_TIDS
    while toks.peek() in ("vars", "tids"):
        kind = toks.next()
        entries: list = []
        while True:
            name = toks.next()
            if kind == "vars":
                toks.expect(":")
                arity = toks.next()
                if not arity.isdigit():
                    raise TermError(f"expected arity after {name}:, got {arity!r}")
                entries.append((name, int(arity)))
            else:
                entries.append(name)
            nxt = toks.next()
            if nxt == ";":
                break
            if nxt != ",":
                raise TermError(f"expected ',' or ';' in header, got {nxt!r}")
        if kind == "vars":
            gamma = CompContext(tuple(entries))
        else:
            delta = ParamContext(tuple(entries))
    term = _parse_term(toks)
    if toks.peek() is not None:
        raise TermError(f"trailing input after term: {toks.peek()!r}")
    return gamma, delta, term


def parse_term(text: str) -> Term:
    toks = _Tokens(text)
    term = _parse_term(toks)
    if toks.peek() is not None:
        raise TermError(f"trailing input after term: {toks.peek()!r}")
    return term


def _parse_term(toks: _Tokens) -> Term:
    head = toks.next()
    if head == "fork":
        toks.expect("(")
        binder = toks.next()
        toks.expect(".")
        parent = _parse_term(toks)
        toks.expect(",")
        child = _parse_term(toks)
        toks.expect(")")
        return Fork(binder, parent, child)
    if head == "wait":
        toks.expect("(")
        guard = _parse_guard(toks)
        toks.expect(",")
        cont = _parse_term(toks)
        toks.expect(")")
        return Wait(guard, cont)
    if head == "stop":
        return STOP
    if head == "act":
        return Act(_parse_label(toks))
    if head == "node":
        label = _parse_label(toks)
        toks.expect("(")
        guard = _parse_guard(toks)
        toks.expect(",")
        binder = toks.next()
        toks.expect(".")
        cont = _parse_term(toks)
        toks.expect(")")
        return derived_node(label, guard, binder, cont)
    if head in _KEYWORDS or head in "().,;:+" or head.startswith("["):
        raise TermError(f"unexpected token {head!r}")
    # variable application (or bare 0-ary variable)
    if toks.peek() == "(":
        toks.next()
        args: list[frozenset[str]] = []
        if toks.peek() == ")":
            toks.next()
            return Var(head, ())
        while True:
            args.append(_parse_guard(toks))
            nxt = toks.next()
            if nxt == ")":
                break
            if nxt != ",":
                raise TermError(f"expected ',' or ')' in argument list, got {nxt!r}")
        return Var(head, tuple(args))
    return Var(head, ())


def _parse_guard(toks: _Tokens) -> frozenset[str]:
    parts: list[str] = []
    depth = 0
    while True:
        tok = toks.peek()
        if tok is None:
            raise TermError("unexpected end of input in tid expression")
        if depth == 0 and tok in (",", ")", ";"):
            break
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        parts.append(toks.next())
    return names_of(parse_tid_expr(" ".join(parts)))


def _parse_label(toks: _Tokens) -> str:
    tok = toks.next()
    if not (tok.startswith("[") and tok.endswith("]")):
        raise TermError(f"expected [label], got {tok!r}")
    label = tok[1:-1].strip()
    if not label:
        raise TermError("empty action label")
    return label


def print_term(term: Term) -> str:
    match term:
        case Var(name, args):
            if not args:
                return name
            return f"{name}({', '.join(print_tid_names(u) for u in args)})"
        case Fork(binder, parent, child):
            return f"fork({binder}. {print_term(parent)}, {print_term(child)})"
        case Wait(guard, cont):
            return f"wait({print_tid_names(guard)}, {print_term(cont)})"
        case Stop():
            return "stop"
        case Act(label):
            return f"act[{label}]"
    raise TypeError(f"not a term: {term!r}")


def print_term_file(gamma: CompContext, delta: ParamContext, term: Term) -> str:
    lines = []
    if len(gamma):
        lines.append(f"vars {gamma};")
    if len(delta):
        lines.append(f"tids {delta};")
    lines.append(print_term(term))
    return "\n".join(lines) + "\n"
