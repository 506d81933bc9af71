"""Thread-ID kernel: canonical compound IDs and finite relations.

Compound thread IDs form a semilattice (union ``+`` with unit ``0``), so a
compound ID over a parameter context is nothing more than a finite subset of
the context's names.  We store IDs pre-quotiented as index sets; the raw
``a + (b + a)`` syntax exists only at the parser boundary.

Worlds of thread IDs are indexed by finite relations: a relation ``n -> n'``
re-points each input ``i`` at the set of targets ``{i' | (i, i') in R}``.
Indices are 1-based throughout, matching the ``[n] = {1, ..., n}`` convention
used in serialized form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union


class TidError(Exception):
    """Base error for the tid kernel."""


class UnboundName(TidError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unbound tid name: {name!r}")
        self.name = name


class DimensionMismatch(TidError):
    pass


@dataclass(frozen=True)
class ParamContext:
    """An ordered list of distinct parameter names; position is meaningful."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise TidError(f"duplicate parameter names: {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        """1-based position of ``name``."""
        try:
            return self.names.index(name) + 1
        except ValueError:
            raise UnboundName(name) from None

    def extend(self, *names: str) -> "ParamContext":
        return ParamContext(self.names + names)

    def __str__(self) -> str:
        return ", ".join(self.names)


@dataclass(frozen=True)
class TidSet:
    """Canonical compound thread ID: a subset of ``{1, ..., ctx_size}``."""

    ctx_size: int
    members: frozenset[int]

    def __post_init__(self) -> None:
        bad = [i for i in self.members if not 1 <= i <= self.ctx_size]
        if bad:
            raise TidError(f"tid indices {bad} out of range 1..{self.ctx_size}")

    @staticmethod
    def of(ctx_size: int, members: Iterable[int] = ()) -> "TidSet":
        return TidSet(ctx_size, frozenset(members))

    def union(self, other: "TidSet") -> "TidSet":
        if self.ctx_size != other.ctx_size:
            raise DimensionMismatch(
                f"tid sets over different contexts: {self.ctx_size} vs {other.ctx_size}"
            )
        return TidSet(self.ctx_size, self.members | other.members)

    def to_json(self) -> list[int]:
        return sorted(self.members)

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in sorted(self.members)) + "}"


# --- tid expression syntax ------------------------------------------------
#
# E ::= 0 | name | E + E | ( E )

@dataclass(frozen=True)
class TidEmpty:
    pass


@dataclass(frozen=True)
class TidName:
    name: str


@dataclass(frozen=True)
class TidUnion:
    left: "TidExpr"
    right: "TidExpr"


TidExpr = Union[TidEmpty, TidName, TidUnion]


def parse_tid_expr(text: str) -> TidExpr:
    """Parse ``0``, identifiers, ``e1 + e2`` and parentheses."""
    tokens = _tokenize(text)
    expr, rest = _parse_union(tokens)
    if rest:
        raise TidError(f"trailing tokens in tid expression: {rest}")
    return expr


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "+()":
            tokens.append(c)
            i += 1
        elif c.isalnum() or c == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            tokens.append(text[i:j])
            i = j
        else:
            raise TidError(f"unexpected character {c!r} in tid expression")
    return tokens


def _parse_union(tokens: list[str]) -> tuple[TidExpr, list[str]]:
    left, rest = _parse_atom(tokens)
    while rest and rest[0] == "+":
        right, rest = _parse_atom(rest[1:])
        left = TidUnion(left, right)
    return left, rest


def _parse_atom(tokens: list[str]) -> tuple[TidExpr, list[str]]:
    if not tokens:
        raise TidError("unexpected end of tid expression")
    head, rest = tokens[0], tokens[1:]
    if head == "(":
        expr, rest = _parse_union(rest)
        if not rest or rest[0] != ")":
            raise TidError("missing ')' in tid expression")
        return expr, rest[1:]
    if head == "0":
        return TidEmpty(), rest
    if head in "+)":
        raise TidError(f"unexpected {head!r} in tid expression")
    return TidName(head), rest


def names_of(expr: TidExpr) -> frozenset[str]:
    """The set of names an expression denotes (semilattice quotient)."""
    match expr:
        case TidEmpty():
            return frozenset()
        case TidName(name):
            return frozenset({name})
        case TidUnion(left, right):
            return names_of(left) | names_of(right)
    raise TypeError(f"not a tid expression: {expr!r}")


def eval_tid_expr(expr: TidExpr | str, ctx: ParamContext) -> TidSet:
    """Denotation of a tid expression: the subset of context positions."""
    if isinstance(expr, str):
        expr = parse_tid_expr(expr)
    return TidSet(len(ctx), frozenset(ctx.index(n) for n in names_of(expr)))


def print_tid_names(names: Iterable[str]) -> str:
    """Canonical textual form of a name set: ``0`` or ``a + b`` (sorted)."""
    ordered = sorted(names)
    return " + ".join(ordered) if ordered else "0"


# --- finite relations -----------------------------------------------------

@dataclass(frozen=True)
class Relation:
    """A finite relation ``src -> dst`` with pairs in ``[src] x [dst]``."""

    src: int
    dst: int
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for i, j in self.pairs:
            if not (1 <= i <= self.src and 1 <= j <= self.dst):
                raise TidError(f"pair ({i},{j}) out of bounds {self.src}->{self.dst}")

    @staticmethod
    def of(src: int, dst: int, pairs: Iterable[tuple[int, int]] = ()) -> "Relation":
        return Relation(src, dst, frozenset(pairs))

    @staticmethod
    def identity(n: int) -> "Relation":
        return Relation(n, n, frozenset((i, i) for i in range(1, n + 1)))

    def image(self, i: int) -> frozenset[int]:
        return frozenset(j for (k, j) in self.pairs if k == i)

    def to_json(self) -> dict:
        return {"src": self.src, "dst": self.dst, "pairs": sorted(self.pairs)}


def compose(r: Relation, s: Relation) -> Relation:
    """Relational composition ``r ; s`` (apply ``r`` first)."""
    if r.dst != s.src:
        raise DimensionMismatch(f"cannot compose {r.src}->{r.dst} with {s.src}->{s.dst}")
    by_src: dict[int, set[int]] = {}
    for j, k in s.pairs:
        by_src.setdefault(j, set()).add(k)
    pairs = frozenset(
        (i, k) for (i, j) in r.pairs for k in by_src.get(j, ())
    )
    return Relation(r.src, s.dst, pairs)


def graph_of(u_list: list[TidSet], p: int) -> Relation:
    """The relation ``[id_p, u_1, ..., u_k] : p + k -> p``.

    Position ``i <= p`` maps to itself; position ``p + j`` maps to every
    member of ``u_list[j]``.  Each ``u`` must live over a context of size
    ``p``.
    """
    for u in u_list:
        if u.ctx_size != p:
            raise DimensionMismatch(f"tid set over {u.ctx_size}, expected {p}")
    pairs = {(i, i) for i in range(1, p + 1)}
    for j, u in enumerate(u_list, start=1):
        pairs.update((p + j, k) for k in u.members)
    return Relation(p + len(u_list), p, frozenset(pairs))
