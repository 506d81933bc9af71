"""A fine-grain call-by-value language with dynamic-thread primitives.

Types are ``tid``, finite products and sums, and functions.  Terms are
stratified into values and computations; the concurrency constants are

    fork : 1 -> tid + 1      wait : tid -> 1
    stop : 1 -> 0            printstop[s] : 1 -> 0

``print[s] : 1 -> 1`` plus the ``node``/``parallel``/``series`` combinators
are surface sugar; :func:`desugar` lowers them to the four core constants.
Typing judgements carry a *world*: the finite set of runtime thread IDs a
term may mention.

Runtime thread IDs are paths of naturals: the root thread is ``()`` and the
k-th thread forked directly by a thread extends its path by ``k``.  Source
syntax spells the root ``#0`` and descendants ``#0.1.2``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Union


class LangError(Exception):
    """Base error for parsing and typing."""


class ParseError(LangError):
    pass


class TypeCheckError(LangError):
    pass


class UnknownTid(TypeCheckError):
    pass


# --- types -------------------------------------------------------------------

@dataclass(frozen=True)
class TidType:
    pass


@dataclass(frozen=True)
class Prod:
    parts: tuple["LangType", ...]


@dataclass(frozen=True)
class Sum:
    parts: tuple["LangType", ...]


@dataclass(frozen=True)
class Arrow:
    arg: "LangType"
    res: "LangType"


@dataclass(frozen=True)
class Bot:
    """Synthesized for computations that provably never return a value
    (empty cases).  Declaratively the empty type embeds into every type;
    this marker gives the algorithmic checker the same strength, which
    matters for intermediate machine configurations where a dead branch
    has already been selected.  Never written in source syntax."""


LangType = Union[TidType, Prod, Sum, Arrow, Bot]

TID = TidType()
UNIT = Prod(())
EMPTY = Sum(())
BOTTOM = Bot()


def compatible(got: LangType, want: LangType) -> bool:
    """Type agreement up to the bottom marker sitting below everything."""
    if got == want or isinstance(got, Bot):
        return True
    match got, want:
        case (Prod(gs), Prod(ws)) | (Sum(gs), Sum(ws)):
            return len(gs) == len(ws) and all(
                compatible(g, w) for g, w in zip(gs, ws)
            )
        case (Arrow(ga, gr), Arrow(wa, wr)):
            return ga == wa and compatible(gr, wr)
    return False


def first_order(ty: LangType) -> bool:
    match ty:
        case TidType():
            return True
        case Prod(parts) | Sum(parts):
            return all(first_order(p) for p in parts)
        case Arrow(_, _):
            return False
    raise TypeError(f"not a type: {ty!r}")


def print_type(ty: LangType, level: int = 0) -> str:
    match ty:
        case TidType():
            return "tid"
        case Bot():
            return "<never>"
        case Prod(()):
            return "1"
        case Sum(()):
            return "0"
        case Prod(parts):
            if len(parts) == 1:
                raise LangError("unary products have no textual syntax")
            s = " * ".join(print_type(p, 3) for p in parts)
            return f"({s})" if level > 2 else s
        case Sum(parts):
            if len(parts) == 1:
                raise LangError("unary sums have no textual syntax")
            s = " + ".join(print_type(p, 2) for p in parts)
            return f"({s})" if level > 1 else s
        case Arrow(arg, res):
            s = f"{print_type(arg, 1)} -> {print_type(res, 0)}"
            return f"({s})" if level > 0 else s
    raise TypeError(f"not a type: {ty!r}")


# --- values and computations ---------------------------------------------------

Tid = tuple[int, ...]  # runtime thread ID: a path of spawn ordinals


def tid_str(path: Tid) -> str:
    return ".".join(["0"] + [str(k) for k in path])



def _node(cls):
    """Frozen dataclass with a cached hash.

    Syntax trees are shared aggressively between machine configurations,
    and exploration hashes configurations constantly; caching per node
    makes those hashes amortized O(1).
    """
    cls = dataclass(frozen=True)(cls)
    base_hash = cls.__hash__

    def __hash__(self):
        h = self.__dict__.get("_hash")
        if h is None:
            h = base_hash(self)
            self.__dict__["_hash"] = h
        return h

    cls.__hash__ = __hash__
    return cls


@_node
class VarV:
    name: str


@_node
class TupleV:
    items: tuple["Value", ...]


@_node
class InjV:
    index: int  # 1-based
    value: "Value"
    # runtime steps annotate the sum they inject into so that intermediate
    # configurations stay checkable; source syntax leaves this empty
    annot: Optional["LangType"] = None


@_node
class LambdaV:
    param: str
    annot: Optional[LangType]
    body: "Comp"


@_node
class TidV:
    path: Tid


@_node
class NilV:
    """The empty compound thread ID."""


@_node
class UnionV:
    left: "Value"
    right: "Value"


@_node
class ConstV:
    name: str  # fork | wait | stop | printstop | print | node | parallel | series
    action: Optional[str] = None


Value = Union[VarV, TupleV, InjV, LambdaV, TidV, NilV, UnionV, ConstV]

UNIT_V = TupleV(())
CORE_CONSTS = {"fork", "wait", "stop", "printstop"}
SUGAR_CONSTS = {"print", "node", "parallel", "series"}
_LABELLED = {"printstop", "print", "node"}


@_node
class Ret:
    value: Value


@_node
class ProjC:
    index: int
    value: Value


@_node
class CaseV:
    value: Value
    branches: tuple[tuple[str, "Comp"], ...]


@_node
class ApplyC:
    fn: Value
    arg: Value


@_node
class LetC:
    var: str
    bound: "Comp"
    body: "Comp"


@_node
class SeqC:
    """Surface sugar ``t1; t2``."""

    first: "Comp"
    second: "Comp"


@_node
class CaseC:
    """Surface sugar: case over a computation scrutinee."""

    comp: "Comp"
    branches: tuple[tuple[str, "Comp"], ...]


Comp = Union[Ret, ProjC, CaseV, ApplyC, LetC, SeqC, CaseC]


def const_signature(c: ConstV) -> Arrow:
    two_runners = Prod((Arrow(UNIT, EMPTY), Arrow(UNIT, EMPTY)))
    table = {
        "fork": Arrow(UNIT, Sum((TID, UNIT))),
        "wait": Arrow(TID, UNIT),
        "stop": Arrow(UNIT, EMPTY),
        "printstop": Arrow(UNIT, EMPTY),
        "print": Arrow(UNIT, UNIT),
        "node": Arrow(TID, TID),
        "parallel": Arrow(two_runners, EMPTY),
        "series": Arrow(two_runners, EMPTY),
    }
    try:
        return table[c.name]
    except KeyError:
        raise TypeCheckError(f"unknown constant {c.name!r}") from None


def tids_of_value(v: Value) -> frozenset[Tid]:
    """The ID set a tid-typed value denotes (closed values only)."""
    match v:
        case TidV(path):
            return frozenset({path})
        case NilV():
            return frozenset()
        case UnionV(left, right):
            return tids_of_value(left) | tids_of_value(right)
    raise LangError(f"not a closed thread-ID value: {v!r}")


# --- type checking ---------------------------------------------------------------

World = frozenset


def typecheck_comp(env: Mapping[str, LangType], world: World, t: Comp) -> LangType:
    """Synthesize the type of a computation; raise on failure."""
    return _synth_comp(dict(env), world, t)


def typecheck_value(env: Mapping[str, LangType], world: World, v: Value) -> LangType:
    return _synth_value(dict(env), world, v)


def check_comp(env: Mapping[str, LangType], world: World, t: Comp, ty: LangType) -> None:
    _check_comp(dict(env), world, t, ty)


def _synth_value(env, world, v) -> LangType:
    match v:
        case VarV(name):
            if name not in env:
                raise TypeCheckError(f"unbound variable {name!r}")
            return env[name]
        case TidV(path):
            if path not in world:
                raise UnknownTid(f"thread ID {tid_str(path)} not in the world")
            return TID
        case NilV():
            return TID
        case UnionV(left, right):
            _check_value(env, world, left, TID)
            _check_value(env, world, right, TID)
            return TID
        case TupleV(items):
            return Prod(tuple(_synth_value(env, world, i) for i in items))
        case InjV(_, _, annot) if annot is not None:
            _check_value(env, world, v, annot)
            return annot
        case InjV(_, _, _):
            raise TypeCheckError("cannot infer a sum type for an injection here")
        case LambdaV(param, annot, body):
            if annot is None:
                raise TypeCheckError(
                    f"cannot infer the argument type of \\{param}. ...; annotate it"
                )
            inner = dict(env)
            inner[param] = annot
            return Arrow(annot, _synth_comp(inner, world, body))
        case ConstV() as c:
            return const_signature(c)
    raise TypeError(f"not a value: {v!r}")


def _check_value(env, world, v, ty: LangType) -> None:
    match v, ty:
        case InjV(index, inner), Sum(parts):
            if not 1 <= index <= len(parts):
                raise TypeCheckError(
                    f"inj{index} into a sum with {len(parts)} summands"
                )
            _check_value(env, world, inner, parts[index - 1])
            return
        case InjV(index, _), _:
            raise TypeCheckError(f"inj{index} must have a sum type, not {print_type(ty)}")
        case TupleV(items), Prod(parts):
            if len(items) != len(parts):
                raise TypeCheckError(
                    f"tuple of {len(items)} checked against product of {len(parts)}"
                )
            for item, part in zip(items, parts):
                _check_value(env, world, item, part)
            return
        case LambdaV(param, annot, body), Arrow(arg, res):
            if annot is not None and annot != arg:
                raise TypeCheckError(
                    f"lambda annotated {print_type(annot)}, expected {print_type(arg)}"
                )
            inner = dict(env)
            inner[param] = arg
            _check_comp(inner, world, body, res)
            return
    got = _synth_value(env, world, v)
    if not compatible(got, ty):
        raise TypeCheckError(f"expected {print_type(ty)}, found {print_type(got)}")


def _synth_comp(env, world, t) -> LangType:
    match t:
        case Ret(v):
            return _synth_value(env, world, v)
        case ProjC(index, v):
            ty = _synth_value(env, world, v)
            if isinstance(ty, Bot):
                return BOTTOM
            if not isinstance(ty, Prod):
                raise TypeCheckError(f"proj{index} of non-product {print_type(ty)}")
            if not 1 <= index <= len(ty.parts):
                raise TypeCheckError(
                    f"proj{index} of a product with {len(ty.parts)} components"
                )
            return ty.parts[index - 1]
        case CaseV(v, branches):
            ty = _synth_value(env, world, v)
            return _synth_case(env, world, ty, branches)
        case CaseC(comp, branches):
            ty = _synth_comp(env, world, comp)
            return _synth_case(env, world, ty, branches)
        case ApplyC(fn, arg):
            return _synth_apply(env, world, fn, arg)
        case LetC(var, bound, body):
            bound_ty = _synth_comp(env, world, bound)
            inner = dict(env)
            inner[var] = bound_ty
            return _synth_comp(inner, world, body)
        case SeqC(first, second):
            _synth_comp(env, world, first)
            return _synth_comp(env, world, second)
    raise TypeError(f"not a computation: {t!r}")


def _synth_apply(env, world, fn, arg) -> LangType:
    if isinstance(fn, LambdaV):
        if fn.annot is None:
            arg_ty = _synth_value(env, world, arg)
        else:
            _check_value(env, world, arg, fn.annot)
            arg_ty = fn.annot
        inner = dict(env)
        inner[fn.param] = arg_ty
        return _synth_comp(inner, world, fn.body)
    fn_ty = _synth_value(env, world, fn)
    if isinstance(fn_ty, Bot):
        return BOTTOM
    if not isinstance(fn_ty, Arrow):
        raise TypeCheckError(f"applying a non-function of type {print_type(fn_ty)}")
    _check_value(env, world, arg, fn_ty.arg)
    return fn_ty.res


def _synth_case(env, world, scrut_ty, branches) -> LangType:
    if isinstance(scrut_ty, Bot):
        return BOTTOM
    if not isinstance(scrut_ty, Sum):
        raise TypeCheckError(f"case scrutinee has non-sum type {print_type(scrut_ty)}")
    if len(branches) != len(scrut_ty.parts):
        raise TypeCheckError(
            f"case with {len(branches)} branches on a sum of {len(scrut_ty.parts)}"
        )
    if not branches:
        # an empty case never returns
        return BOTTOM
    candidates: list[LangType] = []
    errors = []
    for (x, body), part in zip(branches, scrut_ty.parts):
        inner = dict(env)
        inner[x] = part
        try:
            ty = _synth_comp(inner, world, body)
            if ty not in candidates:
                candidates.append(ty)
        except TypeCheckError as exc:
            errors.append(str(exc))
    candidates.sort(key=lambda t: isinstance(t, Bot))
    for candidate in candidates:
        try:
            for (x, body), part in zip(branches, scrut_ty.parts):
                inner = dict(env)
                inner[x] = part
                _check_comp(inner, world, body, candidate)
            return candidate
        except TypeCheckError:
            continue
    if not candidates:
        raise TypeCheckError("no case branch synthesizes a type: " + "; ".join(errors))
    raise TypeCheckError("case branches do not agree on a single type")


def _check_comp(env, world, t, ty: LangType) -> None:
    match t:
        case Ret(v):
            _check_value(env, world, v, ty)
            return
        case CaseV(v, branches):
            scrut_ty = _synth_value(env, world, v)
            _check_case(env, world, scrut_ty, branches, ty)
            return
        case CaseC(comp, branches):
            scrut_ty = _synth_comp(env, world, comp)
            _check_case(env, world, scrut_ty, branches, ty)
            return
        case LetC(var, bound, body):
            bound_ty = _synth_comp(env, world, bound)
            inner = dict(env)
            inner[var] = bound_ty
            _check_comp(inner, world, body, ty)
            return
        case SeqC(first, second):
            _synth_comp(env, world, first)
            _check_comp(env, world, second, ty)
            return
    got = _synth_comp(env, world, t)
    if not compatible(got, ty):
        raise TypeCheckError(f"expected {print_type(ty)}, found {print_type(got)}")


def _check_case(env, world, scrut_ty, branches, ty) -> None:
    if isinstance(scrut_ty, Bot):
        return
    if not isinstance(scrut_ty, Sum):
        raise TypeCheckError(f"case scrutinee has non-sum type {print_type(scrut_ty)}")
    if len(branches) != len(scrut_ty.parts):
        raise TypeCheckError(
            f"case with {len(branches)} branches on a sum of {len(scrut_ty.parts)}"
        )
    for (x, body), part in zip(branches, scrut_ty.parts):
        inner = dict(env)
        inner[x] = part
        _check_comp(inner, world, body, ty)


# --- desugaring -------------------------------------------------------------------

def desugar(t: Comp) -> Comp:
    """Lower sequencing, case-of-computation, and the sugar constants to the
    fork/wait/stop/printstop core."""
    fresh = _fresh_namer(t)

    def ds(c: Comp) -> Comp:
        match c:
            case Ret(v):
                return Ret(dsv(v))
            case ProjC(i, v):
                return ProjC(i, dsv(v))
            case CaseV(v, branches):
                return CaseV(dsv(v), _ds_branches(branches))
            case CaseC(comp, branches):
                z = fresh("z")
                return LetC(z, ds(comp), CaseV(VarV(z), _ds_branches(branches)))
            case SeqC(first, second):
                return LetC(fresh("u"), ds(first), ds(second))
            case ApplyC(ConstV(name, action), arg) if name in SUGAR_CONSTS:
                return expand(name, action, dsv(arg))
            case ApplyC(fn, arg):
                return ApplyC(dsv(fn), dsv(arg))
            case LetC(var, bound, body):
                return LetC(var, ds(bound), ds(body))
        raise TypeError(f"not a computation: {c!r}")

    def _ds_branches(branches):
        return tuple((x, ds(body)) for x, body in branches)

    def dsv(v: Value) -> Value:
        match v:
            case ConstV(name, action) if name in SUGAR_CONSTS:
                z = fresh("f")
                return LambdaV(
                    z, const_signature(ConstV(name, action)).arg,
                    expand(name, action, VarV(z)),
                )
            case TupleV(items):
                return TupleV(tuple(dsv(i) for i in items))
            case InjV(i, inner, annot):
                return InjV(i, dsv(inner), annot)
            case UnionV(left, right):
                return UnionV(dsv(left), dsv(right))
            case LambdaV(param, annot, body):
                return LambdaV(param, annot, ds(body))
            case _:
                return v

    def call(name: str, arg: Value, action: Optional[str] = None) -> Comp:
        return ApplyC(ConstV(name, action), arg)

    def expand(name: str, action: Optional[str], arg: Value) -> Comp:
        if name == "print":
            # an action that can be followed: fork a thread that merely
            # performs it, then wait for that thread; the child branch is
            # coerced out of the empty type by an empty case
            z, a, u = fresh("z"), fresh("a"), fresh("u")
            return ds(
                LetC(
                    z,
                    call("fork", UNIT_V),
                    CaseV(
                        VarV(z),
                        (
                            (a, call("wait", VarV(a))),
                            (u, CaseC(call("printstop", UNIT_V, action), ())),
                        ),
                    ),
                )
            )
        if name == "node":
            # fork a child that waits on the given IDs then acts; hand the
            # child's ID back to the caller
            z, b, u = fresh("z"), fresh("b"), fresh("u")
            child = SeqC(
                call("wait", arg),
                SeqC(call("print", UNIT_V, action), CaseC(call("stop", UNIT_V), ())),
            )
            return ds(
                LetC(
                    z,
                    call("fork", UNIT_V),
                    CaseV(VarV(z), ((b, Ret(VarV(b))), (u, child))),
                )
            )
        if name in ("parallel", "series"):
            runner1, runner2, wrap = _split_pair(arg, fresh)
            if name == "series":
                z, a, u = fresh("z"), fresh("a"), fresh("u")
                body = LetC(
                    z,
                    call("fork", UNIT_V),
                    CaseV(
                        VarV(z),
                        (
                            (a, SeqC(call("wait", VarV(a)), ApplyC(runner2, UNIT_V))),
                            (u, ApplyC(runner1, UNIT_V)),
                        ),
                    ),
                )
            else:
                z1, z2, a, b, u = (
                    fresh("z"), fresh("z"), fresh("a"), fresh("b"), fresh("u")
                )
                inner = LetC(
                    z2,
                    call("fork", UNIT_V),
                    CaseV(
                        VarV(z2),
                        (
                            (
                                b,
                                SeqC(
                                    call("wait", VarV(a)),
                                    SeqC(call("wait", VarV(b)), call("stop", UNIT_V)),
                                ),
                            ),
                            (u, ApplyC(runner2, UNIT_V)),
                        ),
                    ),
                )
                fresh_u = fresh("u")
                body = LetC(
                    z1,
                    call("fork", UNIT_V),
                    CaseV(VarV(z1), ((a, inner), (fresh_u, ApplyC(runner1, UNIT_V)))),
                )
            return ds(wrap(body))
        raise TypeError(f"not a sugar constant: {name!r}")

    return ds(t)


def _split_pair(arg: Value, fresh) -> tuple[Value, Value, "object"]:
    """Access the two components of a pair argument: literal pairs are used
    directly, anything else goes through projections."""
    if isinstance(arg, TupleV) and len(arg.items) == 2:
        return arg.items[0], arg.items[1], lambda body: body

    f, g = fresh("f"), fresh("g")

    def wrap(body: Comp) -> Comp:
        return LetC(f, ProjC(1, arg), LetC(g, ProjC(2, arg), body))

    return VarV(f), VarV(g), wrap


def _fresh_namer(t: Comp):
    used: set[str] = set()

    def scan_comp(c: Comp) -> None:
        match c:
            case Ret(v) | ProjC(_, v):
                scan_value(v)
            case CaseV(v, branches):
                scan_value(v)
                for x, body in branches:
                    used.add(x)
                    scan_comp(body)
            case CaseC(comp, branches):
                scan_comp(comp)
                for x, body in branches:
                    used.add(x)
                    scan_comp(body)
            case ApplyC(fn, arg):
                scan_value(fn)
                scan_value(arg)
            case LetC(var, bound, body):
                used.add(var)
                scan_comp(bound)
                scan_comp(body)
            case SeqC(first, second):
                scan_comp(first)
                scan_comp(second)

    def scan_value(v: Value) -> None:
        match v:
            case VarV(name):
                used.add(name)
            case TupleV(items):
                for i in items:
                    scan_value(i)
            case InjV(_, inner):
                scan_value(inner)
            case UnionV(left, right):
                scan_value(left)
                scan_value(right)
            case LambdaV(param, _, body):
                used.add(param)
                scan_comp(body)

    scan_comp(t)
    counter = [0]

    def fresh(base: str) -> str:
        while True:
            counter[0] += 1
            name = f"_{base}{counter[0]}"
            if name not in used:
                used.add(name)
                return name

    return fresh


def is_core(t: Comp) -> bool:
    """True when no surface sugar remains."""

    def v_ok(v: Value) -> bool:
        match v:
            case ConstV(name, _):
                return name in CORE_CONSTS
            case TupleV(items):
                return all(v_ok(i) for i in items)
            case InjV(_, inner):
                return v_ok(inner)
            case UnionV(left, right):
                return v_ok(left) and v_ok(right)
            case LambdaV(_, _, body):
                return c_ok(body)
            case _:
                return True

    def c_ok(c: Comp) -> bool:
        match c:
            case Ret(v) | ProjC(_, v):
                return v_ok(v)
            case CaseV(v, branches):
                return v_ok(v) and all(c_ok(b) for _, b in branches)
            case ApplyC(fn, arg):
                return v_ok(fn) and v_ok(arg)
            case LetC(_, bound, body):
                return c_ok(bound) and c_ok(body)
            case SeqC(_, _) | CaseC(_, _):
                return False
        raise TypeError(f"not a computation: {c!r}")

    return c_ok(t)


def subst_value(t: Comp, name: str, v: Value) -> Comp:
    """Substitute a closed value for a variable in a computation."""

    def in_comp(c: Comp) -> Comp:
        match c:
            case Ret(w):
                return Ret(in_value(w))
            case ProjC(i, w):
                return ProjC(i, in_value(w))
            case CaseV(w, branches):
                return CaseV(
                    in_value(w),
                    tuple(
                        (x, body if x == name else in_comp(body))
                        for x, body in branches
                    ),
                )
            case CaseC(comp, branches):
                return CaseC(
                    in_comp(comp),
                    tuple(
                        (x, body if x == name else in_comp(body))
                        for x, body in branches
                    ),
                )
            case ApplyC(fn, arg):
                return ApplyC(in_value(fn), in_value(arg))
            case LetC(var, bound, body):
                return LetC(var, in_comp(bound), body if var == name else in_comp(body))
            case SeqC(first, second):
                return SeqC(in_comp(first), in_comp(second))
        raise TypeError(f"not a computation: {c!r}")

    def in_value(w: Value) -> Value:
        match w:
            case VarV(n):
                return v if n == name else w
            case TupleV(items):
                return TupleV(tuple(in_value(i) for i in items))
            case InjV(i, inner, annot):
                return InjV(i, in_value(inner), annot)
            case UnionV(left, right):
                return UnionV(in_value(left), in_value(right))
            case LambdaV(param, annot, body):
                if param == name:
                    return w
                return LambdaV(param, annot, in_comp(body))
            case _:
                return w

    return in_comp(t)


# --- textual syntax -----------------------------------------------------------------

_TOKEN_SPEC = [
    ("tid", r"#[0-9]+(?:\.[0-9]+)*"),
    ("label", r"\[[A-Za-z0-9_.$]+\]"),
    ("union", r"\(\+\)"),
    ("arrow", r"->"),
    ("darrow", r"=>"),
    ("name", r"[A-Za-z_][A-Za-z0-9_']*|\d+"),
    ("punct", r"[(){},;=|.\\:*+]"),
]
_MASTER_RE = re.compile(
    "|".join(f"(?P<{kind}>{pat})" for kind, pat in _TOKEN_SPEC)
)

_COMP_KEYWORDS = {"ret", "let", "case", "proj1", "proj2", "proj3"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


class _Lexer:
    def __init__(self, text: str):
        self.toks: list[_Tok] = []
        line, col = 1, 1
        pos = 0
        while pos < len(text):
            ch = text[pos]
            if ch == "\n":
                line += 1
                col = 1
                pos += 1
                continue
            if ch.isspace():
                col += 1
                pos += 1
                continue
            if text.startswith("--", pos):
                end = text.find("\n", pos)
                pos = len(text) if end < 0 else end
                continue
            m = _MASTER_RE.match(text, pos)
            if not m:
                raise ParseError(f"{line}:{col}: cannot read {text[pos:pos+12]!r}")
            self.toks.append(_Tok(m.lastgroup, m.group(), line, col))
            col += m.end() - pos
            pos = m.end()
        self.pos = 0

    def peek(self, ahead: int = 0) -> Optional[_Tok]:
        i = self.pos + ahead
        return self.toks[i] if i < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"{tok.line}:{tok.col}: expected {text!r}, got {tok.text!r}")
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text


def parse_program(text: str) -> tuple[World, Comp]:
    """Parse an optional ``world #0.1, ...;`` header and a computation."""
    lx = _Lexer(text)
    world: set[Tid] = set()
    if lx.at("world"):
        lx.next()
        while True:
            tok = lx.next()
            if tok.kind != "tid":
                raise ParseError(f"{tok.line}:{tok.col}: expected a tid literal")
            world.add(_parse_tid(tok.text))
            nxt = lx.next()
            if nxt.text == ";":
                break
            if nxt.text != ",":
                raise ParseError(f"{nxt.line}:{nxt.col}: expected ',' or ';'")
    comp = _parse_comp(lx)
    if lx.peek() is not None:
        tok = lx.peek()
        raise ParseError(f"{tok.line}:{tok.col}: trailing input {tok.text!r}")
    return frozenset(world), comp


def parse_comp(text: str) -> Comp:
    return parse_program(text)[1]


def _parse_tid(text: str) -> Tid:
    parts = text[1:].split(".")
    if parts[0] != "0":
        raise ParseError(f"tid literals are rooted at #0, got {text!r}")
    return tuple(int(p) for p in parts[1:])


def _parse_comp(lx: _Lexer) -> Comp:
    first = _parse_comp_atom(lx)
    if lx.at(";"):
        lx.next()
        return SeqC(first, _parse_comp(lx))
    return first


def _parse_comp_atom(lx: _Lexer) -> Comp:
    tok = lx.peek()
    if tok is None:
        raise ParseError("unexpected end of input")
    if tok.text == "ret":
        lx.next()
        return Ret(_parse_value(lx))
    if tok.text == "let":
        lx.next()
        var = _parse_ident(lx)
        lx.expect("=")
        bound = _parse_comp(lx)
        lx.expect("in")
        body = _parse_comp(lx)
        return LetC(var, bound, body)
    if tok.text == "case":
        lx.next()
        scrutinee = _parse_case_scrutinee(lx)
        lx.expect("of")
        lx.expect("{")
        branches = []
        while not lx.at("}"):
            inj = lx.next()
            index = _inj_index(inj)
            var = _parse_ident(lx)
            lx.expect("=>")
            body = _parse_comp(lx)
            branches.append((var, body))
            if lx.at("|"):
                lx.next()
        lx.expect("}")
        if isinstance(scrutinee, tuple):
            return CaseC(scrutinee[1], tuple(branches))
        return CaseV(scrutinee, tuple(branches))
    if tok.text.startswith("proj") and tok.text[4:].isdigit():
        lx.next()
        return ProjC(int(tok.text[4:]), _parse_value(lx))
    # otherwise an application: value(args) or value value
    fn = _parse_value(lx)
    if lx.at("("):
        arg = _parse_paren_args(lx)
        return ApplyC(fn, arg)
    nxt = lx.peek()
    if nxt is not None and _starts_value(nxt):
        return ApplyC(fn, _parse_value(lx))
    raise ParseError(
        f"{tok.line}:{tok.col}: a bare value is not a computation; apply it or use ret"
    )


def _parse_case_scrutinee(lx: _Lexer):
    tok = lx.peek()
    if tok.text in ("ret", "let", "case") or (
        tok.text.startswith("proj") and tok.text[4:].isdigit()
    ):
        return ("comp", _parse_comp_atom(lx))
    v = _parse_value(lx)
    if lx.at("("):
        arg = _parse_paren_args(lx)
        return ("comp", ApplyC(v, arg))
    return v


def _parse_paren_args(lx: _Lexer) -> Value:
    lx.expect("(")
    if lx.at(")"):
        lx.next()
        return UNIT_V
    items = [_parse_value(lx)]
    while lx.at(","):
        lx.next()
        items.append(_parse_value(lx))
    lx.expect(")")
    return items[0] if len(items) == 1 else TupleV(tuple(items))


def _starts_value(tok: _Tok) -> bool:
    if tok.kind in ("tid",):
        return True
    if tok.text in ("(", "\\", "nil"):
        return True
    if tok.kind == "name" and tok.text not in (
        "ret", "let", "in", "case", "of", "world",
    ) and not tok.text.isdigit():
        return True
    return False


def _parse_ident(lx: _Lexer) -> str:
    tok = lx.next()
    if tok.kind != "name" or tok.text.isdigit():
        raise ParseError(f"{tok.line}:{tok.col}: expected an identifier, got {tok.text!r}")
    return tok.text


def _inj_index(tok: _Tok) -> int:
    if tok.text.startswith("inj") and tok.text[3:].isdigit():
        return int(tok.text[3:])
    raise ParseError(f"{tok.line}:{tok.col}: expected injN pattern, got {tok.text!r}")


def _parse_value(lx: _Lexer) -> Value:
    v = _parse_value_atom(lx)
    if lx.at("(+)"):
        lx.next()
        return UnionV(v, _parse_value(lx))
    return v


def _parse_value_atom(lx: _Lexer) -> Value:
    tok = lx.next()
    if tok.kind == "tid":
        return TidV(_parse_tid(tok.text))
    if tok.text == "nil":
        return NilV()
    if tok.text == "(":
        if lx.at(")"):
            lx.next()
            return UNIT_V
        items = [_parse_value(lx)]
        while lx.at(","):
            lx.next()
            items.append(_parse_value(lx))
        lx.expect(")")
        return items[0] if len(items) == 1 else TupleV(tuple(items))
    if tok.text == "\\":
        param = _parse_ident(lx)
        annot = None
        if lx.at(":"):
            lx.next()
            annot = _parse_type(lx)
        lx.expect(".")
        body = _parse_comp(lx)
        return LambdaV(param, annot, body)
    if tok.text.startswith("inj") and tok.text[3:].isdigit():
        return InjV(int(tok.text[3:]), _parse_value_atom(lx))
    if tok.text in ("fork", "wait", "stop", "parallel", "series"):
        return ConstV(tok.text)
    if tok.text in _LABELLED:
        label_tok = lx.next()
        if label_tok.kind != "label":
            raise ParseError(
                f"{label_tok.line}:{label_tok.col}: {tok.text} needs an [action] label"
            )
        return ConstV(tok.text, label_tok.text[1:-1])
    if tok.kind == "name" and not tok.text.isdigit():
        return VarV(tok.text)
    raise ParseError(f"{tok.line}:{tok.col}: expected a value, got {tok.text!r}")


def _parse_type(lx: _Lexer) -> LangType:
    left = _parse_type_sum(lx)
    if lx.at("->"):
        lx.next()
        return Arrow(left, _parse_type(lx))
    return left


def _parse_type_sum(lx: _Lexer) -> LangType:
    parts = [_parse_type_prod(lx)]
    while lx.at("+"):
        lx.next()
        parts.append(_parse_type_prod(lx))
    return parts[0] if len(parts) == 1 else Sum(tuple(parts))


def _parse_type_prod(lx: _Lexer) -> LangType:
    parts = [_parse_type_atom(lx)]
    while lx.at("*"):
        lx.next()
        parts.append(_parse_type_atom(lx))
    return parts[0] if len(parts) == 1 else Prod(tuple(parts))


def _parse_type_atom(lx: _Lexer) -> LangType:
    tok = lx.next()
    if tok.text == "tid":
        return TID
    if tok.text == "1":
        return UNIT
    if tok.text == "0":
        return EMPTY
    if tok.text == "(":
        ty = _parse_type(lx)
        lx.expect(")")
        return ty
    raise ParseError(f"{tok.line}:{tok.col}: expected a type, got {tok.text!r}")


# --- printing ------------------------------------------------------------------------

def print_value(v: Value) -> str:
    match v:
        case VarV(name):
            return name
        case TupleV(()):
            return "()"
        case TupleV(items):
            return "(" + ", ".join(print_value(i) for i in items) + ")"
        case InjV(i, inner):
            return f"inj{i} {_print_value_atom(inner)}"
        case LambdaV(param, None, body):
            return f"\\{param}. {print_comp(body)}"
        case LambdaV(param, annot, body):
            return f"\\{param}:{print_type(annot)}. {print_comp(body)}"
        case TidV(path):
            return "#" + tid_str(path)
        case NilV():
            return "nil"
        case UnionV(left, right):
            return f"{_print_value_atom(left)} (+) {_print_value_atom(right)}"
        case ConstV(name, None):
            return name
        case ConstV(name, action):
            return f"{name}[{action}]"
    raise TypeError(f"not a value: {v!r}")


def _print_value_atom(v: Value) -> str:
    text = print_value(v)
    if isinstance(v, (LambdaV, UnionV, InjV)):
        return f"({text})"
    return text


def print_comp(t: Comp) -> str:
    match t:
        case Ret(v):
            return f"ret {print_value(v)}"
        case ProjC(i, v):
            return f"proj{i} {_print_value_atom(v)}"
        case CaseV(v, branches):
            return f"case {print_value(v)} of {_print_branches(branches)}"
        case CaseC(comp, branches):
            return f"case {print_comp(comp)} of {_print_branches(branches)}"
        case ApplyC(fn, TupleV(items)) if len(items) != 1:
            args = ", ".join(print_value(i) for i in items)
            return f"{_print_value_atom(fn)}({args})"
        case ApplyC(fn, arg):
            return f"{_print_value_atom(fn)}({print_value(arg)})"
        case LetC(var, bound, body):
            return f"let {var} = {print_comp(bound)} in {print_comp(body)}"
        case SeqC(first, second):
            return f"{print_comp(first)}; {print_comp(second)}"
    raise TypeError(f"not a computation: {t!r}")


def _print_branches(branches) -> str:
    if not branches:
        return "{}"
    inner = " | ".join(
        f"inj{i} {x} => {print_comp(body)}"
        for i, (x, body) in enumerate(branches, start=1)
    )
    return "{ " + inner + " }"


def print_program(world: World, t: Comp) -> str:
    header = ""
    if world:
        tids = ", ".join("#" + tid_str(p) for p in sorted(world))
        header = f"world {tids};\n"
    return header + print_comp(t) + "\n"
