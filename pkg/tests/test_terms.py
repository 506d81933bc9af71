from __future__ import annotations

import random

import pytest

from dynthreads.tids import ParamContext
from dynthreads.terms import (
    Act,
    ArityMismatch,
    CompContext,
    Fork,
    ShadowedBinder,
    Stop,
    STOP,
    UnboundParameter,
    Var,
    Wait,
    alpha_eq,
    axiom_schemas,
    derived_node,
    free_params,
    parse_term,
    parse_term_file,
    print_term,
    print_term_file,
    scope_check,
    subst_comp,
    subst_param,
    tidset,
)


def test_scope_check_accepts_closed_fork_wait():
    t = parse_term("fork(a. wait(a, act[s2]), act[s1])")
    scope_check(t, CompContext(()), ParamContext(()))


def test_scope_check_unbound_parameter():
    with pytest.raises(UnboundParameter):
        scope_check(Var("x", (tidset("b"),)), CompContext((("x", 1),)), ParamContext(("a",)))


def test_scope_check_arity_mismatch():
    with pytest.raises(ArityMismatch):
        scope_check(
            Var("x", (tidset("a"), tidset("a"))),
            CompContext((("x", 1),)),
            ParamContext(("a",)),
        )


def test_scope_check_shadowed_binder():
    t = parse_term("fork(a. fork(a. x(a), stop), stop)")
    with pytest.raises(ShadowedBinder):
        scope_check(t, CompContext((("x", 1),)), ParamContext(()))


def test_subst_param_identity():
    t = parse_term("wait(a, x(a + b))")
    assert subst_param(t, tidset("a"), "a") == t


def test_subst_param_direct():
    t = parse_term("wait(a, stop)")
    assert subst_param(t, frozenset(), "a") == Wait(frozenset(), STOP)


def test_subst_param_node_example():
    # pointing a fresh input at a compound of two ambient IDs
    fig_b = parse_term("node[s](a3, b1. node[t](a1, b2. x(b2, b1)))")
    fig_c = parse_term("node[s](a1 + a2, b1. node[t](a1, b2. x(b2, b1)))")
    assert alpha_eq(subst_param(fig_b, tidset("a1", "a2"), "a3"), fig_c)


def test_subst_param_capture_avoided():
    # replacement mentions the binder name: binder must be renamed
    t = parse_term("fork(b. x(a + b), stop)")
    result = subst_param(t, tidset("b"), "a")
    assert isinstance(result, Fork)
    assert result.binder != "b"
    assert result.parent == Var("x", (frozenset({"b", result.binder}),))


def test_subst_comp_renaming():
    t = Var("x", (tidset("a"),))
    assert subst_comp(t, ("b",), Var("x'", (tidset("b"),)), "x") == Var("x'", (tidset("a"),))


def test_subst_comp_single_occurrence():
    t = parse_term("fork(c. x(c), stop)")
    body = parse_term("wait(b, stop)")
    expected = parse_term("fork(c. wait(c, stop), stop)")
    assert alpha_eq(subst_comp(t, ("b",), body, "x"), expected)


def test_subst_comp_fig4_example():
    # merging the two outputs of the two-output term into one
    fig_c = parse_term("node[s](a1 + a2, c1. node[t](a1, c2. x(c2, c1)))")
    fig_d = parse_term("node[s](a1 + a2, c1. node[t](a1, c2. y(c2 + c1)))")
    body = Var("y", (tidset("b1", "b2"),))
    assert alpha_eq(subst_comp(fig_c, ("b1", "b2"), body, "x"), fig_d)


def test_subst_comp_capture_avoided():
    # body's free ID collides with a host binder
    t = parse_term("fork(b. x(b), stop)")
    body = Var("y", (tidset("b", "c"),))  # c bound by the substitution, b ambient
    result = subst_comp(t, ("c",), body, "x")
    assert isinstance(result, Fork)
    assert result.binder != "b"
    assert result.parent == Var("y", (frozenset({"b", result.binder}),))


def test_substitutions_preserve_scope():
    gamma = CompContext((("x", 1), ("y", 0)))
    delta = ParamContext(("a", "b"))
    t = parse_term("fork(c. wait(a + c, x(b + c)), y)")
    scope_check(t, gamma, delta)

    s1 = subst_param(t, tidset("b"), "a")
    scope_check(s1, gamma, ParamContext(("b",)))

    s2 = subst_comp(t, ("d",), parse_term("wait(d, act[s])"), "x")
    scope_check(s2, CompContext((("y", 0),)), delta)


def test_subst_param_commutes_with_subst_comp_on_independent_targets():
    rng = random.Random(11)
    gamma = CompContext((("x", 1),))
    delta = ParamContext(("a", "b"))
    body = parse_term("wait(c + b, act[s])")
    for _ in range(50):
        t = _random_term(rng, ["a", "b"], depth=3)
        scope_check(t, gamma, delta)
        # a is not free in body's instantiation inputs; orders must agree
        one = subst_param(subst_comp(t, ("c",), body, "x"), tidset("b"), "a")
        two = subst_comp(subst_param(t, tidset("b"), "a"), ("c",), body, "x")
        assert alpha_eq(one, two)


def _random_term(rng: random.Random, scope: list[str], depth: int):
    choice = rng.random()
    if depth == 0 or choice < 0.2:
        return rng.choice([STOP, Act("s"), Var("x", (_rand_guard(rng, scope),))])
    if choice < 0.5:
        binder = f"t{rng.randrange(1000)}"
        return Fork(
            binder,
            _random_term(rng, scope + [binder], depth - 1),
            _random_term(rng, scope, depth - 1),
        )
    if choice < 0.8:
        return Wait(_rand_guard(rng, scope), _random_term(rng, scope, depth - 1))
    return Var("x", (_rand_guard(rng, scope),))


def _rand_guard(rng: random.Random, scope: list[str]) -> frozenset[str]:
    return frozenset(n for n in scope if rng.random() < 0.4)


def test_axiom_schemas_shape():
    axioms = axiom_schemas()
    assert [a.name for a in axioms] == [
        "W-UNIT", "W-ACC", "W-CLOSE", "FW-COMM",
        "F-COMM", "F-ASSOC", "F-UNIT-L", "F-UNIT-R",
    ]
    for a in axioms:
        scope_check(a.lhs, a.gamma, a.delta)
        scope_check(a.rhs, a.gamma, a.delta)

    by_name = {a.name: a for a in axioms}
    assert by_name["W-UNIT"].lhs == Wait(frozenset(), Var("x"))
    assert by_name["W-UNIT"].rhs == Var("x")
    assert alpha_eq(
        by_name["F-ASSOC"].lhs,
        parse_term("fork(a. x(a), fork(b. y(b), z))"),
    )
    assert alpha_eq(
        by_name["F-ASSOC"].rhs,
        parse_term("fork(b. fork(a. x(a), y(b)), z)"),
    )
    assert alpha_eq(
        by_name["F-UNIT-R"].lhs,
        parse_term("fork(a. x(a), wait(b, stop))"),
    )
    assert by_name["F-UNIT-R"].rhs == Var("x", (tidset("b"),))


def test_derived_node_expansion():
    t = derived_node("s", tidset("a"), "b", Var("x", (tidset("b"),)))
    assert t == parse_term("fork(b. x(b), wait(a, act[s]))")
    t0 = derived_node("s", frozenset(), "b", STOP)
    assert t0 == parse_term("fork(b. stop, wait(0, act[s]))")


def test_derived_node_nested_scopes():
    nested = parse_term("node[s](a1 + a2, b1. node[t](a1, b2. x(b2, b1)))")
    expected = Fork(
        "b1",
        Fork("b2", Var("x", (tidset("b2"), tidset("b1"))), Wait(tidset("a1"), Act("t"))),
        Wait(tidset("a1", "a2"), Act("s")),
    )
    assert nested == expected
    scope_check(nested, CompContext((("x", 2),)), ParamContext(("a1", "a2")))


def test_parse_print_round_trip():
    sources = [
        "stop",
        "act[s1]",
        "x",
        "x(a + b, 0)",
        "fork(a. wait(a, act[s2]), act[s1])",
        "wait(0, stop)",
        "fork(b1. fork(b2. wait(a1 + b1 + b2, stop), wait(a1 + b1, x(a1 + a2 + b1))), wait(a1, act[s1]))",
    ]
    for src in sources:
        t = parse_term(src)
        assert print_term(t) == src
        assert parse_term(print_term(t)) == t


def test_parse_print_term_file_round_trip():
    text = "vars x:1, y:0;\ntids a, b;\nfork(c. x(a + c), y)\n"
    gamma, delta, term = parse_term_file(text)
    assert print_term_file(gamma, delta, term) == text
    assert gamma == CompContext((("x", 1), ("y", 0)))
    assert delta == ParamContext(("a", "b"))
    assert free_params(term) == {"a"}
