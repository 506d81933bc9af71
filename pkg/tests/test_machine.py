from __future__ import annotations

import pytest

from dynthreads.lang import (
    EMPTY,
    TID,
    UNIT,
    InjV,
    Ret,
    Sum,
    TidV,
    TupleV,
    desugar,
    parse_comp,
    typecheck_comp,
)
from dynthreads.machine import (
    FINISHED,
    Configuration,
    Deadlock,
    FuelExhausted,
    StepLabel,
    check_config_well_formed,
    check_confluence,
    enabled_steps,
    explore,
    find_extending_order,
    run,
    run_result_to_json,
    run_with_preservation,
)
from dynthreads.posets import Pomset

from corpus import corpus_names, load_core


def test_fork_spawns_child_with_path_naming():
    c = Configuration.initial(desugar(parse_comp("fork()")))
    steps = enabled_steps(c)
    assert len(steps) == 1
    label, nxt = steps[0]
    assert label == StepLabel((), None)
    assert nxt.world == {(), (1,)}
    fork_result = Sum((TID, UNIT))
    assert nxt.thread(()) == Ret(InjV(1, TidV((1,)), fork_result))
    assert nxt.thread((1,)) == Ret(InjV(2, TupleV(()), fork_result))


def test_printstop_is_a_labelled_step():
    c = Configuration.initial(desugar(parse_comp("printstop[s]()")))
    (label, nxt), = enabled_steps(c)
    assert label.action == "s"
    assert nxt.thread(()) == FINISHED


def test_waiting_thread_is_not_enabled():
    c = Configuration.initial(desugar(parse_comp("wait(#0.1); stop()")))
    # pretend the world already contains the unfinished thread 0.1
    threads = dict(c.threads)
    threads[(1,)] = desugar(parse_comp("stop()"))
    c = Configuration(
        c.world | {(1,)},
        frozenset(),
        tuple(sorted(threads.items())),
    )
    (first, _), (second, _) = sorted(enabled_steps(c), key=lambda s: s[0].acting)
    assert {first.acting, second.acting} == {(), (1,)}

    # after the wait records the dependency, only 0.1 may move
    label, c2 = [s for s in enabled_steps(c) if s[0].acting == ()][0]
    assert ((1,), ()) in c2.prec
    assert [lab.acting for lab, _ in enabled_steps(c2)] == [(1,)]


def test_run_wait_first_gives_chain():
    result = run(load_core("ex21_wait_first"))
    expected = Pomset.of({"a": "s2", "b": "s1"}, {("a", "b")})
    assert result.pomset.iso_to(expected) is not None


def test_run_no_wait_still_gives_discrete_under_any_policy():
    expected = Pomset.of({"a": "s1", "b": "s2"}, set())
    for policy, seed in (("lowest-tid", None), ("random", 1), ("random", 99)):
        result = run(load_core("ex21_no_wait"), policy=policy, seed=seed)
        assert result.pomset.iso_to(expected) is not None


def test_run_stop_has_empty_pomset():
    result = run(load_core("stop_now"))
    assert result.pomset.element_ids == frozenset()
    assert result.terminal.is_terminal()


def test_run_records_trace_lines():
    result = run(load_core("printstop_single"))
    assert result.trace == ("0 s1 -> finished",)


def test_random_policy_needs_seed():
    with pytest.raises(Exception):
        run(load_core("stop_now"), policy="random")


def test_fuel_exhaustion_reported():
    with pytest.raises(FuelExhausted):
        run(load_core("nshape"), fuel=3)


def test_explore_no_wait_has_two_traces_one_observation():
    result = explore(load_core("ex21_no_wait"))
    assert result.traces == {("s1", "s2"), ("s2", "s1")}
    assert result.all_iso
    assert result.traces_match_linearizations
    assert len(result.terminals) == 1
    expected = Pomset.of({"a": "s1", "b": "s2"}, set())
    assert result.observations[0].iso_to(expected) is not None


def test_explore_wait_first_has_single_trace():
    result = explore(load_core("ex21_wait_first"))
    assert result.traces == {("s2", "s1")}
    assert result.traces_match_linearizations


def test_explore_nshape_matches_n_poset():
    result = explore(load_core("nshape"), max_states=100_000)
    n_poset = Pomset.of(
        {"1": "s1", "2": "s2", "3": "s3", "4": "s4"},
        {("1", "3"), ("2", "3"), ("2", "4")},
    )
    assert result.all_iso
    for pom in result.observations:
        assert pom.iso_to(n_poset) is not None
    assert result.traces_match_linearizations
    assert result.traces == n_poset.linearizations()


def test_fresh_naming_is_schedule_independent():
    worlds = set()
    for seed in range(5):
        result = run(load_core("nested_forks"), policy="random", seed=seed)
        worlds.add(result.terminal.world)
    assert len(worlds) == 1


def test_terminal_configuration_is_schedule_independent():
    finals = set()
    for seed in range(5):
        result = run(load_core("two_children_one_waited"), policy="random", seed=seed)
        finals.add(result.terminal)
    assert len(finals) == 1


def test_confluence_on_selected_programs():
    for name in ("nshape", "ex21_no_wait", "parallel", "grandchild", "chain3"):
        report = check_confluence(load_core(name))
        assert report.ok, (name, report.detail)


def test_confluence_vacuous_for_sequential_program():
    report = check_confluence(desugar(parse_comp("printstop[s1]()")))
    assert report.ok and report.states == 2


def test_preservation_along_runs():
    for name in ("ex21_wait_first", "nshape", "parallel", "grandchild"):
        comp = load_core(name)
        assert typecheck_comp({}, frozenset(), comp) == EMPTY
        result, checks = run_with_preservation(comp, EMPTY)
        assert result.terminal.is_terminal()
        assert checks == len(result.events) + 1


def test_config_well_formed_rejects_wait_against_order():
    c = Configuration(
        frozenset({(), (1,)}),
        frozenset({((), (1,))}),  # thread 0.1 waits on the root
        (((), FINISHED), ((1,), FINISHED)),
    )
    # thread 0.1 waits on the root, so the root must be earlier in any
    # admissible creation order
    assert check_config_well_formed(c, EMPTY, ((), (1,)), frozenset()) is None
    bad = check_config_well_formed(c, EMPTY, ((1,), ()), frozenset())
    assert bad is not None and "later sibling" in bad


def test_find_extending_order_inserts_new_thread():
    comp = load_core("ex21_wait_first")
    c = Configuration.initial(comp)
    order = ((),)
    assert check_config_well_formed(c, EMPTY, order) is None
    steps = enabled_steps(c)
    _, c2 = steps[0]
    extended = find_extending_order(c2, EMPTY, order)
    assert extended is not None
    assert tuple(t for t in extended if t in set(order)) == order


def test_whole_corpus_runs_to_termination():
    for name in corpus_names():
        comp = load_core(name)
        assert typecheck_comp({}, frozenset(), comp) == EMPTY, name
        result = run(comp)
        assert result.terminal.is_terminal(), name


def test_run_result_json_shape():
    result = run(load_core("series"))
    data = run_result_to_json(result, "lowest-tid", None)
    assert data["policy"] == "lowest-tid"
    assert data["steps"] == len(result.events)
    assert data["pomset"]["inputs"] == 0
    labels = sorted(v["label"] for v in data["pomset"]["vertices"])
    assert labels == ["s1", "s2"]


def test_prec_only_grows_and_stays_transitive():
    for name in ("nshape", "grandchild", "redundant_wait"):
        comp = load_core(name)
        from dynthreads.machine import Configuration

        c = Configuration.initial(comp)
        while True:
            steps = enabled_steps(c)
            if not steps:
                break
            _, nxt = steps[0]
            assert c.prec <= nxt.prec
            pairs = set(nxt.prec)
            assert all(
                (a, d) in pairs
                for (a, b) in pairs
                for (x, d) in pairs
                if x == b
            )
            c = nxt


def test_run_exhaustive_policy_returns_result_set():
    from dynthreads.machine import run_exhaustive

    results = run(load_core("ex21_no_wait"), policy="exhaustive")
    assert results == run_exhaustive(load_core("ex21_no_wait"))
    assert len(results) == 1
    expected = Pomset.of({"a": "s1", "b": "s2"}, set())
    assert results[0].pomset.iso_to(expected) is not None
