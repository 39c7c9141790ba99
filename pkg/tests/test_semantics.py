from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_executions
from sirobust.generate import GenConfig, generate_program
from sirobust.semantics import (
    SER,
    SI,
    Event,
    InvalidStep,
    enabled_ser,
    enabled_si,
    enumerate_executions,
    events_from_json,
    events_from_text,
    events_to_json,
    events_to_text,
    initial_state,
    replay,
    registers,
)


def as_set(p, mode):
    return {(tuple(e.events), not e.blocked) for e in enumerate_executions(p, mode)}


@pytest.mark.parametrize("name", ["ws", "ws_no_y", "smallbank_mini", "courseware_mini", "empty"])
@pytest.mark.parametrize("mode", [SI, SER])
def test_executions_match_brute_force(corpus, name, mode):
    p = corpus(name)
    assert as_set(p, mode) == brute_force_executions(p, mode)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_generated_executions_match_brute_force(seed):
    p = generate_program(GenConfig(2, 2, 2, 2, 2, seed))
    for mode in (SI, SER):
        assert as_set(p, mode) == brute_force_executions(p, mode)


def test_ws_counts(corpus):
    p = corpus("ws")
    assert sum(1 for _ in enumerate_executions(p, SI)) == 70
    assert sum(1 for _ in enumerate_executions(p, SER)) == 2


def test_ws_write_skew_values(corpus):
    p = corpus("ws")

    def outcomes(mode):
        out = set()
        for ex in enumerate_executions(p, mode):
            v = registers(p, ex.final_state)
            out.add((v["p1.r1"], v["p2.r2"]))
        return out

    assert (0, 0) in outcomes(SI)
    assert (0, 0) not in outcomes(SER)


def test_empty_program_single_empty_execution(corpus):
    exs = list(enumerate_executions(corpus("empty"), SI))
    assert len(exs) == 1 and exs[0].events == [] and not exs[0].blocked


def test_ser_executions_are_serial(corpus):
    p = corpus("smallbank_mini")
    for ex in enumerate_executions(p, SER):
        open_tid = None
        for e in ex.events:
            if e.kind == "begin":
                assert open_tid is None
                open_tid = e.tid
            else:
                assert e.tid == open_tid
                if e.kind == "com":
                    open_tid = None


def test_replay_reproduces_final_state(corpus):
    p = corpus("courseware_mini")
    for ex in enumerate_executions(p, SI):
        assert replay(p, ex.events, SI).key() == ex.final_state.key()


def test_replay_rejects_impossible_step(corpus):
    p = corpus("ws")
    bad = [Event("begin", "p1", "t1"), Event("load", "p1", "t1", 0, "y", 1)]
    with pytest.raises(InvalidStep) as ei:
        replay(p, bad, SI)
    assert ei.value.index == 1


def test_ser_steps_are_si_steps(corpus):
    p = corpus("ws")
    s = initial_state(p)
    si = {e for e, _ in enabled_si(p, s)}
    assert {e for e, _ in enabled_ser(p, s)} <= si


def test_si_commit_conflict_blocks_second_writer():
    from sirobust.ir import parse_program

    p = parse_program("program\nvars x\nprocess p1\n transaction a\n  begin\n  x := 1\n  commit\n"
                      "process p2\n transaction b\n  begin\n  x := 1\n  commit\n")
    for ex in enumerate_executions(p, SI):
        ev = ex.events
        # both began before either committed: the second commit must be impossible
        if [e.kind for e in ev[:4]].count("begin") == 2 and ev[2].kind == "begin":
            assert ex.blocked
    assert any(ex.blocked for ex in enumerate_executions(p, SI))


event_st = st.builds(
    Event,
    st.sampled_from(["begin", "load", "isu", "com"]),
    st.sampled_from(["p1", "p2"]),
    st.sampled_from(["t1", "t2"]),
    st.integers(0, 3),
    st.one_of(st.none(), st.sampled_from(["x", "y"])),
    st.one_of(st.none(), st.integers(0, 4)),
)


@given(st.lists(event_st, max_size=8))
def test_event_serialisation_round_trip(events):
    assert events_from_text(events_to_text(events)) == events
    assert events_from_json(events_to_json(events)) == events
