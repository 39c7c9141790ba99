from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirobust.generate import GenConfig, generate_program
from sirobust.ir import (
    Assume,
    BinOp,
    Commit,
    Const,
    Instruction,
    ParseError,
    Process,
    Program,
    Read,
    Reg,
    SemanticError,
    Transaction,
    Write,
    parse_expr,
    format_expr,
    parse_program,
    print_program,
    validate_program,
)

WS = """
program
vars x y
process p1 regs r1
  transaction t1
    begin
    r1 := y
    x := 1
    commit
process p2 regs r2
  transaction t2
    begin
    r2 := x
    y := 1
    commit
"""


def codes(text: str) -> set[str]:
    with pytest.raises(SemanticError) as ei:
        parse_program(text)
    return {d.code for d in ei.value.diagnostics}


def test_parse_ws_structure():
    p = parse_program(WS)
    assert [q.pid for q in p.processes] == ["p1", "p2"]
    assert p.shared_vars == ("x", "y")
    t1 = p.transaction("t1")
    assert t1.read_vars() == {"y"} and t1.write_vars() == {"x"}
    assert isinstance(t1.instructions[1].op, Read)
    assert isinstance(t1.instructions[-1].op, Commit)
    # fall-through gotos were filled in
    assert all(ins.goto for ins in t1.instructions[:-1])


def test_round_trip_ws(corpus):
    for name in ("ws", "ws_no_y", "robsto", "smallbank_mini", "fig10_guarded_swap", "empty"):
        p = corpus(name)
        assert parse_program(print_program(p)) == p


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.integers(1, 3), st.integers(2, 3))
def test_round_trip_generated(seed, procs, txns, instrs, nvars, domain):
    p = generate_program(GenConfig(procs, txns, instrs, nvars, domain, seed))
    assert validate_program(p) == []
    text = print_program(p)
    assert parse_program(text) == p
    assert print_program(parse_program(text)) == text


@given(st.recursive(
    st.one_of(st.integers(0, 1).map(Const), st.sampled_from(["a", "b"]).map(Reg)),
    lambda sub: st.tuples(st.sampled_from(["+", "-"]), sub, sub).map(lambda t: BinOp(*t)),
    max_leaves=8))
def test_expression_round_trip(e):
    assert parse_expr(format_expr(e), regs=["a", "b"]) == e


def test_parse_error_positions():
    with pytest.raises(ParseError) as ei:
        parse_program("vars x\n")
    assert ei.value.line == 1
    with pytest.raises(ParseError) as ei:
        parse_program("program\nprocess p1 regs r\n  begin\n")
    assert ei.value.line == 3


def test_missing_begin_and_unknown_label():
    assert "MissingBegin" in codes("program\nvars x\nprocess p\n transaction t\n  x := 1\n  commit\n")
    assert "UnknownLabel" in codes(
        "program\nvars x\nprocess p\n transaction t\n  begin; goto nowhere\n  commit\n")


def test_undeclared_register_and_duplicate_tid():
    assert "UndeclaredRegister" in codes(
        "program\nvars x\nprocess p\n transaction t\n  begin\n  r := x\n  commit\n")
    assert "DuplicateTid" in codes(
        "program\nvars x\nprocess p\n transaction t\n  begin\n  commit\n"
        "process q\n transaction t\n  begin\n  commit\n")


def test_constant_out_of_domain():
    assert "ConstantOutOfDomain" in codes(
        "program domain 2\nvars x\nprocess p\n transaction t\n  begin\n  x := 5\n  commit\n")


def test_validate_reports_domain_and_clash():
    t = Transaction("t", (Instruction("a", Assume(BinOp("==", Const(0), Const(0))), ("b",)),
                          Instruction("b", Commit())))
    p = Program((Process("p", ("x",), (t,)),), ("x",), 1)
    got = {d.code for d in validate_program(p)}
    assert {"DomainTooSmall", "NameClash", "MissingBegin"} <= got


def test_write_rejects_boolean_expression():
    assert "BooleanInWrite" in codes(
        "program\nvars x\nprocess p regs r\n transaction t\n  begin\n  r := x\n  x := r == 0\n  commit\n")


def test_empty_program(corpus):
    p = corpus("empty")
    assert p.processes == () and validate_program(p) == []


def test_write_of_register_plus_one():
    p = parse_program("program domain 3\nvars x\nprocess p regs r\n transaction t\n"
                      "  begin\n  r := x\n  x := r + 1\n  commit\n")
    w = p.transaction("t").instructions[2].op
    assert isinstance(w, Write) and w.expr == BinOp("+", Reg("r"), Const(1))
