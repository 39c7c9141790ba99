"""Reduce SI robustness to reachability of an error label under serializability.

The instrumented program simulates an SI anomaly with serial transactions.
One process, the *attacker*, delays one of its transactions: it runs the
transaction against primed copies ``x'`` of the shared variables, so its
writes stay invisible, and never publishes them. Every later transaction must
*join* the happens-before chain that starts at the delayed transaction
(a *helper*). If a helper reads the variable the attacker marked with its
special write, that helper's read is a conflict into the delayed commit,
closing a cycle, and the program jumps to the ``error`` label.

Each original transaction is emitted in four copies, selected at ``begin``:

``pre``    before the delay, plain execution (guard ``hb == 0``);
``delay``  the attacker's delayed transaction;
``join``   a helper's first transaction after the delay; it snapshots the
           event flags and must join before committing;
``after``  later transactions of a helper that already joined.

Flags are 0/1 shared variables, so the instrumented program stays in the
original value domain. Per variable ``x``: ``x.ev`` (read by the delayed
transaction or accessed by a helper), ``x.evst`` (written by a helper),
``x.evw`` (written by the delayed transaction), the begin-time snapshots
``x.evI``/``x.evIst``, and ``a_st.x`` (x is the special write). Per process
registers: ``p.a`` (attacker), ``p.hbh`` (joined), ``p.hit`` (read the special
variable) and ``p.tmp`` (copy buffer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    ERROR_LABEL,
    Assign,
    Assume,
    Begin,
    BinOp,
    Commit,
    Const,
    Expr,
    Instruction,
    Not,
    Process,
    Program,
    Read,
    Reg,
    Transaction,
    Var,
    Write,
    validate_program,
)
from .semantics import SI, Event, replay
from .traces import Verdict, Witness, hb_t_cycle, trace_of

HB, A_TR = "hb", "a_tr"
R_ATT, R_JOINED, R_HIT, R_TMP = "p.a", "p.hbh", "p.hit", "p.tmp"
MODES = ("pre", "delay", "join", "after")


def primed(x: str) -> str:
    return f"{x}'"


def flag_names(x: str) -> dict[str, str]:
    return {
        "ev": f"{x}.ev", "evst": f"{x}.evst", "evw": f"{x}.evw",
        "evI": f"{x}.evI", "evIst": f"{x}.evIst", "ast": f"a_st.{x}",
    }


@dataclass(frozen=True)
class InstrumentedProgram:
    base: Program  # the instrumented program itself
    original: Program
    error_location: str = ERROR_LABEL

    @property
    def program(self) -> Program:
        return self.base


@dataclass
class RoleTranscript:
    attacker: str | None
    delayed_txn: str | None
    helpers: list[str] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)


def _eq(name: str, v: int, var: bool = True) -> Expr:
    return BinOp("==", Var(name) if var else Reg(name), Const(v))


def _and(*es: Expr) -> Expr:
    out = es[0]
    for e in es[1:]:
        out = BinOp("&&", out, e)
    return out


class _Emitter:
    def __init__(self):
        self.out: list[Instruction] = []

    def add(self, label: str, op, *goto: str) -> None:
        self.out.append(Instruction(label, op, tuple(goto)))


def instrument_program(p: Program) -> InstrumentedProgram:
    vars_ = list(p.shared_vars)
    aux_vars = [primed(x) for x in vars_]
    flags = [HB, A_TR]
    for x in vars_:
        flags += list(flag_names(x).values())
    regs_new = [R_ATT, R_JOINED, R_HIT, R_TMP]
    taken = set(vars_) | {r for q in p.processes for r in q.registers}
    clash = taken & (set(aux_vars) | set(flags) | set(regs_new))
    if clash:
        raise ValueError(f"names reserved by the instrumentation: {sorted(clash)}")

    procs = []
    for q in p.processes:
        txns = tuple(_instrument_txn(t, vars_) for t in q.transactions)
        procs.append(Process(q.pid, q.registers + tuple(regs_new), txns))
    all_vars = tuple(vars_ + aux_vars + flags)
    prog = Program(tuple(procs), all_vars, p.domain_size, frozenset(flags))
    diags = validate_program(prog)
    if diags:  # pragma: no cover - construction bug
        raise AssertionError(diags)
    return InstrumentedProgram(prog, p)


def _instrument_txn(t: Transaction, vars_: list[str]) -> Transaction:
    em = _Emitter()
    entry = t.entry
    first = t.at(entry)[0].goto  # successors of the original begin
    ml = lambda mode, lab: f"{mode}.{lab}"
    em.add("begin", Begin(), "g.pre", "g.delay", "g.join", "g.after")

    # mode selection
    em.add("g.pre", Assume(_eq(HB, 0)), *[ml("pre", g) for g in first])
    em.add("g.delay", Assume(_and(_eq(HB, 0), _eq(A_TR, 0))), "d.setup")
    em.add("g.join", Assume(_and(_eq(HB, 1), _eq(R_JOINED, 0, False), _eq(R_ATT, 0, False))),
           "j.snap.0" if vars_ else "j.snap.end")
    em.add("g.after", Assume(_and(_eq(HB, 1), _eq(R_JOINED, 1, False))),
           *[ml("after", g) for g in first])

    # delay setup: become attacker and copy every variable into its primed twin
    em.add("d.setup", Assign(R_ATT, Const(1)), "d.copy.0" if vars_ else "d.copy.end")
    for i, x in enumerate(vars_):
        nxt = f"d.copy.{i + 1}" if i + 1 < len(vars_) else "d.copy.end"
        em.add(f"d.copy.{i}", Read(R_TMP, x), f"d.copy.{i}.w")
        em.add(f"d.copy.{i}.w", Write(primed(x), Reg(R_TMP)), nxt)
    em.add("d.copy.end", Assign(R_TMP, Const(0)), "d.mark")
    em.add("d.mark", Write(A_TR, Const(1)), *[ml("delay", g) for g in first])

    # helper first join: snapshot the event flags
    for i, x in enumerate(vars_):
        f = flag_names(x)
        nxt = f"j.snap.{i + 1}" if i + 1 < len(vars_) else "j.snap.end"
        em.add(f"j.snap.{i}", Write(f["evI"], Var(f["ev"])), f"j.snap.{i}.st")
        em.add(f"j.snap.{i}.st", Write(f["evIst"], Var(f["evst"])), nxt)
    em.add("j.snap.end", Assume(Const(1)), *[ml("join", g) for g in first])

    for ins in t.instructions:
        if ins.label == entry:
            continue
        _emit_pre(em, ins, ml)
        _emit_delay(em, ins, ml, vars_)
        _emit_helper(em, ins, ml, "join")
        _emit_helper(em, ins, ml, "after")
    em.add(ERROR_LABEL, Commit())
    return Transaction(t.tid, tuple(em.out))


def _emit_pre(em: _Emitter, ins: Instruction, ml) -> None:
    em.add(ml("pre", ins.label), ins.op, *[ml("pre", g) for g in ins.goto])


def _emit_delay(em: _Emitter, ins: Instruction, ml, vars_) -> None:
    L = ml("delay", ins.label)
    G = [ml("delay", g) for g in ins.goto]
    op = ins.op
    if isinstance(op, Read):
        f = flag_names(op.var)
        em.add(L, Read(op.reg, primed(op.var)), f"{L}.1")
        em.add(f"{L}.1", Assume(_eq(f["evw"], 1)), *G)  # own write: internal read
        em.add(f"{L}.1", Assume(_eq(f["evw"], 0)), f"{L}.2")
        em.add(f"{L}.2", Write(f["ev"], Const(1)), f"{L}.3")
        em.add(f"{L}.3", Write(HB, Const(1)), *G)
    elif isinstance(op, Write):
        f = flag_names(op.var)
        em.add(L, Write(primed(op.var), op.expr), f"{L}.w")
        # special write: remember this variable, only once per run
        none_special = _and(*[_eq(flag_names(x)["ast"], 0) for x in vars_])
        em.add(L, Assume(none_special), f"{L}.s")
        em.add(f"{L}.s", Write(primed(op.var), op.expr), f"{L}.s1")
        em.add(f"{L}.s1", Write(f["ast"], Const(1)), f"{L}.w")
        em.add(f"{L}.w", Write(f["evw"], Const(1)), *G)
    elif isinstance(op, Commit):
        em.add(L, Assume(_eq(HB, 1)), f"{L}.c")
        em.add(f"{L}.c", Commit())
    else:
        em.add(L, op, *G)


def _emit_helper(em: _Emitter, ins: Instruction, ml, mode: str) -> None:
    L = ml(mode, ins.label)
    G = [ml(mode, g) for g in ins.goto]
    op = ins.op
    can_join = _eq(R_JOINED, 0, False)
    if isinstance(op, Read):
        f = flag_names(op.var)
        em.add(L, op, f"{L}.1")
        em.add(f"{L}.1", Assume(_eq(f["ast"], 1)), f"{L}.2")
        em.add(f"{L}.1", Assume(_eq(f["ast"], 0)), f"{L}.3")
        em.add(f"{L}.2", Assign(R_HIT, Const(1)), f"{L}.3")
        join = _and(_eq(f["evIst"], 1), can_join)
        em.add(f"{L}.3", Assume(join), f"{L}.4")
        em.add(f"{L}.3", Assume(Not(join)), f"{L}.5")
        em.add(f"{L}.4", Assign(R_JOINED, Const(1)), f"{L}.5")
        em.add(f"{L}.5", Write(f["ev"], Const(1)), *G)
    elif isinstance(op, Write):
        f = flag_names(op.var)
        em.add(L, Assume(_eq(f["evw"], 0)), f"{L}.1")  # blocks on the delayed write set
        em.add(f"{L}.1", op, f"{L}.2")
        em.add(f"{L}.2", Write(f["ev"], Const(1)), f"{L}.3")
        em.add(f"{L}.3", Write(f["evst"], Const(1)), f"{L}.4")
        join = _and(_eq(f["evI"], 1), can_join)
        em.add(f"{L}.4", Assume(join), f"{L}.5")
        em.add(f"{L}.4", Assume(Not(join)), *G)
        em.add(f"{L}.5", Assign(R_JOINED, Const(1)), *G)
    elif isinstance(op, Commit):
        em.add(L, Assume(_eq(R_JOINED, 1, False)), f"{L}.c")  # the pledge
        em.add(f"{L}.c", Assume(_eq(R_HIT, 1, False)), ERROR_LABEL)
        em.add(f"{L}.c", Assume(_eq(R_HIT, 0, False)), f"{L}.k")
        em.add(f"{L}.k", Commit())
    else:
        em.add(L, op, *G)


# --------------------------------------------------------------------------
# Witness reconstruction
# --------------------------------------------------------------------------


def map_witness(ip: InstrumentedProgram, path: list[Event]) -> tuple[list[Event], RoleTranscript]:
    """Turn an error path of the instrumented program into an SI execution.

    Flag events and the delayed transaction's copy phase are dropped, primed
    accesses become accesses to the original variables, the erroring helper
    commits, and the delayed transaction's commit is moved to the very end.
    """
    orig_vars = set(ip.original.shared_vars)
    unprime = {primed(x): x for x in orig_vars}
    delayed: tuple[str, str] | None = None
    out: list[Event] = []
    helpers: list[str] = []
    for e in path:
        if e.kind == "begin":
            out.append(e)
            continue
        if e.kind == "com":
            if delayed is not None and e.tid == delayed[1]:
                continue
            if delayed is not None and e.pid not in helpers:
                helpers.append(e.pid)
            out.append(e)
            continue
        if e.kind == "isu" and e.var == A_TR:
            delayed = (e.pid, e.tid)
            # drop the copy phase already emitted for this transaction
            while out and out[-1].tid == e.tid and out[-1].kind != "begin":
                out.pop()
            continue
        if e.var in unprime:
            out.append(e._replace(var=unprime[e.var]))
        elif e.var in orig_vars:
            out.append(e)
    if delayed is None:
        raise ValueError("path has no delayed transaction")
    last = path[-1]
    if last.kind != "com" and last.tid != delayed[1]:
        out.append(Event("com", last.pid, last.tid))
        if last.pid not in helpers:
            helpers.append(last.pid)
    out.append(Event("com", delayed[0], delayed[1]))
    return out, RoleTranscript(delayed[0], delayed[1], helpers, out)


def check_robustness_via_reduction(p: Program, bound: int | None = None) -> Verdict:
    """Non-robust iff the instrumented program reaches ``error`` under SER."""
    from .reach import ReachQuery, reachable_error

    ip = instrument_program(p)
    res = reachable_error(ReachQuery(ip.base, "error", bound))
    if not res.reachable:
        return Verdict(True, None, res.bound_hit, res.states_explored, "reduction")
    events, _ = map_witness(ip, res.path)
    replay(p, events, SI)
    tr = trace_of(events)
    cycle = hb_t_cycle(tr)
    if cycle is None:
        raise AssertionError("reconstructed anomaly is serializable")
    return Verdict(False, Witness(events, tr, cycle), res.bound_hit, res.states_explored,
                   "reduction")
