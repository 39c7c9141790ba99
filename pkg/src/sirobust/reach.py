"""Explicit-state reachability under serializability (and, for assertions, SI).

Under SER a transaction runs without interference, so the engine steps whole
transactions at a time and only stores states between transactions: the
central store, each process's next transaction and its registers.
Timestamps are left out; SER never compares them across transactions.
The ``error`` label is detected inside a transaction, before its commit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Union

from .ir import Const, Nondet, Not, Program, Reg, expr_nodes, parse_expr
from .semantics import (
    SER,
    SI,
    _BINOPS,
    BoundExceeded,
    Event,
    LocalState,
    MachineState,
    com_event,
    commit_block,
    compile_program,
    enabled_ser,
    initial_state,
    is_final,
    run_block,
    ser_successors,
)

Predicate = Callable[[MachineState], bool]


@dataclass(frozen=True)
class ReachQuery:
    program: Program
    target: Union[str, Predicate] = "error"  # "error" or a state predicate
    bound: int | None = None  # maximal number of stored states
    mode: str = SER
    search: str = "dfs"  # dfs | bfs


@dataclass
class ReachResult:
    reachable: bool
    path: list[Event] | None
    states_explored: int
    bound_hit: bool = False


def reachable_error(q: ReachQuery) -> ReachResult:
    if q.mode == SI:
        return _reach_si(q.program, q.target, q.bound)
    return _reach_ser(q.program, q.target, q.bound, q.search)


def reachable_valuation(p: Program, pred: Predicate, bound: int | None = None,
                        mode: str = SER) -> ReachResult:
    return reachable_error(ReachQuery(p, pred, bound, mode))


def _quiescent(log, procs) -> MachineState:
    ls = tuple(LocalState(pos, None, None, 0, rv, 0) for pos, rv in procs)
    return MachineState(ls, (0,) * len(log), log, 1)


def _reach_ser(p: Program, target, bound, search) -> ReachResult:
    cp = compile_program(p)
    s0 = initial_state(p)
    start = (s0.log, tuple((0, l.rval) for l in s0.ls))
    want_error = target == "error"
    if not want_error and target(_quiescent(*start)):
        return ReachResult(True, [], 1)
    seen = {start}
    frontier: deque = deque([(start, [])])
    pop = frontier.pop if search == "dfs" else frontier.popleft
    while frontier:
        (log, procs), path = pop()
        succs = []
        for pi, out, nlog, nprocs in ser_successors(cp, log, procs):
            if out.is_error:
                if want_error:
                    return ReachResult(True, path + list(out.events), len(seen))
                continue
            nxt = (nlog, nprocs)
            if nxt in seen:
                continue
            npath = path + list(out.events) + [com_event(cp, pi, procs[pi][0])]
            if not want_error and target(_quiescent(*nxt)):
                return ReachResult(True, npath, len(seen) + 1)
            seen.add(nxt)
            if bound is not None and len(seen) > bound:
                return ReachResult(False, None, len(seen), bound_hit=True)
            succs.append((nxt, npath))
        frontier.extend(reversed(succs) if search == "dfs" else succs)
    return ReachResult(False, None, len(seen))


def _reach_si(p: Program, target, bound) -> ReachResult:
    """Coarse SI search: begin blocks run atomically, commits are separate steps."""
    if target == "error":
        raise ValueError("SI mode supports state predicates only")
    cp = compile_program(p)
    s0 = initial_state(p)
    start = (s0.log, tuple((0, l.rval, None) for l in s0.ls))

    def as_state(log, procs) -> MachineState:
        ls = []
        for pos, rv, fl in procs:
            if fl is None:
                ls.append(LocalState(pos, None, None, 0, rv, 0))
            else:
                out, _ = fl
                ls.append(LocalState(pos, out.label, out.store, out.wr, out.rval, 0))
        return MachineState(tuple(ls), (0,) * len(log), log, 1)

    if target(as_state(*start)):
        return ReachResult(True, [], 1)
    seen = {start}
    stack = [(start, [])]
    while stack:
        (log, procs), path = stack.pop()
        succs = []
        for pi, (pos, rv, fl) in enumerate(procs):
            if pos >= len(cp.txns[pi]):
                continue
            if fl is None:
                for out in run_block(cp, pi, pos, log, rv, track_ext=False):
                    nprocs = procs[:pi] + ((pos, out.rval, (out, 0)),) + procs[pi + 1:]
                    succs.append(((log, nprocs), path + list(out.events)))
            else:
                out, dirty = fl
                if out.wr & dirty:
                    continue
                nprocs = tuple(
                    (pos + 1, out.rval, None) if j == pi
                    else (pj, rj, None if fj is None else (fj[0], fj[1] | out.wr))
                    for j, (pj, rj, fj) in enumerate(procs))
                succs.append(((commit_block(log, out), nprocs), path + [com_event(cp, pi, pos)]))
        fresh = []
        for nxt, npath in succs:
            key = (nxt[0], tuple((pos, rv, None if fl is None else
                                  (fl[0].store, fl[0].wr, fl[1])) for pos, rv, fl in nxt[1]))
            if key in seen:
                continue
            if target(as_state(*nxt)):
                return ReachResult(True, npath, len(seen) + 1)
            seen.add(key)
            if bound is not None and len(seen) > bound:
                return ReachResult(False, None, len(seen), bound_hit=True)
            fresh.append((nxt, npath))
        stack.extend(reversed(fresh))
    return ReachResult(False, None, len(seen))


def count_quiescent_states_naive(p: Program, limit: int = 200_000) -> int:
    """Fixpoint over single SER steps; counts states with no open transaction."""
    s0 = initial_state(p)
    seen = {s0.key(): s0}
    work = [s0]
    while work:
        s = work.pop()
        for _, s2 in enabled_ser(p, s):
            k = s2.key()
            if k not in seen:
                seen[k] = s2
                work.append(s2)
                if len(seen) > limit:
                    raise BoundExceeded("naive fixpoint too large")
    return sum(1 for s in seen.values() if all(l.label is None for l in s.ls))


# --------------------------------------------------------------------------
# Assertions over variables and registers
# --------------------------------------------------------------------------


def assertion(p: Program, text: str) -> Predicate:
    """Predicate from an expression over shared variables and registers.

    Registers may be written ``pid.reg``; a bare register name is accepted
    when exactly one process declares it. ``=`` means ``==``. The predicate
    only holds in states where every process has finished.
    """
    return _assertion(p, text, final_only=True)


def state_assertion(p: Program, text: str) -> Predicate:
    """Like :func:`assertion` but evaluated in every stored state."""
    return _assertion(p, text, final_only=False)


def _assertion(p: Program, text: str, final_only: bool) -> Predicate:
    names: dict[str, tuple] = {}
    for i, x in enumerate(p.shared_vars):
        names[x] = ("var", i)
    owners: dict[str, list] = {}
    for pi, q in enumerate(p.processes):
        for ri, r in enumerate(q.registers):
            names[f"{q.pid}.{r}"] = ("reg", pi, ri)
            owners.setdefault(r, []).append((pi, ri))
    for r, occ in owners.items():
        if len(occ) == 1 and r not in names:
            names[r] = ("reg",) + occ[0]
    expr = parse_expr(text, regs=names)
    for n in _regs_in(expr):
        if n not in names:
            raise ValueError(f"unknown name {n!r} in assertion")
    cp = compile_program(p)

    def pred(s: MachineState) -> bool:
        if final_only and not is_final(s, p):
            return False
        env = {}
        for n, ref in names.items():
            env[n] = s.log[ref[1]] if ref[0] == "var" else s.ls[ref[1]].rval[ref[2]]
        return any(v != 0 for v in _eval(expr, env, cp.domain))

    return pred


def _regs_in(e):
    return [n.name for n in expr_nodes(e) if isinstance(n, Reg)]


def _eval(e, env, d):
    if isinstance(e, Const):
        return {e.value}
    if isinstance(e, Reg):
        return {env[e.name]}
    if isinstance(e, Nondet):
        return set(range(d))
    if isinstance(e, Not):
        return {0 if v else 1 for v in _eval(e.operand, env, d)}
    f = _BINOPS[e.op]
    return {f(a, b, d) for a in _eval(e.left, env, d) for b in _eval(e.right, env, d)}
