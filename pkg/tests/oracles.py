"""Independent reference implementations used as test oracles.

These share only the program AST and the event/trace record types with the
library. They are written for clarity, not speed, and take single small
steps (silent steps included) instead of the library's folded steps.
"""

from __future__ import annotations

import itertools

from sirobust.ir import Assign, Assume, BinOp, Commit, Const, Nondet, Not, Program, Read, Reg, Var, Write
from sirobust.semantics import Event
from sirobust.traces import trace_of

SI, SER = "si", "ser"


def _eval(e, regs: dict, d: int) -> set[int]:
    if isinstance(e, Const):
        return {e.value}
    if isinstance(e, Reg):
        return {regs[e.name]}
    if isinstance(e, Nondet):
        return set(range(d))
    if isinstance(e, Var):
        raise AssertionError("shared variables never appear in expressions")
    if isinstance(e, Not):
        return {int(not v) for v in _eval(e.operand, regs, d)}
    assert isinstance(e, BinOp)
    out = set()
    for a in _eval(e.left, regs, d):
        for b in _eval(e.right, regs, d):
            out.add({
                "+": lambda: (a + b) % d,
                "-": lambda: (a - b) % d,
                "==": lambda: int(a == b),
                "!=": lambda: int(a != b),
                "<": lambda: int(a < b),
                "<=": lambda: int(a <= b),
                "&&": lambda: int(bool(a) and bool(b)),
                "||": lambda: int(bool(a) or bool(b)),
            }[e.op]())
    return out


def _freeze(d: dict) -> tuple:
    return tuple(sorted(d.items()))


class _Machine:
    """Single-step SI/SER interpreter over dict-based states."""

    def __init__(self, p: Program, mode: str, atomic_blocks: bool = False):
        self.p, self.mode, self.d = p, mode, p.domain_size
        self.atomic_blocks = atomic_blocks

    def initial(self):
        procs = tuple((0, None, None, frozenset(), _freeze({r: 0 for r in q.registers}), 0)
                      for q in self.p.processes)
        store = _freeze({x: 0 for x in self.p.shared_vars})
        stamps = _freeze({x: 0 for x in self.p.shared_vars})
        return (procs, store, stamps, 1)

    def steps(self, s):
        """Yield (event or None, next state)."""
        procs, store, stamps, clock = s
        if self.mode == SER:
            busy = [i for i, pr in enumerate(procs) if pr[1] is not None]
            movers = busy or range(len(procs))
        elif self.atomic_blocks:
            # a transaction may only be preempted where it is ready to commit
            busy = [i for i, pr in enumerate(procs) if pr[1] is not None and not self._at_commit(i, pr)]
            movers = busy[:1] or range(len(procs))
        else:
            movers = range(len(procs))
        for i in movers:
            yield from self._proc_steps(s, i)

    def _proc_steps(self, s, i):
        procs, store, stamps, clock = s
        ti, label, snap, writes, regs, start = procs[i]
        q = self.p.processes[i]
        if ti >= len(q.transactions):
            return
        t = q.transactions[ti]

        def with_proc(pr, store2=store, stamps2=stamps, clock2=clock):
            return (procs[:i] + (pr,) + procs[i + 1:], store2, stamps2, clock2)

        if label is None:
            for g in t.instructions[0].goto:
                yield (Event("begin", q.pid, t.tid),
                       with_proc((ti, g, store, frozenset(), regs, clock), clock2=clock + 1))
            return
        r = dict(regs)
        sn = dict(snap)
        for ins in t.instructions:
            if ins.label != label:
                continue
            op = ins.op
            if isinstance(op, Read):
                v = sn[op.var]
                r2 = _freeze({**r, op.reg: v})
                for g in ins.goto:
                    yield (Event("load", q.pid, t.tid, 0, op.var, v),
                           with_proc((ti, g, snap, writes, r2, start)))
            elif isinstance(op, Write):
                for v in sorted(_eval(op.expr, r, self.d)):
                    sn2 = _freeze({**sn, op.var: v})
                    for g in ins.goto:
                        yield (Event("isu", q.pid, t.tid, 0, op.var, v),
                               with_proc((ti, g, sn2, writes | {op.var}, regs, start)))
            elif isinstance(op, Assume):
                if any(_eval(op.cond, r, self.d)):
                    for g in ins.goto:
                        yield (None, with_proc((ti, g, snap, writes, regs, start)))
            elif isinstance(op, Assign):
                for v in sorted(_eval(op.expr, r, self.d)):
                    for g in ins.goto:
                        yield (None, with_proc((ti, g, snap, writes, _freeze({**r, op.reg: v}), start)))
            elif isinstance(op, Commit):
                st = dict(stamps)
                if self.mode == SI and any(st[x] >= start for x in writes):
                    continue  # a concurrent transaction committed a write to the same variable
                gs = dict(store)
                for x in writes:
                    gs[x] = sn[x]
                    st[x] = clock
                yield (Event("com", q.pid, t.tid),
                       with_proc((ti + 1, None, None, frozenset(), regs, 0),
                                 _freeze(gs), _freeze(st), clock + 1))

    def _at_commit(self, i, pr) -> bool:
        t = self.p.processes[i].transactions[pr[0]]
        return all(isinstance(ins.op, Commit) for ins in t.instructions if ins.label == pr[1])

    def is_final(self, s) -> bool:
        return all(pr[1] is None and pr[0] >= len(q.transactions)
                   for pr, q in zip(s[0], self.p.processes))

    def key(self, s):
        # timestamps only matter through comparisons with begin times; keep them
        return s


def brute_force_executions(p: Program, mode: str, atomic_blocks: bool = False
                           ) -> set[tuple[tuple[Event, ...], bool]]:
    """Every maximal execution as (events, complete), by single-step DFS.

    A silent-step loop revisiting a state on the current path is cut. With
    ``atomic_blocks`` an SI transaction runs uninterrupted from begin to its
    commit point; this keeps every trace (a trace only depends on where
    begins and commits fall) while producing far fewer executions.
    """
    m = _Machine(p, mode, atomic_blocks)
    out: set = set()

    def dfs(s, events, on_path):
        moved = False
        for ev, s2 in m.steps(s):
            moved = True
            if s2 in on_path:
                continue
            on_path.add(s2)
            dfs(s2, events + ([ev] if ev is not None else []), on_path)
            on_path.discard(s2)
        if not moved:
            out.add((tuple(events), m.is_final(s)))

    s0 = m.initial()
    dfs(s0, [], {s0})
    return out


def si_traces(p: Program, atomic_blocks: bool = True) -> dict:
    """Distinct traces of complete SI executions, each with one representative event list."""
    out: dict = {}
    for events, complete in brute_force_executions(p, SI, atomic_blocks):
        if complete:
            tr = trace_of(list(events))
            out.setdefault((tr.po, tr.rf, tr.ww, tr.rw), list(events))
    return out


def final_valuations(p: Program, mode: str) -> set[tuple]:
    """Shared-variable valuations of complete executions, as tuples in declaration order."""
    m = _Machine(p, mode)
    seen, stack, finals = set(), [m.initial()], set()
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        if m.is_final(s):
            store = dict(s[1])
            finals.add(tuple(store[x] for x in p.shared_vars))
        for _, s2 in m.steps(s):
            stack.append(s2)
    return finals


def serializable_by_reordering(events) -> bool:
    """A trace is serializable iff some serial order of its transactions has the same trace.

    The serial candidate runs each committed transaction's events contiguously
    in the chosen order (respecting program order) and keeps the recorded
    values; trace construction derives dependencies from commit order only.
    """
    tr = trace_of(events)
    by_tid: dict[str, list[Event]] = {}
    for e in events:
        by_tid.setdefault(e.tid, []).append(e)
    tids = list(by_tid)
    pid_of = {t: by_tid[t][0].pid for t in tids}
    for perm in itertools.permutations(tids):
        # program order must be preserved
        pos = {t: i for i, t in enumerate(perm)}
        if any(pid_of[a] == pid_of[b] and tids.index(a) < tids.index(b) and pos[a] > pos[b]
               for a in tids for b in tids):
            continue
        serial = [e for t in perm for e in by_tid[t]]
        t2 = trace_of(serial)
        if (t2.po, t2.rf, t2.ww, t2.rw) == (tr.po, tr.rf, tr.ww, tr.rw):
            return True
    return False
