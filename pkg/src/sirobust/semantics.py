"""Operational semantics under snapshot isolation (SI) and serializability (SER).

Only four kinds of events are observable: ``begin``, ``load``, ``isu`` (a
write into the transaction's local copy) and ``com``. Register assignments,
``assume`` and ``goto`` are silent and are folded into the visible step that
follows them, so every transition returned by :func:`enabled_si` carries one
event.

State representation
--------------------
Shared variables and registers are addressed by index. A local state keeps
the current transaction position, the label (``None`` when idle between
transactions), the snapshot ``store``, the write log as a bit mask, register
values and the start timestamp. All states are immutable tuples so they can be
hashed directly.

Timestamps are never part of the deduplication key. Along a single path a
state can only repeat inside one transaction (transactions are executed at
most once per process), and no timestamp changes between the two visits.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Sequence

from .ir import (
    ERROR_LABEL,
    Assign,
    Assume,
    Commit,
    Const,
    Expr,
    Nondet,
    Not,
    Program,
    Read,
    Reg,
    Var,
    Write,
)

SI = "si"
SER = "ser"


class BoundExceeded(RuntimeError):
    """Raised (or flagged) when an exploration hits its bound."""


class InvalidStep(ValueError):
    def __init__(self, index: int, event: "Event | None" = None):
        super().__init__(f"event {index} is not enabled: {event}")
        self.index = index
        self.event = event


# --------------------------------------------------------------------------
# Events
# --------------------------------------------------------------------------


class Event(NamedTuple):
    kind: str  # begin | load | isu | com
    pid: str
    tid: str
    inst: int = 0
    var: str | None = None
    value: int | None = None

    def __str__(self) -> str:
        var = "-" if self.var is None else self.var
        val = "-" if self.value is None else str(self.value)
        return f"{self.kind} {self.pid} {self.tid}[{self.inst}] {var} {val}"

    @classmethod
    def parse(cls, line: str) -> "Event":
        kind, pid, tinst, var, val = line.split()
        tid, inst = tinst[:-1].split("[")
        return cls(
            kind, pid, tid, int(inst), None if var == "-" else var, None if val == "-" else int(val)
        )

    def to_json(self) -> dict:
        return {"kind": self.kind, "pid": self.pid, "tid": self.tid, "inst": self.inst,
                "var": self.var, "value": self.value}

    @classmethod
    def from_json(cls, d: dict) -> "Event":
        return cls(d["kind"], d["pid"], d["tid"], d["inst"], d["var"], d["value"])


def events_to_text(events: Sequence[Event]) -> str:
    return "".join(f"{e}\n" for e in events)


def events_from_text(text: str) -> list[Event]:
    return [Event.parse(l) for l in text.splitlines() if l.strip()]


def events_to_json(events: Sequence[Event]) -> str:
    return json.dumps([e.to_json() for e in events])


def events_from_json(text: str) -> list[Event]:
    return [Event.from_json(d) for d in json.loads(text)]


# --------------------------------------------------------------------------
# States
# --------------------------------------------------------------------------


class LocalState(NamedTuple):
    pos: int  # index of the current / next transaction
    label: str | None  # None: idle before transaction ``pos``
    store: tuple[int, ...] | None  # snapshot copy, None when idle
    txnwrs: int  # bit mask of variables written since begin
    rval: tuple[int, ...]
    sti: int = 0


class MachineState(NamedTuple):
    ls: tuple[LocalState, ...]
    tstamp: tuple[int, ...]
    log: tuple[int, ...]
    clock: int

    def key(self) -> tuple:
        """Hash key without timestamps."""
        return (self.log, tuple(l[:5] for l in self.ls))


@dataclass
class TxnInstance:
    tid: str
    inst: int
    sti: int
    cti: int | None = None


@dataclass
class Execution:
    events: list[Event]
    final_state: MachineState
    blocked: bool = False
    bound_hit: bool = False


# --------------------------------------------------------------------------
# Compiled program
# --------------------------------------------------------------------------


def eval_values(e: Expr, regs: tuple[int, ...], store: tuple[int, ...] | None, cp: "Compiled",
                pi: int) -> frozenset[int]:
    """All values ``e`` may evaluate to (``*`` ranges over the domain)."""
    d = cp.domain
    if isinstance(e, Const):
        return frozenset((e.value,))
    if isinstance(e, Reg):
        return frozenset((regs[cp.reg_index[pi][e.name]],))
    if isinstance(e, Var):
        src = store if store is not None else ()
        return frozenset((src[cp.var_index[e.name]],))
    if isinstance(e, Nondet):
        return cp.all_values
    if isinstance(e, Not):
        return frozenset(0 if v else 1 for v in eval_values(e.operand, regs, store, cp, pi))
    ls = eval_values(e.left, regs, store, cp, pi)
    rs = eval_values(e.right, regs, store, cp, pi)
    f = _BINOPS[e.op]
    return frozenset(f(a, b, d) for a in ls for b in rs)


_BINOPS: dict[str, Callable[[int, int, int], int]] = {
    "+": lambda a, b, d: (a + b) % d,
    "-": lambda a, b, d: (a - b) % d,
    "==": lambda a, b, d: int(a == b),
    "!=": lambda a, b, d: int(a != b),
    "<": lambda a, b, d: int(a < b),
    "<=": lambda a, b, d: int(a <= b),
    "&&": lambda a, b, d: int(bool(a) and bool(b)),
    "||": lambda a, b, d: int(bool(a) or bool(b)),
}


class Compiled:
    """Index tables and per-label instruction lists for fast stepping."""

    def __init__(self, p: Program):
        self.program = p
        self.domain = p.domain_size
        self.all_values = frozenset(range(p.domain_size))
        self.vars = p.shared_vars
        self.var_index = {v: i for i, v in enumerate(p.shared_vars)}
        self.flag_mask = sum(1 << self.var_index[f] for f in p.flags)
        self.pids = [q.pid for q in p.processes]
        self.reg_index = [{r: i for i, r in enumerate(q.registers)} for q in p.processes]
        self.txns = [q.transactions for q in p.processes]
        self.code: list[list[dict[str, list]]] = []
        for q in p.processes:
            per_txn = []
            for t in q.transactions:
                table: dict[str, list] = {}
                for ins in t.instructions:
                    table.setdefault(ins.label, []).append(ins)
                per_txn.append(table)
            self.code.append(per_txn)
        self._closure_cache: dict = {}

    def txn(self, pi: int, ti: int):
        return self.txns[pi][ti]

    def closure(self, pi: int, ti: int, label: str, rval: tuple, store: tuple | None):
        """Configurations reachable by silent steps, each paired with a visible instruction.

        Returns a tuple of ``(instruction, rval)`` where the instruction is a
        Read, Write or Commit at the configuration's label.
        """
        key = (pi, ti, label, rval, store)
        hit = self._closure_cache.get(key)
        if hit is not None:
            return hit
        table = self.code[pi][ti]
        seen = {(label, rval)}
        stack = [(label, rval)]
        out = []
        while stack:
            lab, rv = stack.pop()
            for ins in table.get(lab, ()):
                op = ins.op
                if isinstance(op, (Read, Write, Commit)):
                    out.append((ins, rv))
                    continue
                if isinstance(op, Assume):
                    if not any(eval_values(op.cond, rv, store, self, pi)):
                        continue
                    succ_r = (rv,)
                elif isinstance(op, Assign):
                    ri = self.reg_index[pi][op.reg]
                    succ_r = tuple(rv[:ri] + (v,) + rv[ri + 1:]
                                   for v in sorted(eval_values(op.expr, rv, store, self, pi)))
                else:  # Begin never appears past the entry
                    continue
                for r2 in succ_r:
                    for g in ins.goto:
                        if (g, r2) not in seen:
                            seen.add((g, r2))
                            stack.append((g, r2))
        out.sort(key=_closure_order(table))
        res = tuple(out)
        self._closure_cache[key] = res
        return res


def _closure_order(table):
    order = {}
    for i, lab in enumerate(table):
        for j, ins in enumerate(table[lab]):
            order[id(ins)] = (i, j)
    return lambda item: (order[id(item[0])], item[1])


_COMPILED: dict[int, tuple[Program, Compiled]] = {}


def compile_program(p: Program) -> Compiled:
    hit = _COMPILED.get(id(p))
    if hit is not None and hit[0] is p:
        return hit[1]
    cp = Compiled(p)
    if len(_COMPILED) > 256:
        _COMPILED.clear()
    _COMPILED[id(p)] = (p, cp)
    return cp


# --------------------------------------------------------------------------
# Transition rules
# --------------------------------------------------------------------------


def initial_state(p: Program) -> MachineState:
    n = len(p.shared_vars)
    ls = tuple(LocalState(0, None, None, 0, (0,) * len(q.registers), 0) for q in p.processes)
    return MachineState(ls, (0,) * n, (0,) * n, 1)


def _set(t: tuple, i: int, v) -> tuple:
    return t[:i] + (v,) + t[i + 1:]


def _process_steps(cp: Compiled, s: MachineState, pi: int, ser: bool) -> list[tuple[Event, MachineState]]:
    loc = s.ls[pi]
    pid = cp.pids[pi]
    txns = cp.txns[pi]
    if loc.pos >= len(txns):
        return []
    txn = txns[loc.pos]
    out: list[tuple[Event, MachineState]] = []
    if loc.label is None:
        entry = txn.instructions[0]
        ev = Event("begin", pid, txn.tid)
        for g in entry.goto:
            nl = LocalState(loc.pos, g, s.log, 0, loc.rval, s.clock)
            out.append((ev, MachineState(_set(s.ls, pi, nl), s.tstamp, s.log, s.clock + 1)))
        return out
    for ins, rv in cp.closure(pi, loc.pos, loc.label, loc.rval, loc.store):
        op = ins.op
        if isinstance(op, Read):
            xi = cp.var_index[op.var]
            v = loc.store[xi]
            ev = Event("load", pid, txn.tid, 0, op.var, v)
            rv2 = _set(rv, cp.reg_index[pi][op.reg], v)
            for g in ins.goto:
                nl = loc._replace(label=g, rval=rv2)
                out.append((ev, s._replace(ls=_set(s.ls, pi, nl))))
        elif isinstance(op, Write):
            xi = cp.var_index[op.var]
            for v in sorted(eval_values(op.expr, rv, loc.store, cp, pi)):
                ev = Event("isu", pid, txn.tid, 0, op.var, v)
                st2 = _set(loc.store, xi, v)
                for g in ins.goto:
                    nl = LocalState(loc.pos, g, st2, loc.txnwrs | (1 << xi), rv, loc.sti)
                    out.append((ev, s._replace(ls=_set(s.ls, pi, nl))))
        else:  # Commit
            wr = loc.txnwrs
            ok = True
            log, ts = s.log, s.tstamp
            if wr:
                log, ts = list(log), list(ts)
                for xi in range(len(log)):
                    if wr >> xi & 1:
                        if ts[xi] >= loc.sti and not ser:
                            ok = False
                            break
                        log[xi] = loc.store[xi]
                        ts[xi] = s.clock
                log, ts = tuple(log), tuple(ts)
            if not ok:
                continue
            nl = LocalState(loc.pos + 1, None, None, 0, rv, 0)
            out.append((Event("com", pid, txn.tid),
                        MachineState(_set(s.ls, pi, nl), ts, log, s.clock + 1)))
    return out


def enabled_si(p: Program, s: MachineState) -> list[tuple[Event, MachineState]]:
    """Successors of ``s`` under the SI rules; a failing commit has no successor."""
    cp = compile_program(p)
    out = []
    for pi in range(len(cp.pids)):
        out.extend(_process_steps(cp, s, pi, ser=False))
    return out


def active_process(s: MachineState) -> int | None:
    for i, l in enumerate(s.ls):
        if l.label is not None:
            return i
    return None


def enabled_ser(p: Program, s: MachineState) -> list[tuple[Event, MachineState]]:
    """Successors under SER: an open transaction runs alone until it commits."""
    cp = compile_program(p)
    act = active_process(s)
    if act is not None:
        return _process_steps(cp, s, act, ser=True)
    out = []
    for pi in range(len(cp.pids)):
        out.extend(_process_steps(cp, s, pi, ser=True))
    return out


def enabled(p: Program, s: MachineState, mode: str) -> list[tuple[Event, MachineState]]:
    return enabled_si(p, s) if mode == SI else enabled_ser(p, s)


def is_final(s: MachineState, p: Program) -> bool:
    return all(l.label is None and l.pos >= len(q.transactions) for l, q in zip(s.ls, p.processes))


def at_error(p: Program, s: MachineState) -> bool:
    """True if some process can reach the reserved ``error`` label silently."""
    cp = compile_program(p)
    for pi, loc in enumerate(s.ls):
        if loc.label is None or loc.pos >= len(cp.txns[pi]):
            continue
        if loc.label == ERROR_LABEL:
            return True
        for ins, _ in cp.closure(pi, loc.pos, loc.label, loc.rval, loc.store):
            if ins.label == ERROR_LABEL:
                return True
    return False


# --------------------------------------------------------------------------
# Enumeration and replay
# --------------------------------------------------------------------------


def enumerate_executions(p: Program, mode: str = SI, bound: int | None = None,
                         dedup: bool = False) -> Iterator[Execution]:
    """Depth-first enumeration of maximal executions in a fixed order.

    Order: process index, then label order, then goto order. A branch that
    revisits a state already on the current path (a silent-free loop) is cut.
    With ``dedup=True`` states are also merged globally, which shrinks the
    output to one representative per distinct continuation.
    """
    step = enabled_si if mode == SI else enabled_ser
    s0 = initial_state(p)
    events: list[Event] = []
    on_path = {s0.key()}
    seen_global: set = set()
    # iterative DFS: each frame is (state, successor iterator)
    stack = [(s0, iter(step(p, s0)), False)]
    while stack:
        s, it, advanced = stack[-1]
        if bound is not None and len(events) >= bound:
            yield Execution(list(events), s, blocked=True, bound_hit=True)
            _pop(stack, events, on_path)
            continue
        nxt = next(it, None)
        if nxt is None:
            if not advanced:
                yield Execution(list(events), s, blocked=not is_final(s, p))
            _pop(stack, events, on_path)
            continue
        stack[-1] = (s, it, True)
        ev, s2 = nxt
        k = s2.key()
        if k in on_path:
            continue
        if dedup:
            if k in seen_global:
                continue
            seen_global.add(k)
        events.append(ev)
        on_path.add(k)
        stack.append((s2, iter(step(p, s2)), False))


def _pop(stack, events, on_path):
    s, _, _ = stack.pop()
    if stack:
        on_path.discard(s.key())
        events.pop()


def replay(p: Program, events: Sequence[Event], mode: str = SI) -> MachineState:
    """Run ``events`` from the initial state; raise :class:`InvalidStep` if impossible.

    Several internal states can produce the same event (nondeterministic
    gotos), so replay tracks the set of candidate states.
    """
    step = enabled_si if mode == SI else enabled_ser
    current = [initial_state(p)]
    for i, ev in enumerate(events):
        nxt: dict = {}
        for s in current:
            for e2, s2 in step(p, s):
                if e2 == ev:
                    nxt.setdefault(s2, None)
        if not nxt:
            raise InvalidStep(i, ev)
        current = list(nxt)
    finals = [s for s in current if is_final(s, p)]
    return (finals or current)[0]


def registers(p: Program, s: MachineState) -> dict[str, int]:
    """Register valuation keyed ``pid.reg``."""
    out = {}
    for q, loc in zip(p.processes, s.ls):
        for r, v in zip(q.registers, loc.rval):
            out[f"{q.pid}.{r}"] = v
    return out


def valuation(p: Program, s: MachineState) -> dict[str, int]:
    return dict(zip(p.shared_vars, s.log))


# --------------------------------------------------------------------------
# Atomic transaction blocks
# --------------------------------------------------------------------------


class BlockOutcome(NamedTuple):
    label: str  # label of the commit instruction reached
    store: tuple[int, ...]
    wr: int  # written variables mask
    rval: tuple[int, ...]
    ext: int  # externally read variables mask
    events: tuple[Event, ...]  # begin + loads/isus, commit excluded

    @property
    def is_error(self) -> bool:
        return self.label == ERROR_LABEL


def run_block(cp: Compiled, pi: int, ti: int, snapshot: tuple, rval: tuple,
              track_ext: bool = True, limit: int | None = None) -> list[BlockOutcome]:
    """All ways transaction ``ti`` of process ``pi`` can run from begin to a commit.

    Outcomes are deduplicated on (label, store, write set, registers and, if
    ``track_ext``, the external read set); the event list kept is the first
    one found. ``limit`` bounds the number of explored configurations.
    """
    pid = cp.pids[pi]
    txn = cp.txns[pi][ti]
    begin_ev = Event("begin", pid, txn.tid)
    seen = set()
    outcomes: dict = {}
    stack = []
    for g in txn.instructions[0].goto:
        stack.append((g, snapshot, 0, rval, 0, (begin_ev,)))
    stack.reverse()
    explored = 0
    while stack:
        lab, st, wr, rv, ext, evs = stack.pop()
        k = (lab, st, wr, rv, ext if track_ext else 0)
        if k in seen:
            continue
        seen.add(k)
        explored += 1
        if limit is not None and explored > limit:
            raise BoundExceeded(f"block {txn.tid} exceeded {limit} configurations")
        succ = []
        for ins, rv1 in cp.closure(pi, ti, lab, rv, st):
            op = ins.op
            if isinstance(op, Commit):
                ok = (ins.label, st, wr, rv1, ext if track_ext else 0)
                if ok not in outcomes:
                    outcomes[ok] = BlockOutcome(ins.label, st, wr, rv1, ext, evs)
                continue
            xi = cp.var_index[op.var]
            if isinstance(op, Read):
                v = st[xi]
                rv2 = _set(rv1, cp.reg_index[pi][op.reg], v)
                ext2 = ext if (wr >> xi & 1) else ext | (1 << xi)
                ev = Event("load", pid, txn.tid, 0, op.var, v)
                for g in ins.goto:
                    succ.append((g, st, wr, rv2, ext2, evs + (ev,)))
            else:
                for v in sorted(eval_values(op.expr, rv1, st, cp, pi)):
                    ev = Event("isu", pid, txn.tid, 0, op.var, v)
                    st2 = _set(st, xi, v)
                    for g in ins.goto:
                        succ.append((g, st2, wr | (1 << xi), rv1, ext, evs + (ev,)))
        stack.extend(reversed(succ))
    return list(outcomes.values())


def commit_block(log: tuple, out: BlockOutcome) -> tuple:
    if not out.wr:
        return log
    return tuple(out.store[i] if out.wr >> i & 1 else v for i, v in enumerate(log))


def ser_successors(cp: Compiled, log: tuple, procs: tuple, only: Sequence[int] | None = None):
    """Atomic SER steps from a quiescent state ``(log, procs)``.

    ``procs`` holds ``(pos, rval)`` per process. Yields
    ``(pi, outcome, new_log, new_procs)``; error outcomes yield ``new_log=None``.
    """
    for pi in (range(len(procs)) if only is None else only):
        pos, rv = procs[pi]
        if pos >= len(cp.txns[pi]):
            continue
        for out in run_block(cp, pi, pos, log, rv, track_ext=False):
            if out.is_error:
                yield pi, out, None, None
                continue
            yield pi, out, commit_block(log, out), _set(procs, pi, (pos + 1, out.rval))


def com_event(cp: Compiled, pi: int, ti: int) -> Event:
    return Event("com", cp.pids[pi], cp.txns[pi][ti].tid)


def quiescent_machine_state(cp: Compiled, log: tuple, procs: tuple) -> MachineState:
    ls = tuple(LocalState(pos, None, None, 0, rv, 0) for pos, rv in procs)
    return MachineState(ls, (0,) * len(log), log, 1)


def masks_to_vars(cp: Compiled, mask: int) -> frozenset[str]:
    return frozenset(v for i, v in enumerate(cp.vars) if mask >> i & 1)


def product_values(domain: int, n: int):
    return itertools.product(range(domain), repeat=n)
