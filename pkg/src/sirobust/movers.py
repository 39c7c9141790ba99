"""Commutativity dependency graphs and the non-mover-cycle robustness proof.

A transaction ``t`` has two weakened variants. The *read-free* variant
replaces every shared read with a nondeterministic register assignment. The
*write-free* variant runs the original code, so later reads still see its own
writes, but publishes nothing. Two transactions that do not commute in some
serial state get an edge labelled with the dependency classes that may
explain it (WR, WW or RW). The program is robust if no transaction ``t0`` has
a path starting at its write-free variant with an RW edge and ending with an
RW edge into its read-free variant, avoiding transactions that SI would abort
for a write conflict with ``t0``. A transaction counts as conflicting only if
it writes on every path either a variable ``t0`` writes on every path or
every variable the closing RW edge may stand for.

Graph states are the serial states reached between transactions of the base
program; at each state the next transactions of two different processes are
compared in both orders. End states are compared on the shared store and on
the full register valuations of both processes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .ir import (
    Assign,
    Assume,
    Const,
    Instruction,
    Nondet,
    Process,
    Program,
    Read,
    Transaction,
    Write,
)
from .semantics import (
    BoundExceeded,
    MachineState,
    commit_block,
    compile_program,
    initial_state,
    run_block,
)

ORIGINAL, READ_FREE, WRITE_FREE = "orig", "rfree", "wfree"
PO, MWR, MWW, MRW = "PO", "MWR", "MWW", "MRW"
_M_LABEL = {"WR": MWR, "WW": MWW, "RW": MRW}


class TxnVariant(NamedTuple):
    tid: str
    kind: str = ORIGINAL

    def __str__(self) -> str:
        return {ORIGINAL: self.tid, READ_FREE: f"{self.tid}\\{{r}}",
                WRITE_FREE: f"{self.tid}\\{{w}}"}[self.kind]


class NotEnabled(RuntimeError):
    pass


def derive_variant(t: Transaction, kind: str) -> Transaction:
    if kind == ORIGINAL:
        return t
    out = []
    for ins in t.instructions:
        op = ins.op
        if kind == READ_FREE and isinstance(op, Read):
            op = Assign(op.reg, Nondet())
        elif kind == WRITE_FREE and isinstance(op, Write):
            op = Assume(Const(1))
        out.append(Instruction(ins.label, op, ins.goto))
    return Transaction(t.tid, tuple(out))


def _access_sets(t: Transaction) -> tuple[frozenset[str], frozenset[str]]:
    return t.read_vars(), t.write_vars()


@dataclass(frozen=True)
class CommuteOutcome:
    commutes: bool
    labels: frozenset = frozenset()  # {(class, var)}, class in WR/WW/RW


class _Runner:
    """Runs transaction variants atomically against a serial state."""

    def __init__(self, p: Program):
        self.p = p
        self.owner = {t.tid: (pi, ti) for pi, q in enumerate(p.processes)
                      for ti, t in enumerate(q.transactions)}
        self._compiled: dict = {}
        self._cache: dict = {}

    def variant(self, v: TxnVariant) -> Transaction:
        pi, ti = self.owner[v.tid]
        return derive_variant(self.p.processes[pi].transactions[ti], v.kind)

    def _cp(self, v: TxnVariant):
        hit = self._compiled.get(v)
        if hit is None:
            pi, _ = self.owner[v.tid]
            q = self.p.processes[pi]
            # a write-free variant still reads its own writes; they just never reach the store
            code = self.variant(TxnVariant(v.tid, ORIGINAL) if v.kind == WRITE_FREE else v)
            solo = Program((Process(q.pid, q.registers, (code,)),),
                           self.p.shared_vars, self.p.domain_size, self.p.flags)
            hit = self._compiled[v] = compile_program(solo)
        return hit

    def run(self, v: TxnVariant, log: tuple, rval: tuple) -> frozenset:
        key = (v, log, rval)
        hit = self._cache.get(key)
        if hit is None:
            outs = run_block(self._cp(v), 0, 0, log, rval, track_ext=False)
            hit = frozenset((log if v.kind == WRITE_FREE else commit_block(log, o), o.rval) for o in outs)
            self._cache[key] = hit
        return hit

    def both_orders(self, va: TxnVariant, vb: TxnVariant, log, regs: dict[int, tuple]):
        pa, pb = self.owner[va.tid][0], self.owner[vb.tid][0]
        ends_ab, ends_ba = set(), set()
        for la, ra in self.run(va, log, regs[pa]):
            for lb, rb in self.run(vb, la, regs[pb]):
                ends_ab.add((lb, ra, rb))
        for lb, rb in self.run(vb, log, regs[pb]):
            for la, ra in self.run(va, lb, regs[pa]):
                ends_ba.add((la, ra, rb))
        return ends_ab, ends_ba


def dependency_labels(ta: Transaction, tb: Transaction) -> frozenset:
    ra, wa = _access_sets(ta)
    rb, wb = _access_sets(tb)
    out = {("WR", x) for x in wa & rb}
    out |= {("WW", x) for x in wa & wb}
    out |= {("RW", x) for x in ra & wb}
    return frozenset(out)


def commutes_after(p: Program, s: MachineState, ta: TxnVariant, tb: TxnVariant,
                   _runner: _Runner | None = None) -> CommuteOutcome:
    """Compare running ``ta`` then ``tb`` with ``tb`` then ``ta`` from state ``s``."""
    runner = _runner or _Runner(p)
    pa, pb = runner.owner[ta.tid][0], runner.owner[tb.tid][0]
    if pa == pb:
        raise ValueError("transactions must belong to different processes")
    regs = {pa: s.ls[pa].rval, pb: s.ls[pb].rval}
    if not runner.run(ta, s.log, regs[pa]) or not runner.run(tb, s.log, regs[pb]):
        raise NotEnabled(f"{ta} or {tb} cannot complete from this state")
    ab, ba = runner.both_orders(ta, tb, s.log, regs)
    if ab == ba:
        return CommuteOutcome(True)
    return CommuteOutcome(False, dependency_labels(runner.variant(ta), runner.variant(tb)))


# --------------------------------------------------------------------------
# Commutativity dependency graph
# --------------------------------------------------------------------------


@dataclass
class CDG:
    nodes: list[TxnVariant]
    edges: set = field(default_factory=set)  # (from, to, label, var|None)
    states: int = 0
    bound_hit: bool = False

    def succ(self, n: TxnVariant, labels: Iterable[str] | None = None):
        labels = None if labels is None else set(labels)
        return sorted({b for a, b, l, _ in self.edges if a == n and (labels is None or l in labels)})

    def has_edge(self, a: TxnVariant, b: TxnVariant, label: str) -> bool:
        return any(x == a and y == b and l == label for x, y, l, _ in self.edges)

    def to_dot(self, name: str = "cdg") -> str:
        lines = [f"digraph {name} {{"]
        for n in self.nodes:
            lines.append(f'  "{n}";')
        grouped: dict = {}
        for a, b, l, x in self.edges:
            grouped.setdefault((str(a), str(b)), set()).add(l if x is None else f"{l}({x})")
        for (a, b), ls in sorted(grouped.items()):
            lines.append(f'  "{a}" -> "{b}" [label="{", ".join(sorted(ls))}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "nodes": [str(n) for n in self.nodes],
            "edges": sorted([str(a), str(b), l, x] for a, b, l, x in self.edges),
        }


def compute_nonmover_relations(p: Program, bound: int | None = None) -> CDG:
    """Build the graph over every serial state of ``p``."""
    runner = _Runner(p)
    nodes = [TxnVariant(t.tid, k) for q in p.processes for t in q.transactions
             for k in (ORIGINAL, READ_FREE, WRITE_FREE)]
    g = CDG(nodes)
    for q in p.processes:
        ts = q.transactions
        for i, a in enumerate(ts):
            for b in ts[i + 1:]:
                g.edges.add((TxnVariant(a.tid), TxnVariant(b.tid), PO, None))
    combos = [(ORIGINAL, ORIGINAL), (WRITE_FREE, ORIGINAL), (ORIGINAL, READ_FREE),
              (READ_FREE, ORIGINAL), (ORIGINAL, WRITE_FREE)]
    cp = compile_program(p)
    s0 = initial_state(p)
    start = (s0.log, tuple((0, l.rval) for l in s0.ls))
    seen = {start}
    stack = [start]
    done: set = set()
    while stack:
        log, procs = stack.pop()
        g.states += 1
        live = [(pi, cp.txns[pi][pos].tid, rv) for pi, (pos, rv) in enumerate(procs)
                if pos < len(cp.txns[pi])]
        for (pa, ta, ra), (pb, tb, rb) in ((x, y) for x in live for y in live if x[0] != y[0]):
            regs = {pa: ra, pb: rb}
            for ka, kb in combos:
                va, vb = TxnVariant(ta, ka), TxnVariant(tb, kb)
                key = (va, vb, log, ra, rb)
                if key in done:
                    continue
                done.add(key)
                if not runner.run(va, log, ra) or not runner.run(vb, log, rb):
                    continue
                ab, ba = runner.both_orders(va, vb, log, regs)
                if ab != ba:
                    for cls, x in dependency_labels(runner.variant(va), runner.variant(vb)):
                        g.edges.add((va, vb, _M_LABEL[cls], x))
        for pi, (pos, rv) in enumerate(procs):
            if pos >= len(cp.txns[pi]):
                continue
            for out in run_block(cp, pi, pos, log, rv, track_ext=False):
                nxt = (commit_block(log, out), procs[:pi] + ((pos + 1, out.rval),) + procs[pi + 1:])
                if nxt not in seen:
                    seen.add(nxt)
                    if bound is not None and len(seen) > bound:
                        g.bound_hit = True
                        return g
                    stack.append(nxt)
    return g


@dataclass(frozen=True)
class NonMoverCycle:
    pivot: str
    path: tuple[str, ...]
    labels: tuple[str, ...]  # labels of the edges along pivot\{w} -> path -> pivot\{r}

    def __str__(self) -> str:
        nodes = [f"{self.pivot}\\{{w}}", *self.path, f"{self.pivot}\\{{r}}"]
        parts = [nodes[0]]
        for lab, n in zip(self.labels, nodes[1:]):
            parts.append(f"-{lab}-> {n}")
        return " ".join(parts)


def must_write_vars(t: Transaction) -> frozenset[str]:
    """Variables written on every entry-to-commit path (empty if paths are unbounded)."""
    paths = _paths_accesses(t)
    if not paths:
        return frozenset()
    return frozenset.intersection(*(frozenset(x for k, x in acc if k == "w") for acc in paths))


def find_non_mover_cycle(g: CDG, p: Program) -> NonMoverCycle | None:
    txns = [t for q in p.processes for t in q.transactions]
    must = {t.tid: must_write_vars(t) for t in txns}
    for t0 in txns:
        if not t0.write_vars():
            continue
        wfree, rfree = TxnVariant(t0.tid, WRITE_FREE), TxnVariant(t0.tid, READ_FREE)
        # the closing edge says t0 writes one of its variables
        closing: dict[str, set[str]] = {}
        for a, b, l, x in g.edges:
            if b == rfree and l == MRW and a.kind == ORIGINAL and a.tid != t0.tid:
                closing.setdefault(a.tid, set()).add(x)
        starts = [t1 for t1 in g.succ(wfree, [MRW]) if t1.kind == ORIGINAL]
        for end in sorted(closing):
            written = closing[end]

            # SI aborts t0 if a transaction inside its window surely writes what t0 writes
            def allowed(tid, written=written):
                return tid != t0.tid and not (must[tid] & must[t0.tid]) and not written <= must[tid]

            if not allowed(end):
                continue
            for t1 in starts:
                if not allowed(t1.tid):
                    continue
                path = _bfs(g, t1, {end}, allowed)
                if path is not None:
                    labels = [MRW]
                    for a, b in zip(path, path[1:]):
                        labels.append(_edge_label(g, a, b))
                    labels.append(MRW)
                    return NonMoverCycle(t0.tid, tuple(v.tid for v in path), tuple(labels))
    return None


def _edge_label(g: CDG, a: TxnVariant, b: TxnVariant) -> str:
    return min(l for x, y, l, _ in g.edges if x == a and y == b)


def _bfs(g: CDG, start: TxnVariant, ends: set[str], allowed) -> list[TxnVariant] | None:
    prev = {start: None}
    queue = deque([start])
    while queue:
        n = queue.popleft()
        if n.tid in ends:
            out = []
            while n is not None:
                out.append(n)
                n = prev[n]
            return out[::-1]
        for m in g.succ(n):
            if m.kind == ORIGINAL and allowed(m.tid) and m not in prev:
                prev[m] = n
                queue.append(m)
    return None


@dataclass
class ProofVerdict:
    proved: bool
    cycle: NonMoverCycle | None = None
    graph: CDG | None = None
    bound_hit: bool = False

    @property
    def status(self) -> str:
        return "Proved" if self.proved else "Unknown"


def check_robustness_cdg(p: Program, bound: int | None = None) -> ProofVerdict:
    g = compute_nonmover_relations(p, bound)
    if g.bound_hit:
        return ProofVerdict(False, None, g, True)
    cyc = find_non_mover_cycle(g, p)
    return ProofVerdict(cyc is None, cyc, g)


# --------------------------------------------------------------------------
# Syntactic pre-check
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RobustReason:
    clause: str  # a | b | c
    detail: str


def _paths_accesses(t: Transaction) -> list[list[tuple[str, str]]] | None:
    """Accesses (kind, var) along each entry-to-commit path; None if paths are unbounded."""
    table: dict[str, list[Instruction]] = {}
    for ins in t.instructions:
        table.setdefault(ins.label, []).append(ins)
    out: list = []

    def walk(label, acc, visiting):
        if len(out) > 1000:
            raise BoundExceeded
        for ins in table.get(label, ()):
            op = ins.op
            step = acc
            if isinstance(op, Read):
                step = acc + [("r", op.var)]
            elif isinstance(op, Write):
                step = acc + [("w", op.var)]
            if not ins.goto:
                out.append(step)
            for g in ins.goto:
                if g in visiting:
                    # a loop: repeat the body once more to expose repeated accesses
                    out.append(step + step[len(acc):])
                    continue
                walk(g, step, visiting | {g})

    try:
        walk(t.entry, [], frozenset([t.entry]))
    except BoundExceeded:
        return None
    return out


def syntactic_robustness_check(p: Program) -> RobustReason | None:
    txns = [t for q in p.processes for t in q.transactions]
    if not txns:
        return RobustReason("a", "program has no transactions")
    paths = {t.tid: _paths_accesses(t) for t in txns}
    if all(ps is not None and all(len(acc) <= 1 for acc in ps) for ps in paths.values()):
        return RobustReason("a", "every transaction performs at most one shared access")
    if all(len(t.accessed_vars()) <= 1 for t in txns):
        return RobustReason("b", "every transaction accesses a single variable")
    for x in p.shared_vars:
        if all(ps is not None and ps and all(("w", x) in acc for acc in ps)
               for ps in paths.values()):
            return RobustReason("c", f"every transaction writes {x}")
    return None
