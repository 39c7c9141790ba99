"""Traces, happens-before, serializability and the enumerative robustness oracle.

A trace collapses each transaction into two macro-events, ``isu`` (placed at
its begin) and ``com``, and relates them by program order (po), read-from
(rf), store order (ww), conflict (rw) and same-transaction (sametr) edges.
Initial values come from a virtual transaction ``t0`` that commits before
everything; its edges are used to derive rw but are not stored.

A trace is serializable iff the transaction-level happens-before relation is
acyclic. Robustness is decided by searching for an SI execution whose trace
is not serializable. The main search works on coarse SI steps: a *begin
block* runs begin and every local step of a transaction at once (under SI a
transaction only sees its snapshot, so this loses no behaviour), and commit
is a separate step. A dependency graph over transactions is maintained
incrementally and reduced to the nodes that can still gain edges, which makes
state deduplication possible.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .ir import Program
from .semantics import (
    SI,
    BoundExceeded,
    Compiled,
    Event,
    Execution,
    InvalidStep,
    commit_block,
    compile_program,
    enumerate_executions,
    initial_state,
    replay,
    run_block,
)


class IncompleteExecution(ValueError):
    pass


class MacroEvent(NamedTuple):
    kind: str  # isu | com
    pid: str
    tid: str
    inst: int = 0

    def __str__(self) -> str:
        return f"{self.kind}({self.pid},{self.tid})"


Edge = tuple  # (a, b) or (a, b, var)


@dataclass(frozen=True)
class TxnInfo:
    pid: str
    tid: str
    reads: dict  # externally read var -> value
    writes: dict  # written var -> final value


@dataclass(frozen=True)
class Trace:
    summary: tuple[MacroEvent, ...]
    po: frozenset
    rf: frozenset
    ww: frozenset
    rw: frozenset
    sametr: frozenset
    txns: dict = field(default_factory=dict, compare=False, hash=False)

    def transactions(self) -> list[str]:
        return [e.tid for e in self.summary if e.kind == "isu"]

    def base_edges(self) -> set[tuple[MacroEvent, MacroEvent]]:
        out = set(self.po) | set(self.sametr)
        for rel in (self.rf, self.ww, self.rw):
            out.update((a, b) for a, b, _ in rel)
        return out

    def txn_relations(self) -> dict[str, frozenset]:
        """Relations lifted to transaction ids (self pairs kept)."""
        return {
            "po": frozenset((a.tid, b.tid) for a, b in self.po),
            "rf": frozenset((a.tid, b.tid, x) for a, b, x in self.rf),
            "ww": frozenset((a.tid, b.tid, x) for a, b, x in self.ww),
            "rw": frozenset((a.tid, b.tid, x) for a, b, x in self.rw),
        }

    def to_json(self) -> dict:
        ev = lambda e: str(e)
        return {
            "summary": [ev(e) for e in self.summary],
            "po": sorted([ev(a), ev(b)] for a, b in self.po),
            "sametr": sorted([ev(a), ev(b)] for a, b in self.sametr),
            **{name: sorted([ev(a), ev(b), x] for a, b, x in rel)
               for name, rel in (("rf", self.rf), ("ww", self.ww), ("rw", self.rw))},
        }


# --------------------------------------------------------------------------
# Trace construction
# --------------------------------------------------------------------------


def _collect(events: Sequence[Event], committed_only: bool):
    begin_at: dict[str, int] = {}
    com_at: dict[str, int] = {}
    info: dict[str, dict] = {}
    for i, e in enumerate(events):
        key = e.tid
        if e.kind == "begin":
            begin_at[key] = i
            info[key] = {"pid": e.pid, "reads": {}, "writes": {}}
        elif e.kind == "com":
            com_at[key] = i
        elif e.kind == "load":
            d = info[key]
            if e.var not in d["writes"] and e.var not in d["reads"]:
                d["reads"][e.var] = e.value
        elif e.kind == "isu":
            info[key]["writes"][e.var] = e.value
    pending = [t for t in begin_at if t not in com_at]
    if pending and not committed_only:
        raise IncompleteExecution(f"uncommitted transactions: {', '.join(pending)}")
    tids = [t for t in begin_at if t in com_at]
    txns = {t: TxnInfo(info[t]["pid"], t, dict(info[t]["reads"]), dict(info[t]["writes"]))
            for t in tids}
    return tids, begin_at, com_at, txns


def _events_of(e) -> Sequence[Event]:
    return e.events if isinstance(e, Execution) else e


def trace_of(e, committed_only: bool = False) -> Trace:
    """Trace of an execution (or event list)."""
    return _build_trace(_events_of(e), committed_only, value_aware=False)


def trace_of_value_aware(e, committed_only: bool = False) -> Trace:
    """Trace where store order ignores equal values and reads point to the oldest writer."""
    return _build_trace(_events_of(e), committed_only, value_aware=True)


def _build_trace(events: Sequence[Event], committed_only: bool, value_aware: bool) -> Trace:
    tids, begin_at, com_at, txns = _collect(events, committed_only)
    isu = {t: MacroEvent("isu", txns[t].pid, t) for t in tids}
    com = {t: MacroEvent("com", txns[t].pid, t) for t in tids}
    marks = sorted([(begin_at[t], isu[t]) for t in tids] + [(com_at[t], com[t]) for t in tids])
    summary = tuple(m for _, m in marks)

    po = set()
    by_pid: dict[str, list[str]] = {}
    for t in sorted(tids, key=lambda t: begin_at[t]):
        by_pid.setdefault(txns[t].pid, []).append(t)
    for seq in by_pid.values():
        for i, a in enumerate(seq):
            for b in seq[i + 1:]:
                po.add((isu[a], isu[b]))
    sametr = {(isu[t], com[t]) for t in tids}

    commit_order = sorted(tids, key=lambda t: com_at[t])
    rf, ww, rw = set(), set(), set()
    all_vars = {x for t in tids for x in txns[t].writes} | {x for t in tids for x in txns[t].reads}
    for x in sorted(all_vars):
        writers = [t for t in commit_order if x in txns[t].writes]
        # t0 is index -1 with value 0
        wval = {t: txns[t].writes[x] for t in writers}

        def store_order(a, b) -> bool:
            """ww(a, b) for a, b in writers or a None (t0)."""
            pa = -1 if a is None else com_at[a]
            if pa >= com_at[b]:
                return False
            if value_aware:
                va = 0 if a is None else wval[a]
                return va != wval[b]
            return True

        for a, b in itertools.combinations(writers, 2):
            if store_order(a, b):
                ww.add((com[a], com[b], x))
        for r in tids:
            if x not in txns[r].reads:
                continue
            before = [w for w in writers if com_at[w] < begin_at[r]]
            if value_aware:
                v = txns[r].reads[x]
                src = None if v == 0 else next((w for w in before if wval[w] == v), None)
            else:
                src = before[-1] if before else None
            if src is not None:
                rf.add((com[src], isu[r], x))
            for w in writers:
                if store_order(src, w) and (not value_aware or com_at[w] > begin_at[r]):
                    rw.add((isu[r], com[w], x))
    return Trace(summary, frozenset(po), frozenset(rf), frozenset(ww), frozenset(rw),
                 frozenset(sametr), txns)


# --------------------------------------------------------------------------
# Happens-before
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HappensBefore:
    hb: frozenset
    hb_t: frozenset


def _closure(nodes: Iterable, edges: Iterable[tuple]) -> set[tuple]:
    succ: dict = {n: set() for n in nodes}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
        succ.setdefault(b, set())
    out = set()
    for n in succ:
        stack, seen = list(succ[n]), set()
        while stack:
            m = stack.pop()
            if m in seen:
                continue
            seen.add(m)
            stack.extend(succ[m])
        out.update((n, m) for m in seen)
    return out


def happens_before(tr: Trace) -> HappensBefore:
    hb = _closure(tr.summary, tr.base_edges())
    hb_t = {(a.tid, b.tid) for a, b in hb if a.tid != b.tid}
    return HappensBefore(frozenset(hb), frozenset(hb_t))


def natural_key(s: str):
    return [int(c) if c.isdigit() else c for c in re.split(r"(\d+)", s)]


def least_cycle(edges: Iterable[tuple[str, str]]) -> list[str] | None:
    """Lexicographically least simple cycle under natural id order, or None."""
    succ: dict[str, set[str]] = {}
    for a, b in edges:
        if a != b:
            succ.setdefault(a, set()).add(b)
            succ.setdefault(b, set())
    order = sorted(succ, key=natural_key)
    rank = {n: i for i, n in enumerate(order)}

    def reaches(src: str, dst: str, banned: set[str], floor: int) -> bool:
        stack, seen = [src], {src}
        while stack:
            n = stack.pop()
            if n == dst:
                return True
            for m in succ[n]:
                if m not in seen and (m == dst or (m not in banned and rank[m] > floor)):
                    seen.add(m)
                    stack.append(m)
        return False

    for s in order:
        floor = rank[s]
        if not any(reaches(m, s, {s}, floor) for m in succ[s] if rank[m] > floor):
            continue
        path, cur = [s], s
        while True:
            nxt = sorted((m for m in succ[cur] if m == s or (m not in path and rank[m] > floor)),
                         key=lambda m: (m != s, rank[m]))
            if nxt and nxt[0] == s and len(path) > 1:
                return path
            for m in nxt:
                if m != s and reaches(m, s, set(path), floor):
                    path.append(m)
                    cur = m
                    break
            else:  # pragma: no cover - guarded by the reachability pre-check
                raise AssertionError("cycle search lost its way")
    return None


def hb_t_cycle(tr: Trace) -> list[str] | None:
    return least_cycle(happens_before(tr).hb_t)


def is_serializable(tr: Trace) -> bool:
    return hb_t_cycle(tr) is None


def serializable_by_permutation(tr: Trace) -> bool:
    """Brute force: some program-order-respecting serial order yields the same relations."""
    tids = tr.transactions()
    info = tr.txns
    target = tr.txn_relations()
    target = {k: v for k, v in target.items() if k != "po"}
    pos_in_pid = {}
    for t in tids:
        pos_in_pid.setdefault(info[t].pid, []).append(t)
    for perm in itertools.permutations(tids):
        idx = {t: i for i, t in enumerate(perm)}
        if any(idx[a] > idx[b] for seq in pos_in_pid.values()
               for a, b in zip(seq, seq[1:])):
            continue
        rf, ww, rw = set(), set(), set()
        for x in {x for t in tids for x in info[t].writes} | {x for t in tids for x in info[t].reads}:
            writers = [t for t in perm if x in info[t].writes]
            for a, b in itertools.combinations(writers, 2):
                ww.add((a, b, x))
            for r in perm:
                if x not in info[r].reads:
                    continue
                prior = [w for w in writers if idx[w] < idx[r]]
                if prior:
                    rf.add((prior[-1], r, x))
                    later = writers[writers.index(prior[-1]) + 1:]
                else:
                    later = writers
                rw.update((r, w, x) for w in later)
        if {"rf": rf, "ww": ww, "rw": rw} == target:
            return True
    return False


def hb_t_dot(tr: Trace, name: str = "hb_t") -> str:
    hb = happens_before(tr)
    lines = [f"digraph {name} {{"]
    for t in tr.transactions():
        lines.append(f'  "{t}";')
    for a, b in sorted(hb.hb_t):
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Robustness verdicts
# --------------------------------------------------------------------------


@dataclass
class Witness:
    events: list[Event]
    trace: Trace
    cycle: list[str]


@dataclass
class Verdict:
    robust: bool
    witness: Witness | None = None
    bound_hit: bool = False
    states_explored: int = 0
    method: str = ""


def _verified_witness(p: Program, events: list[Event], value_aware: bool) -> Witness:
    replay(p, events, SI)
    tr = trace_of_value_aware(events) if value_aware else trace_of(events)
    cycle = hb_t_cycle(tr)
    if cycle is None:
        raise AssertionError("witness trace is serializable")
    return Witness(list(events), tr, cycle)


def check_robustness_enumerative(p: Program, value_aware: bool = False, bound: int | None = None,
                                 method: str = "dsg") -> Verdict:
    """Search the SI executions of ``p`` for a non-serializable trace.

    ``method="dsg"`` (default) explores coarse SI steps with an incremental
    dependency graph and state deduplication. ``method="naive"`` enumerates
    every fine-grained SI execution and checks the trace of its committed
    transactions; it is exponential and meant for cross-validation.
    ``bound`` caps the number of explored states (or events per run for the
    naive method).
    """
    if method == "naive":
        return _naive_robustness(p, value_aware, bound)
    return _DsgSearch(p, value_aware, bound).run()


def _naive_robustness(p: Program, value_aware: bool, bound: int | None) -> Verdict:
    build = trace_of_value_aware if value_aware else trace_of
    n, hit = 0, False
    for ex in enumerate_executions(p, SI, bound=bound):
        n += 1
        hit |= ex.bound_hit
        tr = build(ex, committed_only=True)
        if not is_serializable(tr):
            committed = set(tr.transactions())
            events = [e for e in ex.events if e.tid in committed]
            return Verdict(False, _verified_witness(p, events, value_aware), hit, n, "naive")
    return Verdict(True, None, hit, n, "naive")


class _Graph:
    """Transaction dependency graph restricted to nodes that can still gain edges.

    ``reach`` holds pairs (a, b) such that a path a -> ... -> b exists whose
    intermediate nodes are all committed. Dead nodes (committed, no roles) are
    dropped; paths through them are already summarised in ``reach``.
    """

    __slots__ = ("committed", "roles", "reach")

    def __init__(self, committed, roles, reach):
        self.committed: dict[int, bool] = committed
        self.roles: dict[tuple, frozenset[int]] = roles
        self.reach: set[tuple[int, int]] = reach

    def copy(self) -> "_Graph":
        return _Graph(dict(self.committed), dict(self.roles), set(self.reach))

    def holders(self, role) -> frozenset[int]:
        return self.roles.get(role, frozenset())

    def set_role(self, role, nodes: Iterable[int]) -> None:
        nodes = frozenset(nodes)
        if nodes:
            self.roles[role] = nodes
        else:
            self.roles.pop(role, None)

    def add_role(self, role, n: int) -> None:
        self.roles[role] = self.holders(role) | {n}

    def add_edge(self, u: int, v: int) -> None:
        if u == v:
            return
        src = {u} | ({a for a, b in self.reach if b == u} if self.committed[u] else set())
        dst = {v} | ({b for a, b in self.reach if a == v} if self.committed[v] else set())
        self.reach.update((a, b) for a in src for b in dst)

    def mark_committed(self, n: int) -> None:
        self.committed[n] = True
        pred = [a for a, b in self.reach if b == n]
        succ = [b for a, b in self.reach if a == n]
        self.reach.update((a, b) for a in pred for b in succ)

    def gc(self) -> None:
        live = set()
        for nodes in self.roles.values():
            live |= nodes
        dead = [n for n in self.committed if n not in live]
        if dead:
            for n in dead:
                del self.committed[n]
            self.reach = {(a, b) for a, b in self.reach if a in live and b in live}

    def canonical(self) -> tuple:
        sig: dict[int, list] = {n: [] for n in self.committed}
        for role, nodes in self.roles.items():
            for n in nodes:
                sig[n].append(role)
        order = sorted(self.committed, key=lambda n: (self.committed[n], sorted(sig[n], key=repr), n))
        idx = {n: i for i, n in enumerate(order)}
        return (
            tuple((self.committed[n], tuple(sorted(sig[n], key=repr))) for n in order),
            tuple(sorted((idx[a], idx[b]) for a, b in self.reach)),
        )


class _DsgSearch:
    def __init__(self, p: Program, value_aware: bool, bound: int | None):
        self.p = p
        self.cp: Compiled = compile_program(p)
        self.va = value_aware
        self.bound = bound
        self.visited: set = set()
        self.states = 0
        self.bound_hit = False
        self.next_id = 0

    def run(self) -> Verdict:
        cp = self.cp
        s0 = initial_state(self.p)
        procs = tuple((0, l.rval, None) for l in s0.ls)
        path: list = []
        found = self._dfs(s0.log, procs, _Graph({}, {}, set()), path)
        method = "dsg-value-aware" if self.va else "dsg"
        if found is None:
            return Verdict(True, None, self.bound_hit, self.states, method)
        events: list[Event] = []
        for kind, pi, ti, out in found:
            if kind == "begin":
                events.extend(out.events)
            else:
                events.append(Event("com", cp.pids[pi], cp.txns[pi][ti].tid))
        committed = {e.tid for e in events if e.kind == "com"}
        events = [e for e in events if e.tid in committed]
        return Verdict(False, _verified_witness(self.p, events, self.va), self.bound_hit,
                       self.states, method)

    def _key(self, log, procs, g: _Graph):
        abs_procs = []
        for pos, rv, fl in procs:
            if fl is None:
                abs_procs.append((pos, rv, None))
            else:
                _, out, dirty = fl
                wst = tuple(v if out.wr >> i & 1 else None for i, v in enumerate(out.store))
                abs_procs.append((pos, rv, (wst, out.wr, dirty)))
        return (log, tuple(abs_procs), g.canonical())

    def _dfs(self, log, procs, g: _Graph, path: list):
        # explicit stack of successor generators
        stack = [self._successors(log, procs, g)]
        while stack:
            try:
                step, log2, procs2, g2, cyc = next(stack[-1])
            except StopIteration:
                stack.pop()
                if path:
                    path.pop()
                continue
            path.append(step)
            if cyc:
                return list(path)
            k = self._key(log2, procs2, g2)
            if k in self.visited:
                path.pop()
                continue
            self.visited.add(k)
            self.states += 1
            if self.bound is not None and self.states > self.bound:
                self.bound_hit = True
                return None
            stack.append(self._successors(log2, procs2, g2))
        return None

    def _successors(self, log, procs, g: _Graph):
        cp = self.cp
        for pi, (pos, rv, fl) in enumerate(procs):
            if pos >= len(cp.txns[pi]):
                continue
            if fl is None:
                for out in run_block(cp, pi, pos, log, rv, track_ext=True):
                    yield self._begin(log, procs, g, pi, pos, rv, out)
            else:
                res = self._commit(log, procs, g, pi, pos, fl)
                if res is not None:
                    yield res

    def _begin(self, log, procs, g: _Graph, pi, pos, rv, out):
        g = g.copy()
        n = self.next_id
        self.next_id += 1
        g.committed[n] = False
        for u in g.holders(("last", pi)):
            g.add_edge(u, n)
        g.set_role(("last", pi), ())
        for xi in range(len(log)):
            if not out.ext >> xi & 1:
                continue
            if self.va:
                v = log[xi]
                for u in g.holders(("fw", xi, v)):
                    g.add_edge(u, n)
                g.add_role(("r", xi, v), n)
            else:
                for u in g.holders(("cw", xi)):
                    g.add_edge(u, n)
                g.add_role(("cr", xi), n)
        g.set_role(("inflight", pi), {n})
        procs2 = procs[:pi] + ((pos, rv, (n, out, 0)),) + procs[pi + 1:]
        return ("begin", pi, pos, out), log, procs2, g, False

    def _commit(self, log, procs, g: _Graph, pi, pos, fl):
        n, out, dirty = fl
        if out.wr & dirty:
            return None
        g = g.copy()
        g.mark_committed(n)
        for xi in range(len(log)):
            if not out.wr >> xi & 1:
                continue
            if self.va:
                u = out.store[xi]
                for v in range(self.cp.domain):
                    if v == u:
                        continue
                    for w in g.holders(("w", xi, v)) | g.holders(("r", xi, v)):
                        g.add_edge(w, n)
                g.add_role(("w", xi, u), n)
                if u != 0 and not g.holders(("fw", xi, u)):
                    g.set_role(("fw", xi, u), {n})
            else:
                for w in g.holders(("cw", xi)) | g.holders(("cr", xi)):
                    g.add_edge(w, n)
                g.set_role(("cw", xi), {n})
                g.set_role(("cr", xi), ())
        g.set_role(("inflight", pi), ())
        g.set_role(("last", pi), {n})
        cyc = (n, n) in g.reach
        g.gc()
        new_procs = []
        for pj, (pos_j, rv_j, fl_j) in enumerate(procs):
            if pj == pi:
                new_procs.append((pos + 1, out.rval, None))
            elif fl_j is not None:
                new_procs.append((pos_j, rv_j, (fl_j[0], fl_j[1], fl_j[2] | out.wr)))
            else:
                new_procs.append((pos_j, rv_j, fl_j))
        return ("com", pi, pos, None), commit_block(log, out), tuple(new_procs), g, cyc


# --------------------------------------------------------------------------
# Minimal anomalies
# --------------------------------------------------------------------------


def _grouped_successors(tr: Trace, a: MacroEvent, b: MacroEvent, window: set[str]) -> dict:
    """Single-step edges where each window transaction is one node."""

    def node(e: MacroEvent):
        if e.tid in window:
            return ("txn", e.tid)
        if e == a:
            return "a"
        if e == b:
            return "b"
        return None

    succ: dict = {}
    for x, y in tr.base_edges():
        nx, ny = node(x), node(y)
        if nx is None or ny is None or nx == ny:
            continue
        succ.setdefault(nx, set()).add(ny)
    return succ


def _reachable(succ: dict, src) -> set:
    seen, stack = set(), [src]
    while stack:
        for m in succ.get(stack.pop(), ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def hb_through(tr: Trace, a: MacroEvent, b: MacroEvent, window: Iterable[str]) -> bool:
    """``a`` reaches ``b`` by single-step edges through a non-empty chain of window transactions.

    Each window transaction is treated as one node grouping its isu and com.
    """
    window = set(window)
    if not window:
        return False
    succ = _grouped_successors(tr, a, b, window)
    for first in succ.get("a", ()):
        if first not in ("a", "b") and "b" in _reachable(succ, first):
            return True
    return False


@dataclass
class MinimalAnomaly:
    events: list[Event]
    delayed: tuple[str, str]  # (pid, tid)
    beta: list[str]
    alpha_len: int
    first_var: str
    last_var: str
    trace: Trace
    cycle: list[str]


SHAPE_CONDITIONS = ("single-delay", "shape", "hb-through", "rw-endpoints", "no-write-conflict")


def check_minimal_shape(p: Program, events: Sequence[Event]) -> list[str]:
    """Return the names of violated minimal-anomaly conditions (empty when all hold).

    Besides the five structural conditions (one delayed transaction; the form
    alpha . isu(t) . beta . com(t) with atomic alpha and beta; isu(t) reaches
    com(t) through beta, every beta transaction being after isu(t) and before
    com(t); first and last beta links are rw on distinct variables; beta never
    writes a variable t writes) it also checks that the events replay under SI
    and that the transaction-level happens-before has a cycle.
    """
    bad: list[str] = []
    try:
        replay(p, events, SI)
    except InvalidStep:
        bad.append("replay")
    try:
        tr = trace_of(events)
    except IncompleteExecution:
        return bad + ["shape"]
    spans: dict[str, list[int]] = {}
    for i, e in enumerate(events):
        spans.setdefault(e.tid, []).append(i)
    delayed = [t for t, idx in spans.items() if idx[-1] - idx[0] + 1 != len(idx)]
    if len(delayed) != 1:
        return bad + ["single-delay"]
    t = delayed[0]
    start = spans[t][0]
    info = tr.txns
    if events[-1].tid != t or events[-1].kind != "com":
        bad.append("shape")
    beta = [u for u in tr.transactions() if spans[u][0] > start]
    isu_t = MacroEvent("isu", info[t].pid, t)
    com_t = MacroEvent("com", info[t].pid, t)
    ok_c = bool(beta) and hb_through(tr, isu_t, com_t, beta)
    if ok_c:
        succ = _grouped_successors(tr, isu_t, com_t, set(beta))
        after = _reachable(succ, "a")
        for u in beta:
            if ("txn", u) not in after or "b" not in _reachable(succ, ("txn", u)):
                ok_c = False
    if not ok_c:
        bad.append("hb-through")
    if beta:
        a_com = MacroEvent("com", info[beta[0]].pid, beta[0])
        b_isu = MacroEvent("isu", info[beta[-1]].pid, beta[-1])
        xs = {x for s, d, x in tr.rw if s == isu_t and d == a_com}
        ys = {y for s, d, y in tr.rw if s == b_isu and d == com_t}
        if not any(x != y for x in xs for y in ys):
            bad.append("rw-endpoints")
    else:
        bad.append("rw-endpoints")
    if any(set(info[u].writes) & set(info[t].writes) for u in beta):
        bad.append("no-write-conflict")
    if is_serializable(tr):
        bad.append("cycle")
    return bad


def find_minimal_anomaly(p: Program, bound: int | None = None) -> MinimalAnomaly | None:
    """Search directly for an anomaly alpha . isu(t) . beta . com(t) of minimal shape.

    alpha ranges over serial prefixes, t over the next transaction of some
    process, and beta over serial runs of other processes' transactions that
    are each happens-after isu(t) and write nothing t writes. Candidates are
    confirmed by :func:`check_minimal_shape`. Raises BoundExceeded if more
    than ``bound`` alpha states would be explored.
    """
    cp = compile_program(p)
    s0 = initial_state(p)
    start = (s0.log, tuple((0, l.rval) for l in s0.ls))
    seen = {start}
    stack = [(start, [])]
    n_alpha = 0
    while stack:
        (log, procs), alpha = stack.pop()
        n_alpha += 1
        if bound is not None and n_alpha > bound:
            raise BoundExceeded(f"more than {bound} serial prefixes")
        for pi, (pos, rv) in enumerate(procs):
            if pos >= len(cp.txns[pi]):
                continue
            for out in run_block(cp, pi, pos, log, rv, track_ext=True):
                if not out.ext:
                    continue
                found = _search_beta(p, cp, log, procs, pi, pos, out, alpha)
                if found is not None:
                    return found
        succs = []
        for pi, (pos, rv) in enumerate(procs):
            if pos >= len(cp.txns[pi]):
                continue
            for out in run_block(cp, pi, pos, log, rv, track_ext=False):
                nxt = (commit_block(log, out), procs[:pi] + ((pos + 1, out.rval),) + procs[pi + 1:])
                if nxt not in seen:
                    seen.add(nxt)
                    evs = alpha + list(out.events) + [Event("com", cp.pids[pi], cp.txns[pi][pos].tid)]
                    succs.append((nxt, evs))
        stack.extend(reversed(succs))
    return None


def _search_beta(p, cp: Compiled, log0, procs0, pt, post, tout, alpha):
    t_tid = cp.txns[pt][post].tid
    t_com = Event("com", cp.pids[pt], t_tid)
    R_t, W_t = tout.ext, tout.wr
    seen = set()
    # frame: log, procs, union R, union W, pids, beta events, beta list, last R
    stack = [(log0, procs0, 0, 0, frozenset(), [], [])]
    while stack:
        log, procs, uR, uW, pids, bev, beta = stack.pop()
        succs = []
        for qi, (pos, rv) in enumerate(procs):
            if qi == pt or pos >= len(cp.txns[qi]):
                continue
            for out in run_block(cp, qi, pos, log, rv, track_ext=True):
                if out.wr & W_t:
                    continue
                after = (out.wr & R_t) or (out.ext & uW) or (out.wr & uW) or (out.wr & uR) \
                    or qi in pids
                if not after:
                    continue
                tid = cp.txns[qi][pos].tid
                evs = bev + list(out.events) + [Event("com", cp.pids[qi], tid)]
                nbeta = beta + [tid]
                if out.ext & W_t:
                    cand = alpha + list(tout.events) + evs + [t_com]
                    if not check_minimal_shape(p, cand):
                        tr = trace_of(cand)
                        info = tr.txns
                        first = beta[0] if beta else tid
                        isu_t = MacroEvent("isu", cp.pids[pt], t_tid)
                        com_t = MacroEvent("com", cp.pids[pt], t_tid)
                        a_com = MacroEvent("com", info[first].pid, first)
                        b_isu = MacroEvent("isu", cp.pids[qi], tid)
                        xs = sorted(x for s, d, x in tr.rw if s == isu_t and d == a_com)
                        ys = sorted(y for s, d, y in tr.rw if s == b_isu and d == com_t)
                        x, y = next((x, y) for x in xs for y in ys if x != y)
                        return MinimalAnomaly(cand, (cp.pids[pt], t_tid), nbeta, len(alpha),
                                              x, y, tr, hb_t_cycle(tr))
                nlog = commit_block(log, out)
                nprocs = procs[:qi] + ((pos + 1, out.rval),) + procs[qi + 1:]
                key = (nlog, nprocs, uR | out.ext, uW | out.wr, pids | {qi})
                if key in seen:
                    continue
                seen.add(key)
                succs.append((nlog, nprocs, uR | out.ext, uW | out.wr, pids | {qi}, evs, nbeta))
        stack.extend(reversed(succs))
    return None
