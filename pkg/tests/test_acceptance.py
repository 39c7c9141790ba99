"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import sys
import time
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE, CORPUS  # noqa: E402
from oracles import serializable_by_reordering, si_traces  # noqa: E402
from sirobust.generate import GenConfig, generate_program  # noqa: E402
from sirobust.instrument import check_robustness_via_reduction  # noqa: E402
from sirobust.ir import load_program  # noqa: E402
from sirobust.movers import check_robustness_cdg, syntactic_robustness_check  # noqa: E402
from sirobust.reach import reachable_valuation, state_assertion  # noqa: E402
from sirobust.semantics import SER, SI, enumerate_executions, registers  # noqa: E402
from sirobust.traces import (  # noqa: E402
    check_minimal_shape,
    check_robustness_enumerative,
    find_minimal_anomaly,
    is_serializable,
    trace_of,
)

RANDOM_CFG = (3, 3, 3, 2, 2)  # procs, txns/proc, instrs/txn, vars, domain
RANDOM_COUNT = 200
TRACE_TXN_LIMIT = 5
TRACE_GEN_CFG = (3, 2, 2, 2, 2)
TRACE_GEN_COUNT = 100


def load(name: str):
    return load_program(CORPUS / f"{name}.txn")


@lru_cache(maxsize=None)
def random_corpus():
    return tuple(generate_program(GenConfig(*RANDOM_CFG, seed=s)) for s in range(RANDOM_COUNT))


class Timer:
    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t


def _txns(events) -> set[str]:
    return {e.tid for e in events}


# --------------------------------------------------------------------------
# Criteria
# --------------------------------------------------------------------------


def criterion_1():
    p = load("ws")
    with Timer() as tm:
        def outcomes(mode):
            out = set()
            for ex in enumerate_executions(p, mode):
                regs = registers(p, ex.final_state)
                out.add((regs["p1.r1"], regs["p2.r2"]))
            return out

        si_zero = (0, 0) in outcomes(SI)
        ser_zero = (0, 0) in outcomes(SER)
        enum = check_robustness_enumerative(p)
        red = check_robustness_via_reduction(p)
    cycle = enum.witness.cycle if enum.witness else None
    ok = (si_zero and not ser_zero and not enum.robust and set(cycle or ()) == {"t1", "t2"}
          and not red.robust and tm.seconds < 1.0)
    return ok, (f"SI r1=r2=0 {si_zero}, SER {ser_zero}, cycle {cycle}, "
                f"reduction error reached {not red.robust}, {tm.seconds:.3f}s")


def criterion_2():
    p = load("ws_no_y")
    with Timer() as tm:
        enum = check_robustness_enumerative(p)
        red = check_robustness_via_reduction(p)
        cdg = check_robustness_cdg(p)
    ok = (enum.robust and red.robust and not red.bound_hit and cdg.proved and cdg.cycle is None
          and tm.seconds < 1.0)
    return ok, (f"enum robust {enum.robust}, reduction unreachable {red.robust} "
                f"(exhaustive {not red.bound_hit}), CDG {cdg.status}, {tm.seconds:.3f}s")


def criterion_3():
    parts, ok = [], True
    for name in ("robsto", "robrfo"):
        p = load(name)
        with Timer() as tm:
            aware = check_robustness_enumerative(p, value_aware=True)
            blind = check_robustness_enumerative(p, value_aware=False)
        cycle = blind.witness.cycle if blind.witness else None
        ok &= aware.robust and cycle is not None and tm.seconds < 5.0
        parts.append(f"{name}: value-aware robust {aware.robust}, value-blind cycle {cycle}, "
                     f"{tm.seconds:.3f}s")
    return ok, "; ".join(parts)


def _invalid_state_check(p, text, named):
    pred = state_assertion(p, text)
    si = reachable_valuation(p, pred, mode=SI)
    ser = reachable_valuation(p, pred, mode=SER)
    involved = _txns(si.path) if si.reachable else set()
    anomalous = si.reachable and not is_serializable(trace_of(si.path, committed_only=True))
    return si.reachable, ser.reachable, involved, anomalous


def criterion_4():
    cases = [
        # the second process reads a negative combined balance after both withdrawals
        ("smallbank_mini", "bc + bs == 2", {"Balance", "TransactSaving", "WriteCheck"}),
        # a student is registered for a removed course
        ("courseware_mini", "removed == 1 && enrolled == 1", {"RemoveCourse", "EnrollStudent"}),
    ]
    parts, ok = [], True
    for name, text, named in cases:
        p = load(name)
        with Timer() as tm:
            enum = check_robustness_enumerative(p)
            red = check_robustness_via_reduction(p)
            si, ser, involved, anomalous = _invalid_state_check(p, text, named)
        cycle = set(enum.witness.cycle) if enum.witness else set()
        good = (not enum.robust and not red.robust and cycle <= named and si and not ser
                and involved == named and anomalous and tm.seconds < 60.0)
        ok &= good
        parts.append(f"{name}: non-robust {not enum.robust}, cycle {sorted(cycle)}, invalid state "
                     f"SI {si} SER {ser}, witness txns {sorted(involved)}, {tm.seconds:.2f}s")
    return ok, "; ".join(parts)


def criterion_5():
    mismatches = []
    nonrobust = 0
    with Timer() as tm:
        for seed, p in enumerate(random_corpus()):
            e = check_robustness_enumerative(p)
            r = check_robustness_via_reduction(p)
            nonrobust += not e.robust
            if e.robust != r.robust or e.bound_hit or r.bound_hit:
                mismatches.append(seed)
    ok = not mismatches and tm.seconds < 1800
    return ok, (f"{RANDOM_COUNT} programs {RANDOM_CFG}, {nonrobust} non-robust, "
                f"{len(mismatches)} disagreements {mismatches[:5]}, {tm.seconds:.1f}s")


def criterion_6():
    bad, proved = [], 0
    programs = list(random_corpus()) + [load(f.stem) for f in sorted(CORPUS.glob("*.txn"))]
    for k, p in enumerate(programs):
        if check_robustness_cdg(p).proved:
            proved += 1
            if not check_robustness_enumerative(p, value_aware=True).robust:
                bad.append(k)
    return not bad, f"{proved} of {len(programs)} programs proved, {len(bad)} violations {bad[:5]}"


def criterion_7():
    programs = [load(f.stem) for f in sorted(CORPUS.glob("*.txn"))]
    programs += [generate_program(GenConfig(*TRACE_GEN_CFG, seed=s)) for s in range(TRACE_GEN_COUNT)]
    programs = [p for p in programs if len(p.transactions()) <= TRACE_TXN_LIMIT]
    checked = disagreements = 0
    for p in programs:
        # the oracle runs local steps right after begin; this keeps every trace
        for events in si_traces(p).values():
            checked += 1
            if is_serializable(trace_of(events)) != serializable_by_reordering(events):
                disagreements += 1
    return disagreements == 0, (f"{checked} distinct traces from {len(programs)} programs, "
                                f"{disagreements} disagreements")


def criterion_8():
    programs = list(random_corpus()) + [load(f.stem) for f in sorted(CORPUS.glob("*.txn"))]
    found = violations = 0
    for p in programs:
        m = find_minimal_anomaly(p)
        if m is None:
            continue
        found += 1
        if check_minimal_shape(p, m.events) or serializable_by_reordering(m.events):
            violations += 1
    return violations == 0 and found > 0, f"{found} minimal anomalies checked, {violations} violations"


def criterion_9():
    failures = []
    for seed in range(50):
        p = generate_program(GenConfig(1, 1, 1, 1, 2, seed=seed))
        verdicts = (
            check_robustness_enumerative(p).robust,
            check_robustness_enumerative(p, value_aware=True).robust,
            check_robustness_via_reduction(p).robust,
            check_robustness_cdg(p).proved,
            syntactic_robustness_check(p) is not None,
        )
        if not all(verdicts):
            failures.append(seed)
    return not failures, f"50 single-instruction programs, {len(failures)} not robust by every method"


def criterion_10():
    p = load("fig10_guarded_swap")
    with Timer() as tm:
        cdg = check_robustness_cdg(p)
    ok = cdg.proved and tm.seconds < 5.0
    return ok, f"CDG {cdg.status}, {tm.seconds:.3f}s"


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 11)}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = CRITERIA[n]()
    ACCEPTANCE[n] = (ok, detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}", flush=True)
    sys.exit(1 if failed else 0)
