"""Machine-readable analysis reports.

A report collects one result per analysis method, each with a verdict string,
timing and state counts, plus the witness or proof artifact. The JSON form is
validated against ``report.schema.json``, shipped with the package.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import jsonschema

from .instrument import check_robustness_via_reduction
from .ir import Program
from .movers import check_robustness_cdg, syntactic_robustness_check
from .traces import Verdict, check_robustness_enumerative

SCHEMA_VERSION = "1.0"

ENUM, ENUM_VA, REDUCE, CDG_METHOD, SYNTACTIC = "enum", "enum-value-aware", "reduce", "cdg", "syntactic"
METHOD_ORDER = (ENUM, ENUM_VA, REDUCE, CDG_METHOD, SYNTACTIC)

# verdict strings
ROBUST, NON_ROBUST, PROVED, UNKNOWN, BOUND, INCONCLUSIVE = (
    "robust", "non-robust", "proved", "unknown", "bound", "inconclusive")

EXIT_OK, EXIT_NON_ROBUST, EXIT_UNKNOWN = 0, 1, 2


class InconsistentReport(AssertionError):
    pass


@dataclass
class MethodResult:
    method: str
    verdict: str
    seconds: float
    states: int = 0
    witness: dict | None = None  # events, cycle
    proof: dict | None = None  # cdg graph, syntactic clause, unknown cycle

    def to_json(self) -> dict:
        out = {"method": self.method, "verdict": self.verdict,
               "seconds": round(self.seconds, 6), "states": self.states}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.proof is not None:
            out["proof"] = self.proof
        return out


@dataclass
class Report:
    program: str
    results: dict[str, MethodResult] = field(default_factory=dict)
    primary: str = ENUM  # method whose verdict drives the exit code

    def verdict(self, method: str) -> str | None:
        r = self.results.get(method)
        return None if r is None else r.verdict

    def overall(self) -> str:
        """Verdict of the most decisive method present."""
        order = [self.primary] + [m for m in (ENUM, ENUM_VA, REDUCE, CDG_METHOD, SYNTACTIC)
                                  if m != self.primary]
        for m in order:
            v = self.verdict(m)
            if v in (ROBUST, NON_ROBUST, PROVED):
                return ROBUST if v == PROVED else v
        return UNKNOWN

    def exit_code(self) -> int:
        return {ROBUST: EXIT_OK, NON_ROBUST: EXIT_NON_ROBUST}.get(self.overall(), EXIT_UNKNOWN)

    def inconsistencies(self) -> list[str]:
        """Pairs of methods whose verdicts contradict each other."""
        out = []
        enum, enum_va = self.verdict(ENUM), self.verdict(ENUM_VA)
        red, cdg, syn = self.verdict(REDUCE), self.verdict(CDG_METHOD), self.verdict(SYNTACTIC)
        if enum == NON_ROBUST and red == ROBUST:
            out.append("enumeration found a violation the reduction missed")
        if enum == ROBUST and red == NON_ROBUST:
            out.append("reduction found a violation enumeration missed")
        if enum == ROBUST and enum_va == NON_ROBUST:
            out.append("value-aware violation without a value-blind one")
        # the commutativity proof only covers the value-aware notion
        if cdg == PROVED and enum_va == NON_ROBUST:
            out.append("CDG proved robustness but value-aware enumeration found a violation")
        if syn == ROBUST and NON_ROBUST in (enum, enum_va, red):
            out.append("syntactic clause holds but a violation was found")
        return out

    def assert_consistent(self) -> None:
        bad = self.inconsistencies()
        if bad:
            raise InconsistentReport("; ".join(bad))

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "program": self.program,
            "overall": self.overall(),
            "exit_code": self.exit_code(),
            "results": [self.results[m].to_json() for m in METHOD_ORDER if m in self.results],
        }

    def dumps(self) -> str:
        data = self.to_json()
        validate_report(data)
        return json.dumps(data, indent=2, sort_keys=False) + "\n"

    def summary_lines(self) -> list[str]:
        lines = [f"program {self.program}"]
        for m in METHOD_ORDER:
            r = self.results.get(m)
            if r is None:
                continue
            extra = ""
            if r.witness and r.witness.get("cycle"):
                extra = "  cycle " + " -> ".join(r.witness["cycle"])
            elif r.proof and r.proof.get("cycle"):
                extra = "  cycle " + r.proof["cycle"]
            elif r.proof and r.proof.get("clause"):
                extra = f"  clause ({r.proof['clause']}) {r.proof['detail']}"
            lines.append(f"  {m:<17} {r.verdict:<12} {r.seconds:8.3f}s {r.states:>8} states{extra}")
        lines.append(f"overall {self.overall()}")
        return lines


def load_schema() -> dict:
    text = resources.files("sirobust").joinpath("report.schema.json").read_text()
    return json.loads(text)


def validate_report(data: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``data`` does not match the schema."""
    jsonschema.validate(data, load_schema())


# --------------------------------------------------------------------------
# Running analyses
# --------------------------------------------------------------------------


def _timed(fn: Callable):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def _from_verdict(method: str, v: Verdict, seconds: float) -> MethodResult:
    if not v.robust:
        verdict = NON_ROBUST
    elif v.bound_hit:
        verdict = BOUND
    else:
        verdict = ROBUST
    witness = None
    if v.witness is not None:
        witness = {"events": [str(e) for e in v.witness.events], "cycle": list(v.witness.cycle)}
    return MethodResult(method, verdict, seconds, v.states_explored, witness)


def run_enum(p: Program, value_aware: bool = False, bound: int | None = None) -> MethodResult:
    v, dt = _timed(lambda: check_robustness_enumerative(p, value_aware, bound))
    return _from_verdict(ENUM_VA if value_aware else ENUM, v, dt)


def run_reduce(p: Program, bound: int | None = None) -> MethodResult:
    v, dt = _timed(lambda: check_robustness_via_reduction(p, bound))
    return _from_verdict(REDUCE, v, dt)


def run_cdg(p: Program, bound: int | None = None) -> MethodResult:
    v, dt = _timed(lambda: check_robustness_cdg(p, bound))
    states = v.graph.states if v.graph is not None else 0
    proof = {"graph": v.graph.to_json()} if v.graph is not None else {}
    if v.proved:
        verdict = PROVED
    else:
        verdict = BOUND if v.bound_hit else UNKNOWN
        if v.cycle is not None:
            proof["cycle"] = str(v.cycle)
    return MethodResult(CDG_METHOD, verdict, dt, states, proof=proof)


def run_syntactic(p: Program) -> MethodResult:
    reason, dt = _timed(lambda: syntactic_robustness_check(p))
    if reason is None:
        return MethodResult(SYNTACTIC, INCONCLUSIVE, dt)
    return MethodResult(SYNTACTIC, ROBUST, dt, proof={"clause": reason.clause, "detail": reason.detail})


def analyze(p: Program, name: str, methods: str = "all", value_aware: bool = False,
            bound: int | None = None) -> Report:
    """Run ``methods`` (enum, reduce, cdg or all) and collect a report."""
    rep = Report(name, primary=ENUM_VA if value_aware else ENUM)
    if methods in ("enum", "all"):
        if methods == "all" or not value_aware:
            rep.results[ENUM] = run_enum(p, False, bound)
        if methods == "all" or value_aware:
            rep.results[ENUM_VA] = run_enum(p, True, bound)
    if methods in ("reduce", "all"):
        rep.results[REDUCE] = run_reduce(p, bound)
        if methods == "reduce":
            rep.primary = REDUCE
    if methods in ("cdg", "all"):
        rep.results[CDG_METHOD] = run_cdg(p, bound)
        if methods == "cdg":
            rep.primary = CDG_METHOD
    if methods == "all":
        rep.results[SYNTACTIC] = run_syntactic(p)
        rep.assert_consistent()
    return rep
