"""Command-line interface: ``sirobust run|check|generate|crosscheck|cdg-dot``.

Exit codes: 0 robust or proved, 1 non-robust (or disagreement for
``crosscheck``), 2 unknown or bound reached, 3 input error. Set
``SIROBUST_LOG`` to a logging level name (``DEBUG``, ``INFO``) for progress
messages on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import time
from pathlib import Path

from . import __version__
from .generate import GenConfig, generate_program
from .instrument import check_robustness_via_reduction
from .ir import ParseError, Program, SemanticError, load_program, print_program
from .movers import compute_nonmover_relations
from .reach import assertion, reachable_valuation
from .report import EXIT_NON_ROBUST, EXIT_OK, EXIT_UNKNOWN, analyze
from .semantics import SER, SI, BoundExceeded, enabled, enumerate_executions, initial_state, is_final
from .traces import check_robustness_enumerative

EXIT_INPUT = 3

log = logging.getLogger("sirobust")


def _setup_logging() -> None:
    level = os.environ.get("SIROBUST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load(path: str) -> Program:
    log.info("loading %s", path)
    return load_program(path)


def _write_json(path: str | None, data: str) -> None:
    if path is None:
        return
    if path == "-":
        sys.stdout.write(data)
    else:
        Path(path).write_text(data)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _random_run(p: Program, mode: str, seed: int, bound: int | None):
    rng = random.Random(seed)
    s = initial_state(p)
    events = []
    while bound is None or len(events) < bound:
        succ = enabled(p, s, mode)
        if not succ:
            break
        ev, s = rng.choice(succ)
        events.append(ev)
    return events, s


def cmd_run(args) -> int:
    p = _load(args.file)
    mode = args.mode
    if args.assert_ is not None:
        res = reachable_valuation(p, assertion(p, args.assert_), args.bound, mode)
        if res.reachable:
            print("REACHABLE")
            for e in res.path:
                print(f"  {e}")
            return EXIT_NON_ROBUST
        print("UNKNOWN (bound reached)" if res.bound_hit else "UNREACHABLE")
        return EXIT_UNKNOWN if res.bound_hit else EXIT_OK
    if args.seed is not None:
        events, s = _random_run(p, mode, args.seed, args.bound)
        status = "complete" if is_final(s, p) else "blocked"
        print(f"execution ({len(events)} events, {status})")
        for e in events:
            print(f"  {e}")
        _write_json(args.json, json.dumps({"events": [e.to_json() for e in events],
                                           "complete": status == "complete"}) + "\n")
        return EXIT_OK
    total = blocked = 0
    dump = []
    for ex in enumerate_executions(p, mode, args.bound):
        total += 1
        blocked += ex.blocked
        if args.json is not None:
            dump.append({"events": [e.to_json() for e in ex.events], "blocked": ex.blocked})
        if not args.count:
            tag = " blocked" if ex.blocked else ""
            print(f"execution {total} ({len(ex.events)} events{tag})")
            for e in ex.events:
                print(f"  {e}")
    print(f"{total} execution{'' if total == 1 else 's'} ({blocked} blocked)")
    _write_json(args.json, json.dumps({"mode": mode, "executions": dump}) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# check
# --------------------------------------------------------------------------


def cmd_check(args) -> int:
    p = _load(args.file)
    rep = analyze(p, Path(args.file).stem, args.method, args.value_aware, args.bound)
    if args.json == "-":
        sys.stdout.write(rep.dumps())
        return rep.exit_code()
    for line in rep.summary_lines():
        print(line)
    for r in rep.results.values():
        if r.witness:
            print(f"witness ({r.method}):")
            for e in r.witness["events"]:
                print(f"  {e}")
            break
    _write_json(args.json, rep.dumps())
    return rep.exit_code()


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def _gen_config(args, seed: int) -> GenConfig:
    return GenConfig(args.procs, args.txns, args.instrs, args.vars, args.domain, seed)


def cmd_generate(args) -> int:
    base = args.seed or 0
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = base + k
        text = print_program(generate_program(_gen_config(args, seed)))
        if out is None:
            if args.count > 1:
                print(f"# seed {seed}")
            sys.stdout.write(text)
        else:
            (out / f"gen_{seed:05d}.txn").write_text(text)
    if out is not None:
        print(f"wrote {args.count} programs to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# crosscheck
# --------------------------------------------------------------------------


def _crosscheck_one(p: Program, bound: int | None) -> tuple[str, str, float]:
    t = time.perf_counter()
    e = check_robustness_enumerative(p, False, bound)
    r = check_robustness_via_reduction(p, bound)

    def name(v):
        return "non-robust" if not v.robust else ("bound" if v.bound_hit else "robust")

    return name(e), name(r), time.perf_counter() - t


def cmd_crosscheck(args) -> int:
    items: list[tuple[str, object]] = []
    for path in args.paths:
        pp = Path(path)
        files = sorted(pp.glob("*.txn")) if pp.is_dir() else [pp]
        items.extend((f.name, f) for f in files)
    if args.generate:
        base = args.seed or 0
        items.extend((f"gen seed {base + k}", _gen_config(args, base + k))
                     for k in range(args.generate))
    print(f"{'program':<28} {'enum':<11} {'reduce':<11} {'agree':<6} seconds")
    disagree = errors = bounded = 0
    for label, src in items:
        try:
            p = generate_program(src) if isinstance(src, GenConfig) else _load(str(src))
            e, r, dt = _crosscheck_one(p, args.bound)
        except (ParseError, SemanticError, OSError, BoundExceeded) as exc:
            errors += 1
            print(f"{label:<28} ERROR {exc}")
            continue
        if "bound" in (e, r):
            agree = "?"
            bounded += 1
        elif e == r:
            agree = "yes"
        else:
            agree = "NO"
            disagree += 1
        print(f"{label:<28} {e:<11} {r:<11} {agree:<6} {dt:.3f}")
    print(f"{len(items)} programs, {disagree} disagreements, {errors} errors, {bounded} bounded")
    if disagree:
        return EXIT_NON_ROBUST
    return EXIT_UNKNOWN if errors or bounded else EXIT_OK


# --------------------------------------------------------------------------
# cdg-dot
# --------------------------------------------------------------------------


def cmd_cdg_dot(args) -> int:
    p = _load(args.file)
    g = compute_nonmover_relations(p, args.bound)
    dot = g.to_dot(Path(args.file).stem.replace("-", "_"))
    if args.out:
        Path(args.out).write_text(dot)
    else:
        sys.stdout.write(dot)
    return EXIT_UNKNOWN if g.bound_hit else EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _gen_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--procs", type=int, default=3, help="maximal number of processes")
    sp.add_argument("--txns", type=int, default=3, help="maximal transactions per process")
    sp.add_argument("--instrs", type=int, default=3, help="maximal instructions per transaction")
    sp.add_argument("--vars", type=int, default=2, help="number of shared variables")
    sp.add_argument("--domain", type=int, default=2, help="value domain size")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sirobust",
                                 description="Robustness of transactional programs against snapshot isolation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="enumerate executions or search for a state")
    sp.add_argument("file")
    sp.add_argument("--mode", choices=(SI, SER), default=SI)
    sp.add_argument("--bound", type=int, help="step bound (executions) or state bound (--assert)")
    sp.add_argument("--count", action="store_true", help="print only the number of executions")
    sp.add_argument("--assert", dest="assert_", metavar="EXPR",
                    help="search for a final state satisfying EXPR")
    sp.add_argument("--seed", type=int, help="print one randomly scheduled execution")
    sp.add_argument("--json", metavar="PATH", help="also write the result as JSON ('-' for stdout)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="check robustness")
    sp.add_argument("file")
    sp.add_argument("--method", choices=("enum", "reduce", "cdg", "all"), default="all")
    sp.add_argument("--value-aware", action="store_true",
                    help="ignore dependencies between equal values")
    sp.add_argument("--bound", type=int, help="state bound for each search")
    sp.add_argument("--json", metavar="PATH", help="write the report as JSON ('-' for stdout)")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("generate", help="generate random programs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--out", metavar="DIR", help="write one file per program into DIR")
    _gen_flags(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("crosscheck", help="compare enumeration and reduction verdicts")
    sp.add_argument("paths", nargs="*", help="program files or directories of .txn files")
    sp.add_argument("--bound", type=int)
    sp.add_argument("--generate", type=int, default=0, metavar="N",
                    help="also check N generated programs")
    sp.add_argument("--seed", type=int, default=0)
    _gen_flags(sp)
    sp.set_defaults(func=cmd_crosscheck)

    sp = sub.add_parser("cdg-dot", help="print the commutativity dependency graph as DOT")
    sp.add_argument("file")
    sp.add_argument("--bound", type=int)
    sp.add_argument("--out", metavar="PATH")
    sp.set_defaults(func=cmd_cdg_dot)
    return ap


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, SemanticError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
