"""Deterministic pseudo-random program generator for equivalence harnesses."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .ir import (
    Assume,
    Begin,
    BinOp,
    Commit,
    Const,
    Instruction,
    Process,
    Program,
    Read,
    Reg,
    Transaction,
    Write,
    print_program,
    validate_program,
)


@dataclass(frozen=True)
class GenConfig:
    procs: int = 3
    txns: int = 3
    instrs: int = 3
    vars: int = 2
    domain: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("procs", "txns", "instrs", "vars"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.domain < 2:
            raise ValueError("domain must be >= 2")


_VAR_NAMES = "xyzwuv"


def generate_program(cfg: GenConfig) -> Program:
    rng = random.Random(cfg.seed)
    vars_ = [(_VAR_NAMES[i] if i < len(_VAR_NAMES) else f"v{i}") for i in range(cfg.vars)]
    nprocs = rng.randint(min(2, cfg.procs), cfg.procs)
    tcount = 0
    processes = []
    for pi in range(1, nprocs + 1):
        regs: list[str] = []
        txns = []
        for _ in range(rng.randint(1, cfg.txns)):
            tcount += 1
            txns.append(_gen_txn(rng, cfg, f"t{tcount}", vars_, regs, pi))
        processes.append(Process(f"p{pi}", tuple(regs), tuple(txns)))
    prog = Program(tuple(processes), tuple(vars_), cfg.domain)
    assert not validate_program(prog), validate_program(prog)
    return prog


def _gen_txn(rng: random.Random, cfg: GenConfig, tid: str, vars_, regs: list[str], pi: int):
    body = []  # list of (op, guard) where guard is an optional (reg, const)
    for _ in range(rng.randint(1, cfg.instrs)):
        x = rng.choice(vars_)
        guard = None
        if regs and rng.random() < 0.15:
            guard = (rng.choice(regs), rng.randrange(cfg.domain))
        if rng.random() < 0.5:
            r = f"r{pi}{len(regs) + 1}" if pi < 10 else f"r{pi}_{len(regs) + 1}"
            regs.append(r)
            body.append((Read(r, x), guard))
        else:
            choice = rng.random()
            if regs and choice < 0.35:
                e = Reg(rng.choice(regs))
            elif regs and choice < 0.5:
                e = BinOp("+", Reg(rng.choice(regs)), Const(1))
            else:
                e = Const(rng.randrange(cfg.domain))
            body.append((Write(x, e), guard))
    instrs = [Instruction("l0", Begin(), ("l1",))]
    n = len(body)
    for k, (op, guard) in enumerate(body, start=1):
        here, nxt = f"l{k}", f"l{k + 1}"
        if guard is None:
            instrs.append(Instruction(here, op, (nxt,)))
        else:
            r, c = guard
            instrs.append(Instruction(here, Assume(BinOp("==", Reg(r), Const(c))), (f"l{k}g",)))
            instrs.append(Instruction(here, Assume(BinOp("!=", Reg(r), Const(c))), (nxt,)))
            instrs.append(Instruction(f"l{k}g", op, (nxt,)))
    instrs.append(Instruction(f"l{n + 1}", Commit(), ()))
    return Transaction(tid, tuple(instrs))


def generate_corpus(cfg: GenConfig, count: int) -> list[Program]:
    """``count`` programs from consecutive seeds starting at ``cfg.seed``."""
    out = []
    for k in range(count):
        c = GenConfig(cfg.procs, cfg.txns, cfg.instrs, cfg.vars, cfg.domain, cfg.seed + k)
        out.append(generate_program(c))
    return out


def generate_text(cfg: GenConfig) -> str:
    return print_program(generate_program(cfg))
