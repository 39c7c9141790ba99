"""Program IR and the textual DSL for transactional programs.

A program is a parallel composition of processes. Each process runs a
sequence of transactions, and each transaction is a small labeled control
flow graph whose entry instruction is ``begin`` and whose paths end in
``commit``. A label may carry several instructions; together with multi-target
``goto`` clauses this encodes nondeterministic branching.

Source format (file extension ``.txn``)::

    program domain 2
    vars x y
    process p1 regs r1
      transaction t1
        l0: begin; goto l1;
        l1: r1 := y; goto l2;
        l2: x := 1; goto l3;
        l3: commit;

Labels and ``goto`` clauses may be omitted; an unlabeled line receives the
label ``_k`` (k is its line index in the transaction) and a missing ``goto``
falls through to the next line carrying a different label. ``end`` is
accepted as a synonym of ``commit``. ``#`` and ``//`` start comments.

Expressions range over registers, constants, ``*`` (nondeterministic value)
and, for instrumentation, *flag* variables declared with ``flags``. Arithmetic
wraps modulo the domain size. Comparisons and Boolean connectives yield 0/1
and may only appear inside ``assume``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

ERROR_LABEL = "error"

ARITH_OPS = ("+", "-")
CMP_OPS = ("==", "!=", "<", "<=")
BOOL_OPS = ("&&", "||")


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class Var:
    """Direct reference to a flag variable inside an expression."""

    name: str


@dataclass(frozen=True)
class Nondet:
    pass


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Const, Reg, Var, Nondet, BinOp, Not]


def expr_nodes(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, BinOp):
        yield from expr_nodes(e.left)
        yield from expr_nodes(e.right)
    elif isinstance(e, Not):
        yield from expr_nodes(e.operand)


def is_boolean(e: Expr) -> bool:
    """True if the expression tree uses a comparison or Boolean connective."""
    for n in expr_nodes(e):
        if isinstance(n, Not) or (isinstance(n, BinOp) and n.op not in ARITH_OPS):
            return True
    return False


# --------------------------------------------------------------------------
# Instructions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Begin:
    pass


@dataclass(frozen=True)
class Commit:
    pass


@dataclass(frozen=True)
class Read:
    reg: str
    var: str


@dataclass(frozen=True)
class Write:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Assume:
    cond: Expr


@dataclass(frozen=True)
class Assign:
    """Register-local assignment; emits no event."""

    reg: str
    expr: Expr


Op = Union[Begin, Commit, Read, Write, Assume, Assign]


@dataclass(frozen=True)
class Instruction:
    label: str
    op: Op
    goto: tuple[str, ...] = ()


@dataclass(frozen=True)
class Transaction:
    tid: str
    instructions: tuple[Instruction, ...]

    @property
    def entry(self) -> str:
        return self.instructions[0].label

    def labels(self) -> list[str]:
        seen: dict[str, None] = {}
        for ins in self.instructions:
            seen.setdefault(ins.label, None)
        return list(seen)

    def at(self, label: str) -> list[Instruction]:
        return [i for i in self.instructions if i.label == label]

    def read_vars(self) -> frozenset[str]:
        return frozenset(i.op.var for i in self.instructions if isinstance(i.op, Read))

    def write_vars(self) -> frozenset[str]:
        return frozenset(i.op.var for i in self.instructions if isinstance(i.op, Write))

    def accessed_vars(self) -> frozenset[str]:
        return self.read_vars() | self.write_vars()


@dataclass(frozen=True)
class Process:
    pid: str
    registers: tuple[str, ...]
    transactions: tuple[Transaction, ...]


@dataclass(frozen=True)
class Program:
    processes: tuple[Process, ...]
    shared_vars: tuple[str, ...]
    domain_size: int = 2
    flags: frozenset[str] = field(default_factory=frozenset)

    def process(self, pid: str) -> Process:
        for p in self.processes:
            if p.pid == pid:
                return p
        raise KeyError(pid)

    def transactions(self) -> list[tuple[Process, Transaction]]:
        return [(p, t) for p in self.processes for t in p.transactions]

    def transaction(self, tid: str) -> Transaction:
        for _, t in self.transactions():
            if t.tid == tid:
                return t
        raise KeyError(tid)

    def owner(self, tid: str) -> Process:
        for p, t in self.transactions():
            if t.tid == tid:
                return p
        raise KeyError(tid)


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: str = ""

    def __str__(self) -> str:
        loc = f" at {self.location}" if self.location else ""
        return f"{self.code}{loc}: {self.message}"


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SemanticError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


def _expr_names(e: Expr) -> Iterable[Expr]:
    return (n for n in expr_nodes(e) if isinstance(n, (Reg, Var, Const)))


def validate_program(p: Program) -> list[Diagnostic]:
    """Check every IR invariant; returns an empty list for a valid program."""
    diags: list[Diagnostic] = []
    add = lambda code, msg, loc="": diags.append(Diagnostic(code, msg, loc))

    if p.domain_size < 2:
        add("DomainTooSmall", f"domain size {p.domain_size} < 2")
    if len(set(p.shared_vars)) != len(p.shared_vars):
        add("DuplicateVariable", "shared variable declared twice")
    vars_ = set(p.shared_vars)
    for f in sorted(p.flags - vars_):
        add("UndeclaredVariable", f"flag {f} is not a shared variable")

    pids: set[str] = set()
    tids: set[str] = set()
    for proc in p.processes:
        if proc.pid in pids:
            add("DuplicatePid", f"process {proc.pid} declared twice", proc.pid)
        pids.add(proc.pid)
        if len(set(proc.registers)) != len(proc.registers):
            add("DuplicateRegister", "register declared twice", proc.pid)
        regs = set(proc.registers)
        for r in regs & vars_:
            add("NameClash", f"{r} is both a register and a variable", proc.pid)
        for txn in proc.transactions:
            loc = f"{proc.pid}/{txn.tid}"
            if txn.tid in tids:
                add("DuplicateTid", f"transaction {txn.tid} declared twice", loc)
            tids.add(txn.tid)
            diags.extend(_validate_txn(p, txn, regs, loc))
    return diags


def _validate_txn(p: Program, txn: Transaction, regs: set[str], loc: str) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    add = lambda code, msg, where: diags.append(Diagnostic(code, msg, f"{loc}:{where}"))
    if not txn.instructions:
        return [Diagnostic("EmptyTransaction", "transaction has no instructions", loc)]
    labels = set(txn.labels())
    vars_ = set(p.shared_vars)
    entry = txn.entry

    def check_expr(e: Expr, where: str) -> None:
        for n in _expr_names(e):
            if isinstance(n, Reg) and n.name not in regs:
                add("UndeclaredRegister", f"register {n.name} not declared", where)
            elif isinstance(n, Var) and n.name not in p.flags:
                add("VariableInExpression", f"{n.name} is not a flag variable", where)
            elif isinstance(n, Const) and not 0 <= n.value < p.domain_size:
                add("ConstantOutOfDomain", f"constant {n.value} outside domain", where)

    for ins in txn.instructions:
        op, where = ins.op, ins.label
        if isinstance(op, Begin):
            if ins.label != entry:
                add("NestedBegin", "begin outside the entry label", where)
        elif ins.label == entry:
            add("MissingBegin", "entry label must only hold begin", where)
        if isinstance(op, Commit):
            if ins.goto:
                add("CommitWithGoto", "commit takes no goto targets", where)
        elif not ins.goto:
            add("MissingGoto", "instruction needs at least one goto target", where)
        for g in ins.goto:
            if g not in labels:
                add("UnknownLabel", f"goto to unknown label {g}", where)
            elif g == entry:
                add("NestedBegin", "goto re-enters the begin label", where)
        if isinstance(op, Read):
            if op.reg not in regs:
                add("UndeclaredRegister", f"register {op.reg} not declared", where)
            if op.var not in vars_:
                add("UndeclaredVariable", f"variable {op.var} not declared", where)
        elif isinstance(op, Write):
            if op.var not in vars_:
                add("UndeclaredVariable", f"variable {op.var} not declared", where)
            if is_boolean(op.expr):
                add("BooleanInWrite", "Boolean operator outside assume", where)
            check_expr(op.expr, where)
        elif isinstance(op, Assign):
            if op.reg not in regs:
                add("UndeclaredRegister", f"register {op.reg} not declared", where)
            if is_boolean(op.expr):
                add("BooleanInWrite", "Boolean operator outside assume", where)
            check_expr(op.expr, where)
        elif isinstance(op, Assume):
            check_expr(op.cond, where)

    if any(d.code == "UnknownLabel" for d in diags):
        return diags
    # every label reachable from the entry must be able to reach a commit
    succ: dict[str, set[str]] = {l: set() for l in labels}
    commits = set()
    for ins in txn.instructions:
        succ[ins.label].update(ins.goto)
        if isinstance(ins.op, Commit):
            commits.add(ins.label)
    reach, stack = {entry}, [entry]
    while stack:
        for n in succ[stack.pop()]:
            if n not in reach:
                reach.add(n)
                stack.append(n)
    can_commit = set(commits)
    changed = True
    while changed:
        changed = False
        for l in labels - can_commit:
            if succ[l] & can_commit:
                can_commit.add(l)
                changed = True
    for l in sorted(reach - can_commit):
        add("MissingCommitPath", "no path from this label to a commit", l)
    return diags


# --------------------------------------------------------------------------
# Lexing and parsing
# --------------------------------------------------------------------------

_IDENT = r"[A-Za-z_][A-Za-z0-9_.']*"
_TOKEN = re.compile(
    rf"\s*(?:(?P<num>\d+)|(?P<id>{_IDENT})|(?P<op>:=|==|!=|<=|>=|&&|\|\||[-+*()<>!=]))"
)


def _tokenize(text: str, line: int, col0: int) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r}", line, col0 + pos)
        kind = m.lastgroup
        out.append((kind, m.group(kind), col0 + m.start(kind)))
        pos = m.end()
    return out


class _ExprParser:
    def __init__(self, toks, line, regs: set[str], vars_: set[str]):
        self.toks, self.i, self.line = toks, 0, line
        self.regs, self.vars = regs, vars_

    def peek(self):
        return self.toks[self.i][1] if self.i < len(self.toks) else None

    def take(self, expect=None):
        if self.i >= len(self.toks):
            raise ParseError("unexpected end of expression", self.line)
        tok = self.toks[self.i]
        if expect is not None and tok[1] != expect:
            raise ParseError(f"expected {expect!r}, got {tok[1]!r}", self.line, tok[2])
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.disj()
        if self.i != len(self.toks):
            tok = self.toks[self.i]
            raise ParseError(f"trailing token {tok[1]!r}", self.line, tok[2])
        return e

    def disj(self):
        e = self.conj()
        while self.peek() in ("||", "or"):
            self.take()
            e = BinOp("||", e, self.conj())
        return e

    def conj(self):
        e = self.neg()
        while self.peek() in ("&&", "and"):
            self.take()
            e = BinOp("&&", e, self.neg())
        return e

    def neg(self):
        if self.peek() in ("!", "not"):
            self.take()
            return Not(self.neg())
        return self.cmp()

    def cmp(self):
        e = self.add()
        op = self.peek()
        if op in ("==", "=", "!=", "<", "<=", ">", ">="):
            self.take()
            r = self.add()
            if op == "=":
                op = "=="
            if op == ">":
                return BinOp("<", r, e)
            if op == ">=":
                return BinOp("<=", r, e)
            return BinOp(op, e, r)
        return e

    def add(self):
        e = self.atom()
        while self.peek() in ARITH_OPS:
            op = self.take()[1]
            e = BinOp(op, e, self.atom())
        return e

    def atom(self):
        kind, val, col = self.take()
        if val == "(":
            e = self.disj()
            self.take(")")
            return e
        if val == "*":
            return Nondet()
        if kind == "num":
            return Const(int(val))
        if val == "true":
            return Const(1)
        if val == "false":
            return Const(0)
        if kind == "id":
            if val in self.regs:
                return Reg(val)
            if val in self.vars:
                return Var(val)
            # unknown name: keep as register so validation reports it
            return Reg(val)
        raise ParseError(f"unexpected token {val!r}", self.line, col)


def parse_expr(text: str, regs: Iterable[str] = (), vars_: Iterable[str] = (), line: int = 1) -> Expr:
    return _ExprParser(_tokenize(text, line, 1), line, set(regs), set(vars_)).parse()


_LABEL_RE = re.compile(rf"^\s*({_IDENT})\s*:(?!=)")


def _strip_comment(line: str) -> str:
    for marker in ("#", "//"):
        idx = line.find(marker)
        if idx >= 0:
            line = line[:idx]
    return line


@dataclass
class _RawLine:
    label: str | None
    body: str
    goto: tuple[str, ...] | None
    line: int
    col: int


def parse_program(text: str) -> Program:
    """Parse DSL source into a validated :class:`Program`."""
    domain = 2
    declared_vars: list[str] | None = None
    flags: list[str] = []
    seen_program = False
    procs: list[tuple[str, list[str], list[tuple[str, list[_RawLine], int]]]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        words = line.split()
        head = words[0]
        if head == "program":
            if seen_program:
                raise ParseError("duplicate program header", lineno)
            seen_program = True
            rest = words[1:]
            if rest:
                if len(rest) != 2 or rest[0] != "domain" or not rest[1].isdigit():
                    raise ParseError("expected 'program [domain N]'", lineno)
                domain = int(rest[1])
            continue
        if not seen_program:
            raise ParseError("source must start with 'program'", lineno)
        if head == "vars":
            declared_vars = (declared_vars or []) + _names(words[1:], lineno)
        elif head == "flags":
            flags += _names(words[1:], lineno)
        elif head == "process":
            if len(words) < 2:
                raise ParseError("expected process identifier", lineno)
            regs: list[str] = []
            if len(words) > 2:
                if words[2] != "regs":
                    raise ParseError("expected 'regs'", lineno, line.find(words[2]) + 1)
                regs = _names(words[3:], lineno)
            procs.append((words[1], regs, []))
        elif head in ("transaction", "txn"):
            if not procs:
                raise ParseError("transaction outside a process", lineno)
            if len(words) != 2:
                raise ParseError("expected 'transaction <tid>'", lineno)
            procs[-1][2].append((words[1], [], lineno))
        else:
            if not procs or not procs[-1][2]:
                raise ParseError("instruction outside a transaction", lineno)
            procs[-1][2][-1][1].append(_split_instruction(line, lineno))

    if not seen_program:
        raise ParseError("missing 'program' header", 1)

    if declared_vars is None:
        inferred: dict[str, None] = {}
        for _, regs, txns in procs:
            for _, lines, _ in txns:
                for rl in lines:
                    for name in _lhs_rhs_vars(rl.body, set(regs)):
                        inferred.setdefault(name, None)
        declared_vars = list(inferred) + [f for f in flags if f not in inferred]
    var_set = set(declared_vars)

    processes = []
    for pid, regs, txns in procs:
        transactions = []
        for tid, lines, tline in txns:
            transactions.append(_build_txn(tid, lines, set(regs), var_set, set(flags), tline))
        processes.append(Process(pid, tuple(regs), tuple(transactions)))
    prog = Program(tuple(processes), tuple(declared_vars), domain, frozenset(flags))
    diags = validate_program(prog)
    if diags:
        raise SemanticError(diags)
    return prog


def _names(words: list[str], lineno: int) -> list[str]:
    out = []
    for w in " ".join(words).replace(",", " ").split():
        if not re.fullmatch(_IDENT, w):
            raise ParseError(f"bad identifier {w!r}", lineno)
        out.append(w)
    return out


def _split_instruction(line: str, lineno: int) -> _RawLine:
    label = None
    col = len(line) - len(line.lstrip()) + 1
    m = _LABEL_RE.match(line)
    if m:
        label = m.group(1)
        line = line[m.end():]
        col += m.end()
    parts = [s.strip() for s in line.split(";")]
    parts = [s for s in parts if s]
    if not parts:
        raise ParseError("empty instruction", lineno, col)
    body, goto = parts[0], None
    if len(parts) > 2:
        raise ParseError("too many ';'-separated parts", lineno, col)
    if len(parts) == 2:
        g = parts[1].split(None, 1)
        if g[0] != "goto" or len(g) != 2:
            raise ParseError("expected 'goto L1, L2'", lineno, col)
        goto = tuple(_names([g[1]], lineno))
    elif body.startswith("goto ") or body == "goto":
        raise ParseError("goto without instruction", lineno, col)
    return _RawLine(label, body, goto, lineno, col)


_ASSIGN_RE = re.compile(rf"^({_IDENT})\s*:=\s*(.+)$")


def _lhs_rhs_vars(body: str, regs: set[str]) -> list[str]:
    m = _ASSIGN_RE.match(body.strip())
    if not m:
        return []
    lhs, rhs = m.group(1), m.group(2).strip()
    if lhs in regs:
        return [rhs] if re.fullmatch(_IDENT, rhs) and rhs not in regs else []
    return [lhs]


def _build_txn(tid, lines: list[_RawLine], regs, vars_, flags, tline) -> Transaction:
    if not lines:
        raise SemanticError([Diagnostic("EmptyTransaction", "transaction has no instructions", tid)])
    labels = []
    for k, rl in enumerate(lines):
        labels.append(rl.label if rl.label is not None else f"_{k}")
    instrs = []
    for k, rl in enumerate(lines):
        op = _parse_op(rl, regs, vars_, flags)
        goto = rl.goto
        if goto is None and not isinstance(op, Commit):
            nxt = next((labels[j] for j in range(k + 1, len(lines)) if labels[j] != labels[k]), None)
            if nxt is None:
                raise ParseError("last instruction must be commit or carry a goto", rl.line, rl.col)
            goto = (nxt,)
        instrs.append(Instruction(labels[k], op, goto or ()))
    return Transaction(tid, tuple(instrs))


def _parse_op(rl: _RawLine, regs, vars_, flags) -> Op:
    body = rl.body.strip()
    if body == "begin":
        return Begin()
    if body in ("commit", "end"):
        return Commit()
    if body.startswith("assume ") or body.startswith("assume("):
        return Assume(_expr(body[6:], rl, regs, flags))
    m = _ASSIGN_RE.match(body)
    if not m:
        raise ParseError(f"cannot parse instruction {body!r}", rl.line, rl.col)
    lhs, rhs = m.group(1), m.group(2).strip()
    if lhs in regs:
        if re.fullmatch(_IDENT, rhs) and rhs in vars_:
            return Read(lhs, rhs)
        return Assign(lhs, _expr(rhs, rl, regs, flags))
    return Write(lhs, _expr(rhs, rl, regs, flags))


def _expr(text, rl: _RawLine, regs, flags) -> Expr:
    return _ExprParser(_tokenize(text, rl.line, rl.col), rl.line, regs, flags).parse()


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, "+": 4, "-": 4}


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, (Reg, Var)):
        return e.name
    if isinstance(e, Nondet):
        return "*"
    if isinstance(e, Not):
        inner = format_expr(e.operand)
        return f"!{inner}" if isinstance(e.operand, (Const, Reg, Var, Nondet, Not)) else f"!({inner})"

    def side(sub: Expr) -> str:
        s = format_expr(sub)
        return f"({s})" if isinstance(sub, BinOp) else s

    return f"{side(e.left)} {e.op} {side(e.right)}"


def format_op(op: Op) -> str:
    if isinstance(op, Begin):
        return "begin"
    if isinstance(op, Commit):
        return "commit"
    if isinstance(op, Read):
        return f"{op.reg} := {op.var}"
    if isinstance(op, Write):
        return f"{op.var} := {format_expr(op.expr)}"
    if isinstance(op, Assign):
        return f"{op.reg} := {format_expr(op.expr)}"
    return f"assume {format_expr(op.cond)}"


def print_program(p: Program) -> str:
    """Deterministic pretty-printer; ``parse_program(print_program(p)) == p``."""
    out = [f"program domain {p.domain_size}"]
    if p.shared_vars:
        out.append("vars " + " ".join(p.shared_vars))
    if p.flags:
        out.append("flags " + " ".join(v for v in p.shared_vars if v in p.flags))
    for proc in p.processes:
        head = f"process {proc.pid}"
        if proc.registers:
            head += " regs " + " ".join(proc.registers)
        out.append(head)
        for txn in proc.transactions:
            out.append(f"  transaction {txn.tid}")
            for ins in txn.instructions:
                line = f"    {ins.label}: {format_op(ins.op)};"
                if ins.goto:
                    line += " goto " + ", ".join(ins.goto) + ";"
                out.append(line)
    return "\n".join(out) + "\n"


def load_program(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())
