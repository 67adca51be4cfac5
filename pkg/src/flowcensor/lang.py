"""The mediator mini-language.

Loop-free statements over a fixed variable set: assignments, two-armed
conditionals, data requests (`basicreq`) and the explicit declassification
assignment. Statements compare by identity (two occurrences of the same
text are different program points); expressions are structural values.

The one-step semantics executes plain assignments and conditionals only;
declassification and the runtime tracking marker are dispatched by the
execution driver. `run_concrete` is the uncensored reference interpreter
used as the brute-force oracle (declassification degrades to a copy).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .domain import Query, Schema, State, eval_query, make_project, make_select
from .operators import EvalError, Operators
from .values import EMPTY, FALSE, TRUE, Value, VBool, VInt


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Lit(Expr):
    value: Value


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # not | isempty | tostring
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # and | or | eq | plus | minus | times | gplus
    left: Expr
    right: Expr


@dataclass(frozen=True)
class InDomain(Expr):
    arg: Expr
    attr: str


@dataclass(frozen=True)
class BasicReq(Expr):
    kind: str  # select | project
    terms: tuple[tuple[str, Expr], ...] = ()
    attrs: tuple[str, ...] = ()


class Stmt:
    sid: int
    line: int


@dataclass(eq=False)
class Assign(Stmt):
    target: str
    expr: Expr
    sid: int = -1
    line: int = 0


@dataclass(eq=False)
class Declassify(Stmt):
    src: str
    dest: str
    sid: int = -1
    line: int = 0


@dataclass(eq=False)
class If(Stmt):
    guard: Expr
    then: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...]
    sid: int = -1
    line: int = 0


class FtStop(Stmt):
    """Runtime-only marker that ends a tracked fragment; never in source."""

    sid = -1
    line = 0

    def __repr__(self) -> str:
        return "ftstop"


FTSTOP = FtStop()


@dataclass
class Program:
    params: tuple[str, ...]
    body: tuple[Stmt, ...]
    reaction: str
    statements: tuple[Stmt, ...] = ()  # every statement, preorder
    variables: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.statements:
            stmts: list[Stmt] = []

            def collect(seq):
                for s in seq:
                    stmts.append(s)
                    if isinstance(s, If):
                        collect(s.then)
                        collect(s.orelse)

            collect(self.body)
            self.statements = tuple(stmts)
        if not self.variables:
            seen: dict[str, None] = dict.fromkeys(self.params)
            for s in self.statements:
                if isinstance(s, Assign):
                    seen.setdefault(s.target)
                elif isinstance(s, Declassify):
                    seen.setdefault(s.src)
                    seen.setdefault(s.dest)
            seen.setdefault(self.reaction)
            self.variables = tuple(seen)


def statement_count(stmts: Iterable[Stmt]) -> int:
    n = 0
    for s in stmts:
        n += 1
        if isinstance(s, If):
            n += statement_count(s.then) + statement_count(s.orelse)
    return n


def walk_exprs(program: Program):
    def sub(e: Expr):
        yield e
        match e:
            case Unary(_, a) | InDomain(a, _):
                yield from sub(a)
            case Binary(_, l, r):
                yield from sub(l)
                yield from sub(r)
            case BasicReq(_, terms, _):
                for _, t in terms:
                    yield from sub(t)

    for s in program.statements:
        if isinstance(s, Assign):
            yield from sub(s.expr)
        elif isinstance(s, If):
            yield from sub(s.guard)


# ---------------------------------------------------------------------------
# Lexer / parser


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


KEYWORDS = {
    "program", "if", "then", "else", "end", "declassify", "basicreq",
    "select", "project", "not", "and", "or", "isempty", "tostring",
    "in", "dom", "true", "false",
}
LOOP_KEYWORDS = {"while", "for", "loop", "repeat", "until"}

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<nl>\n)"
    r"|(?P<oplus>\(\+\)|⊕)|(?P<num>\d+)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<assign>:=)|(?P<sym>[(){},;=:*+-])"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    out: list[Token] = []
    line, start = 1, 0
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - start + 1
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind in ("ws", "comment"):
            pass
        elif kind == "ident":
            low = text.lower()
            if low in LOOP_KEYWORDS:
                raise ParseError(f"unsupported construct {text!r}: loops are not part of the language", line, col)
            if low in KEYWORDS:
                out.append(Token("kw:" + low, low, line, col))
            else:
                out.append(Token("ident", text, line, col))
        elif kind == "sym":
            out.append(Token(text, text, line, col))
        else:
            out.append(Token(kind, text, line, col))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.next_sid = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def take(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            want = kind.removeprefix("kw:")
            raise ParseError(f"expected {want!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.take()

    def fresh_sid(self) -> int:
        sid = self.next_sid
        self.next_sid += 1
        return sid

    # --- program structure

    def program(self) -> Program:
        self.expect("kw:program")
        self.expect("(")
        params: list[str] = []
        if self.peek().kind == "ident":
            params.append(self.take().text)
            while self.peek().kind == ",":
                self.take()
                params.append(self.expect("ident").text)
        self.expect(")")
        self.expect(":")
        reaction = self.expect("ident").text
        body = self.statements(("eof",))
        self.expect("eof")
        if len(set(params)) != len(params):
            t = self.peek()
            raise ParseError("duplicate parameter names", t.line, t.col)
        return Program(tuple(params), tuple(body), reaction)

    def statements(self, stop: tuple[str, ...]) -> list[Stmt]:
        out: list[Stmt] = []
        while self.peek().kind not in stop:
            out.append(self.statement())
            if self.peek().kind == ";":
                self.take()
            elif self.peek().kind not in stop:
                t = self.peek()
                raise ParseError(f"expected ';' between statements, found {t.text!r}", t.line, t.col)
        return out

    def statement(self) -> Stmt:
        t = self.peek()
        if t.kind == "kw:if":
            self.take()
            sid = self.fresh_sid()
            guard = self.expr()
            self.expect("kw:then")
            then = self.statements(("kw:else", "kw:end"))
            orelse: list[Stmt] = []
            if self.peek().kind == "kw:else":
                self.take()
                orelse = self.statements(("kw:end",))
            self.expect("kw:end")
            return If(guard, tuple(then), tuple(orelse), sid=sid, line=t.line)
        if t.kind == "kw:declassify":
            self.take()
            sid = self.fresh_sid()
            self.expect("(")
            src = self.expect("ident").text
            self.expect(",")
            dest = self.expect("ident").text
            self.expect(")")
            return Declassify(src, dest, sid=sid, line=t.line)
        if t.kind == "ident":
            name = self.take().text
            sid = self.fresh_sid()
            self.expect("assign")
            return Assign(name, self.expr(), sid=sid, line=t.line)
        raise ParseError(f"expected a statement, found {t.text or 'end of input'!r}", t.line, t.col)

    # --- expressions, loosest binding first

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.peek().kind == "kw:or":
            self.take()
            e = Binary("or", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.not_expr()
        while self.peek().kind == "kw:and":
            self.take()
            e = Binary("and", e, self.not_expr())
        return e

    def not_expr(self) -> Expr:
        if self.peek().kind == "kw:not":
            self.take()
            return Unary("not", self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        if self.peek().kind == "=":
            self.take()
            return Binary("eq", e, self.add_expr())
        if self.peek().kind == "kw:in":
            self.take()
            self.expect("kw:dom")
            self.expect("(")
            attr = self.expect("ident").text
            self.expect(")")
            return InDomain(e, attr)
        return e

    def add_expr(self) -> Expr:
        e = self.mul_expr()
        ops = {"oplus": "gplus", "+": "plus", "-": "minus"}
        while self.peek().kind in ops:
            op = ops[self.take().kind]
            e = Binary(op, e, self.mul_expr())
        return e

    def mul_expr(self) -> Expr:
        e = self.atom()
        while self.peek().kind == "*":
            self.take()
            e = Binary("times", e, self.atom())
        return e

    def atom(self) -> Expr:
        t = self.peek()
        match t.kind:
            case "kw:true":
                self.take()
                return Lit(TRUE)
            case "kw:false":
                self.take()
                return Lit(FALSE)
            case "num":
                self.take()
                return Lit(VInt(int(t.text)))
            case "kw:isempty" | "kw:tostring":
                self.take()
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Unary(t.kind.removeprefix("kw:"), e)
            case "kw:basicreq":
                return self.basicreq()
            case "(":
                self.take()
                e = self.expr()
                self.expect(")")
                return e
            case "ident":
                self.take()
                return Var(t.text)
        raise ParseError(f"expected an expression, found {t.text or 'end of input'!r}", t.line, t.col)

    def basicreq(self) -> Expr:
        self.expect("kw:basicreq")
        self.expect("(")
        kind_tok = self.peek()
        if kind_tok.kind == "kw:select":
            self.take()
            self.expect(",")
            terms = [self.select_term()]
            while self.peek().kind == "kw:and":
                self.take()
                terms.append(self.select_term())
            self.expect(")")
            return BasicReq("select", terms=tuple(terms))
        if kind_tok.kind == "kw:project":
            self.take()
            self.expect(",")
            self.expect("{")
            attrs = [self.expect("ident").text]
            while self.peek().kind == ",":
                self.take()
                attrs.append(self.expect("ident").text)
            self.expect("}")
            self.expect(")")
            return BasicReq("project", attrs=tuple(attrs))
        raise ParseError("expected 'select' or 'project'", kind_tok.line, kind_tok.col)

    def select_term(self) -> tuple[str, Expr]:
        attr = self.expect("ident").text
        self.expect("=")
        return (attr, self.add_expr())


def parse(source: str) -> Program:
    return _Parser(tokenize(source)).program()


# ---------------------------------------------------------------------------
# Pretty printer (canonical form; parse .. pretty .. parse is stable)

_PREC = {"or": 1, "and": 2, "not": 3, "eq": 4, "in": 4,
         "gplus": 5, "plus": 5, "minus": 5, "times": 6}
_OP_TEXT = {"gplus": "(+)", "plus": "+", "minus": "-", "times": "*", "eq": "="}


def expr_text(e: Expr, ctx: int = 0) -> str:
    match e:
        case Lit(v):
            out, prec = str(v).lower() if isinstance(v, VBool) else str(v), 7
        case Var(name):
            out, prec = name, 7
        case Unary("not", a):
            out, prec = f"not {expr_text(a, _PREC['not'])}", _PREC["not"]
        case Unary(op, a):
            out, prec = f"{op}({expr_text(a)})", 7
        case Binary(op, l, r):
            prec = _PREC[op]
            sym = _OP_TEXT.get(op, op)
            out = f"{expr_text(l, prec)} {sym} {expr_text(r, prec + 1)}"
        case InDomain(a, attr):
            prec = _PREC["in"]
            out = f"{expr_text(a, prec + 1)} in dom({attr})"
        case BasicReq("select", terms, _):
            body = " and ".join(f"{a} = {expr_text(t)}" for a, t in terms)
            out, prec = f"basicreq(select, {body})", 7
        case BasicReq("project", _, attrs):
            out, prec = "basicreq(project, {" + ", ".join(attrs) + "})", 7
        case _:
            raise TypeError(f"not an expression: {e!r}")
    return f"({out})" if prec < ctx else out


def stmt_text(s: Stmt) -> str:
    match s:
        case Assign(target, expr):
            return f"{target} := {expr_text(expr)}"
        case Declassify(src, dest):
            return f"declassify({src}, {dest})"
        case If(guard, _, _):
            return f"if {expr_text(guard)} then ..."
        case FtStop():
            return "ftstop"
    raise TypeError(f"not a statement: {s!r}")


def pretty(program: Program) -> str:
    lines = [f"program({', '.join(program.params)}): {program.reaction}"]

    def emit(stmts: tuple[Stmt, ...], indent: int):
        pad = "    " * indent
        for i, s in enumerate(stmts):
            sep = ";" if i + 1 < len(stmts) else ""
            if isinstance(s, If):
                lines.append(f"{pad}if {expr_text(s.guard)} then")
                emit(s.then, indent + 1)
                if s.orelse:
                    lines.append(f"{pad}else")
                    emit(s.orelse, indent + 1)
                lines.append(f"{pad}end{sep}")
            else:
                lines.append(f"{pad}{stmt_text(s)}{sep}")

    emit(program.body, 0)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Evaluation and one-step semantics


class LangError(RuntimeError):
    """Misuse of the one-step semantics by the execution driver."""


def build_query(schema: Schema, req: BasicReq, mem: dict[str, Value],
                ops: Operators, db: State | None = None) -> Query:
    if req.kind == "select":
        terms = [(attr, eval_expr(t, mem, db, schema, ops)) for attr, t in req.terms]
        return make_select(schema, terms)
    return make_project(schema, req.attrs)


def eval_expr(e: Expr, mem: dict[str, Value], db: State | None,
              schema: Schema, ops: Operators,
              query_log: list | None = None) -> Value:
    match e:
        case Lit(v):
            return v
        case Var(name):
            try:
                return mem[name]
            except KeyError:
                raise EvalError(f"unbound variable {name!r}")
        case Unary(op, a):
            return ops.apply(op, [eval_expr(a, mem, db, schema, ops, query_log)])
        case Binary(op, l, r):
            return ops.apply(op, [eval_expr(l, mem, db, schema, ops, query_log),
                                  eval_expr(r, mem, db, schema, ops, query_log)])
        case InDomain(a, attr):
            return ops.apply(f"in_dom:{attr}", [eval_expr(a, mem, db, schema, ops, query_log)])
        case BasicReq():
            if db is None:
                raise LangError("data request evaluated without a database row")
            q = build_query(schema, e, mem, ops)
            result = eval_query(schema, q, db)
            if query_log is not None:
                query_log.append((q, result))
            return result
    raise TypeError(f"not an expression: {e!r}")


@dataclass
class Config:
    code: tuple[Stmt, ...]
    mem: dict[str, Value]
    db: State

    @property
    def active(self) -> Stmt | None:
        return self.code[0] if self.code else None


def initial_memory(program: Program, args: tuple[Value, ...]) -> dict[str, Value]:
    if len(args) != len(program.params):
        raise LangError(f"expected {len(program.params)} argument(s), got {len(args)}")
    mem = {v: EMPTY for v in program.variables}
    mem.update(dict(zip(program.params, args)))
    return mem


def step(cfg: Config, schema: Schema, ops: Operators,
         query_log: list | None = None) -> Config:
    """Execute exactly the active command (assignment or conditional)."""
    active = cfg.active
    if active is None:
        raise LangError("step on an empty program")
    rest = cfg.code[1:]
    if isinstance(active, Assign):
        value = eval_expr(active.expr, cfg.mem, cfg.db, schema, ops, query_log)
        mem = dict(cfg.mem)
        mem[active.target] = value
        return Config(rest, mem, cfg.db)
    if isinstance(active, If):
        guard = eval_expr(active.guard, cfg.mem, cfg.db, schema, ops, query_log)
        if not isinstance(guard, VBool):
            raise EvalError(f"guard evaluated to non-boolean {guard}")
        branch = active.then if guard.flag else active.orelse
        return Config(branch + rest, cfg.mem, cfg.db)
    raise LangError(f"{stmt_text(active)} must be handled by the execution driver")


@dataclass
class ConcreteRun:
    mem: dict[str, Value]
    reaction: Value
    configs: list[Config] = field(default_factory=list)


def run_concrete(program: Program, args: tuple[Value, ...], schema: Schema,
                 ops: Operators, db: State, snapshots: bool = False,
                 query_log: list | None = None,
                 on_declassify: Callable[[str, Value], Value] | None = None) -> ConcreteRun:
    """Uncensored reference run: declassification copies the source value
    (or applies `on_declassify`). Deterministic in (program, args, db)."""
    cfg = Config(tuple(program.body), initial_memory(program, args), db)
    budget = 2 * statement_count(program.body) + 8
    trail = [cfg] if snapshots else []
    for _ in range(budget):
        if not cfg.code:
            return ConcreteRun(cfg.mem, cfg.mem[program.reaction], trail)
        active = cfg.active
        if isinstance(active, Declassify):
            value = cfg.mem[active.src]
            if on_declassify is not None:
                value = on_declassify(active.src, value)
            mem = dict(cfg.mem)
            mem[active.dest] = value
            cfg = Config(cfg.code[1:], mem, cfg.db)
        else:
            cfg = step(cfg, schema, ops, query_log)
        if snapshots:
            trail.append(cfg)
    raise LangError("step budget exceeded: non-terminating program?")
