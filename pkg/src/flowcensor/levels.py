"""Two-level security typing of programs.

Anchors: data-request results are high, request parameters and the
reaction variable are low, program parameters are low. Variable levels
are flow-insensitive (one level per variable); expression level is the
join of its variables, high as soon as a data request occurs inside.

A program is accepted when (a) no plain assignment moves a high value
into a low variable, (b) no low assignment and no declassification sits
in the scope of a high guard, and (c) every request parameter expression
is low. Acceptance also yields the static table of protected-realm
fragments: maximal runs of consecutive high statements per branch body.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .lang import (Assign, BasicReq, Binary, Declassify, Expr, If, InDomain,
                   Program, Stmt, Unary, Var)


class Level(Enum):
    LOW = "low"
    HIGH = "high"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Violation:
    rule: str  # "a" | "b" | "c" | "decl" | "name"
    message: str
    line: int

    def __str__(self) -> str:
        return f"line {self.line}: rule ({self.rule}): {self.message}"


class TypeViolation(Exception):
    def __init__(self, violations: list[Violation]):
        super().__init__("\n".join(str(v) for v in violations))
        self.violations = violations


def expr_vars(e: Expr):
    match e:
        case Var(name):
            yield name
        case Unary(_, a) | InDomain(a, _):
            yield from expr_vars(a)
        case Binary(_, l, r):
            yield from expr_vars(l)
            yield from expr_vars(r)
        case BasicReq(_, terms, _):
            for _, t in terms:
                yield from expr_vars(t)


def contains_basicreq(e: Expr) -> bool:
    match e:
        case BasicReq():
            return True
        case Unary(_, a) | InDomain(a, _):
            return contains_basicreq(a)
        case Binary(_, l, r):
            return contains_basicreq(l) or contains_basicreq(r)
    return False


def expr_is_high(e: Expr, levels: dict[str, Level]) -> bool:
    if contains_basicreq(e):
        return True
    return any(levels.get(v) == Level.HIGH for v in expr_vars(e))


@dataclass(frozen=True)
class Fragment:
    index: int
    stmts: tuple[Stmt, ...]
    assigned: tuple[str, ...]

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(s.sid for s in self.stmts)


@dataclass
class TypedProgram:
    program: Program
    levels: dict[str, Level]
    stmt_levels: dict[int, Level]
    fragments: tuple[Fragment, ...] = ()

    def level(self, var: str) -> Level:
        return self.levels[var]

    @property
    def high_vars(self) -> tuple[str, ...]:
        return tuple(v for v in self.program.variables if self.levels[v] is Level.HIGH)

    def fragment_member(self, stmt: Stmt) -> bool:
        """True for statements executed in the protected realm: assignments
        to high variables, conditionals with high guards, and declassification
        into a high destination (an uncensored copy staying in the realm, so
        flow tracking must see it). Declassification into a low destination is
        dispatched by the mediator instead."""
        if isinstance(stmt, Assign):
            return self.levels[stmt.target] is Level.HIGH
        if isinstance(stmt, Declassify):
            return self.levels[stmt.dest] is Level.HIGH
        if isinstance(stmt, If):
            return expr_is_high(stmt.guard, self.levels)
        return False


def collect_targets(stmts: tuple[Stmt, ...]) -> list[str]:
    out: list[str] = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(s.target)
        elif isinstance(s, Declassify):
            out.append(s.dest)
        elif isinstance(s, If):
            out.extend(collect_targets(s.then))
            out.extend(collect_targets(s.orelse))
    return out


def infer(program: Program, declared: dict[str, Level] | None = None) -> TypedProgram:
    violations: list[Violation] = []
    levels: dict[str, Level] = {v: None for v in program.variables}

    for s in program.statements:
        if isinstance(s, (Assign, If)):
            expr = s.expr if isinstance(s, Assign) else s.guard
            for name in expr_vars(expr):
                if name not in levels:
                    violations.append(Violation("name", f"undeclared variable {name!r}", s.line))
    if violations:
        raise TypeViolation(violations)

    anchored: dict[str, Level] = {p: Level.LOW for p in program.params}
    anchored[program.reaction] = Level.LOW
    for s in program.statements:
        if isinstance(s, Assign) and contains_basicreq(s.expr):
            if anchored.get(s.target) is Level.LOW:
                violations.append(Violation(
                    "a", f"request result assigned to low variable {s.target!r}", s.line))
            else:
                anchored[s.target] = Level.HIGH
    for name, lvl in (declared or {}).items():
        if name not in levels:
            violations.append(Violation("name", f"declared level for unknown variable {name!r}", 0))
        elif anchored.get(name, lvl) is not lvl:
            violations.append(Violation(
                "a", f"declared level for {name!r} contradicts its anchored level", 0))
        else:
            anchored[name] = lvl
    levels.update(anchored)

    changed = True
    while changed:
        changed = False
        for s in program.statements:
            if not isinstance(s, Assign):
                continue
            if expr_is_high(s.expr, levels) and levels[s.target] is not Level.HIGH:
                if anchored.get(s.target) is Level.LOW:
                    if not any(v.line == s.line and v.rule == "a" for v in violations):
                        violations.append(Violation(
                            "a", f"high expression assigned to low variable {s.target!r}", s.line))
                else:
                    levels[s.target] = Level.HIGH
                    changed = True
    for v, lvl in levels.items():
        if lvl is None:
            levels[v] = Level.LOW

    def walk(stmts: tuple[Stmt, ...], under_high: bool):
        for s in stmts:
            if isinstance(s, Assign):
                if under_high and levels[s.target] is Level.LOW:
                    violations.append(Violation(
                        "b", f"assignment to low variable {s.target!r} under a high guard", s.line))
            elif isinstance(s, Declassify):
                if under_high:
                    violations.append(Violation(
                        "b", "declassification under a high guard", s.line))
            elif isinstance(s, If):
                inner = under_high or expr_is_high(s.guard, levels)
                walk(s.then, inner)
                walk(s.orelse, inner)

    walk(program.body, False)

    for s in program.statements:
        if isinstance(s, (Assign, If)):
            expr = s.expr if isinstance(s, Assign) else s.guard
            for e in _basicreqs(expr):
                for attr, term in e.terms:
                    if contains_basicreq(term) or expr_is_high(term, levels):
                        violations.append(Violation(
                            "c", f"request parameter for {attr} is not a low expression", s.line))

    if violations:
        raise TypeViolation(violations)

    stmt_levels: dict[int, Level] = {}
    for s in program.statements:
        if isinstance(s, Assign):
            stmt_levels[s.sid] = levels[s.target]
        elif isinstance(s, Declassify):
            stmt_levels[s.sid] = levels[s.dest]
        elif isinstance(s, If):
            stmt_levels[s.sid] = Level.HIGH if expr_is_high(s.guard, levels) else Level.LOW

    tp = TypedProgram(program, levels, stmt_levels)
    tp.fragments = _fragment_table(tp)
    return tp


def _basicreqs(e: Expr):
    match e:
        case BasicReq():
            yield e
        case Unary(_, a) | InDomain(a, _):
            yield from _basicreqs(a)
        case Binary(_, l, r):
            yield from _basicreqs(l)
            yield from _basicreqs(r)


def _fragment_table(tp: TypedProgram) -> tuple[Fragment, ...]:
    """Maximal consecutive protected-realm spans per statement stream: the
    top-level body and, recursively, each branch of a low-guard conditional."""
    frags: list[Fragment] = []

    def flush(span: list[Stmt]):
        if span:
            assigned = tuple(sorted(set(collect_targets(tuple(span)))))
            frags.append(Fragment(len(frags), tuple(span), assigned))
            span.clear()

    def stream(stmts: tuple[Stmt, ...]):
        span: list[Stmt] = []
        for s in stmts:
            if tp.fragment_member(s):
                span.append(s)
            else:
                flush(span)
                if isinstance(s, If):
                    stream(s.then)
                    stream(s.orelse)
        flush(span)

    stream(tp.program.body)
    return tuple(frags)


def fragments(tp: TypedProgram) -> tuple[Fragment, ...]:
    return tp.fragments
