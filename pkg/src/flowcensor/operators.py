"""Concrete operator semantics.

Plain boolean and integer operators behave as usual. The overloaded
addition `(+)` treats an integer n as the degenerate interval [n,n] and
keeps every result inside a declared interval hierarchy: the exact sum if
it is a hierarchy node, otherwise the smallest hierarchy interval that
contains the exact sum, otherwise the hierarchy root.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import Schema
from .values import EMPTY, FALSE, TRUE, Value, VBool, VInt, VInterval


class EvalError(RuntimeError):
    """Operator applied outside its domain, or an unbound name."""


@dataclass(frozen=True)
class IntervalTable:
    """Interval nodes of the scenario hierarchy, as (lo, hi) spans."""

    spans: frozenset[tuple[int, int]]
    root: tuple[int, int]

    def smallest_cover(self, lo: int, hi: int) -> tuple[int, int] | None:
        best = None
        for z1, z2 in self.spans:
            if z1 <= lo and hi <= z2:
                if best is None or (z2 - z1, z1) < (best[1] - best[0], best[0]):
                    best = (z1, z2)
        return best


def _as_span(v: Value) -> tuple[int, int]:
    match v:
        case VInt(n):
            return (n, n)
        case VInterval(lo, hi):
            return (lo, hi)
    raise EvalError(f"(+) undefined for {v}")


def _span_value(span: tuple[int, int]) -> Value:
    lo, hi = span
    return VInt(lo) if lo == hi else VInterval(lo, hi)


_ARITY = {
    "not": 1,
    "and": 2,
    "or": 2,
    "isempty": 1,
    "tostring": 1,
    "eq": 2,
    "plus": 2,
    "minus": 2,
    "times": 2,
    "gplus": 2,
}


class Operators:
    """Operator table bound to a schema and an optional interval hierarchy."""

    def __init__(self, schema: Schema, intervals: IntervalTable | None = None):
        self.schema = schema
        self.intervals = intervals

    def apply(self, op: str, args: list[Value]) -> Value:
        if op.startswith("in_dom:"):
            if len(args) != 1:
                raise EvalError(f"{op} expects 1 argument, got {len(args)}")
            domain = self.schema.attribute(op.split(":", 1)[1]).domain
            return TRUE if args[0] in domain else FALSE
        arity = _ARITY.get(op)
        if arity is None:
            raise EvalError(f"unknown operator {op!r}")
        if len(args) != arity:
            raise EvalError(f"{op} expects {arity} argument(s), got {len(args)}")
        match op:
            case "not":
                return VBool(not self._bool(op, args[0]))
            case "and":
                return VBool(self._bool(op, args[0]) and self._bool(op, args[1]))
            case "or":
                return VBool(self._bool(op, args[0]) or self._bool(op, args[1]))
            case "isempty":
                return TRUE if args[0] == EMPTY else FALSE
            case "tostring":
                return args[0]
            case "eq":
                return VBool(args[0] == args[1])
            case "plus":
                return VInt(self._int(op, args[0]) + self._int(op, args[1]))
            case "minus":
                return VInt(self._int(op, args[0]) - self._int(op, args[1]))
            case "times":
                return VInt(self._int(op, args[0]) * self._int(op, args[1]))
            case "gplus":
                return self._gplus(args[0], args[1])
        raise EvalError(f"unknown operator {op!r}")

    def _bool(self, op: str, v: Value) -> bool:
        if isinstance(v, VBool):
            return v.flag
        raise EvalError(f"{op} undefined for {v}")

    def _int(self, op: str, v: Value) -> int:
        if isinstance(v, VInt):
            return v.n
        raise EvalError(f"{op} undefined for {v}")

    def _gplus(self, a: Value, b: Value) -> Value:
        if self.intervals is None:
            if isinstance(a, VInt) and isinstance(b, VInt):
                return VInt(a.n + b.n)
            raise EvalError("(+) on intervals requires a generalization hierarchy")
        (lo1, hi1), (lo2, hi2) = _as_span(a), _as_span(b)
        exact = (lo1 + lo2, hi1 + hi2)
        if exact in self.intervals.spans:
            return _span_value(exact)
        cover = self.intervals.smallest_cover(*exact)
        if cover is not None:
            return _span_value(cover)
        return _span_value(self.intervals.root)
