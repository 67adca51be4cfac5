"""Runtime values: a small closed union shared by the interpreter, the
partition algebra and the censor.

Atoms carry the attribute they belong to, so equal names in different
columns can never collide. EMPTY is the distinguished result of a select
that matched nothing; VNode is a named generalization-hierarchy node that
belongs to no attribute domain.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Value:
    pass


@dataclass(frozen=True)
class VBool(Value):
    flag: bool

    def __str__(self) -> str:
        return "TRUE" if self.flag else "FALSE"


@dataclass(frozen=True)
class VInt(Value):
    n: int

    def __str__(self) -> str:
        return str(self.n)


@dataclass(frozen=True)
class VAtom(Value):
    attr: str
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class VInterval(Value):
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo},{self.hi}]")

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]"


@dataclass(frozen=True)
class VTuple(Value):
    items: tuple[Value, ...]

    def __str__(self) -> str:
        return "(" + ",".join(str(i) for i in self.items) + ")"


@dataclass(frozen=True)
class VNode(Value):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class VEmpty(Value):
    def __str__(self) -> str:
        return "EMPTY"


EMPTY = VEmpty()
TRUE = VBool(True)
FALSE = VBool(False)


def sort_key(v: Value):
    """Total order over values; used everywhere output must be stable."""
    match v:
        case VBool(flag):
            return (0, int(flag))
        case VInt(n):
            return (1, n)
        case VInterval(lo, hi):
            return (2, lo, hi)
        case VAtom(attr, name):
            return (3, attr, name)
        case VNode(name):
            return (4, name)
        case VEmpty():
            return (5,)
        case VTuple(items):
            return (6,) + tuple(sort_key(i) for i in items)
    raise TypeError(f"not a value: {v!r}")
