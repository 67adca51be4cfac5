"""Finite relational domain: schema, state space, queries and policies.

A schema fixes one key value plus an ordered list of attributes over
finite domains. An abstract state is one row over those attributes (the
key is implicit), and the state space is the cross product of the
domains, optionally narrowed by declared prior knowledge. Queries are
unnested selects (conjunctions of attribute = value terms, normalized to
a row-or-EMPTY result) and projections.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable

from .values import EMPTY, Value, VAtom, VTuple, sort_key


class SchemaError(ValueError):
    """Reference to an unknown attribute, or a malformed schema."""


@dataclass(frozen=True)
class Attribute:
    name: str
    domain: tuple[Value, ...]


@dataclass(frozen=True)
class Schema:
    key_attribute: str
    key_value: str
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")
        if self.key_attribute in names:
            raise SchemaError("key attribute also listed as a plain attribute")
        for a in self.attributes:
            if not a.domain:
                raise SchemaError(f"attribute {a.name}: empty domain")
            if len(set(a.domain)) != len(a.domain):
                raise SchemaError(f"attribute {a.name}: duplicate domain values")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"unknown attribute {name!r}")

    def position(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")


# One row over the non-key attributes, in schema order.
State = tuple


def state_text(schema: Schema, state: State) -> str:
    return "(" + ",".join([schema.key_value] + [str(v) for v in state]) + ")"


def row_value(schema: Schema, state: State) -> VTuple:
    """The full row as a value, key included; the result of a matching select."""
    return VTuple((VAtom(schema.key_attribute, schema.key_value), *state))


class StateSpace:
    """Canonically ordered finite state space; blocks are int bitmasks over it."""

    def __init__(self, schema: Schema, states: Iterable[State]):
        self.schema = schema
        self.states = tuple(states)
        if len(set(self.states)) != len(self.states):
            raise SchemaError("duplicate states in the space")
        self._pos = {s: i for i, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    @property
    def all_mask(self) -> int:
        return (1 << len(self.states)) - 1

    def bit(self, state: State) -> int:
        try:
            return 1 << self._pos[state]
        except KeyError:
            raise SchemaError(f"state outside the space: {state_text(self.schema, state)}")

    def mask_of(self, states: Iterable[State]) -> int:
        m = 0
        for s in states:
            m |= self.bit(s)
        return m

    def members(self, mask: int) -> list[State]:
        out = []
        while mask:
            low = mask & -mask
            out.append(self.states[low.bit_length() - 1])
            mask ^= low
        return out


def enumerate_states(schema: Schema) -> StateSpace:
    """Full cross product of the attribute domains, in declaration order."""
    cells = product(*[a.domain for a in schema.attributes])
    return StateSpace(schema, cells)


@dataclass(frozen=True)
class Query:
    kind: str  # "select" | "project"
    terms: tuple[tuple[str, Value], ...] = ()
    attrs: tuple[str, ...] = ()

    def text(self) -> str:
        if self.kind == "select":
            return "select " + " & ".join(f"{a}={v}" for a, v in self.terms)
        return "project {" + ",".join(self.attrs) + "}"


def make_select(schema: Schema, terms: Iterable[tuple[str, Value]]) -> Query:
    terms = tuple(terms)
    for attr, _ in terms:
        schema.attribute(attr)
    return Query("select", terms=terms)


def make_project(schema: Schema, attrs: Iterable[str]) -> Query:
    wanted = set(attrs)
    for attr in wanted:
        schema.attribute(attr)
    ordered = tuple(a for a in schema.names if a in wanted)
    if not ordered:
        raise SchemaError("projection over no attributes")
    return Query("project", attrs=ordered)


def eval_query(schema: Schema, q: Query, state: State) -> Value:
    """Evaluate a query on one row.

    A select yields the full row when every term holds and EMPTY otherwise;
    a projection yields the projected cell (single attribute) or the tuple
    of cells in schema order.
    """
    if q.kind == "select":
        for attr, value in q.terms:
            if state[schema.position(attr)] != value:
                return EMPTY
        return row_value(schema, state)
    if q.kind == "project":
        cells = tuple(state[schema.position(a)] for a in q.attrs)
        return cells[0] if len(cells) == 1 else VTuple(cells)
    raise SchemaError(f"unknown query kind {q.kind!r}")


@dataclass(frozen=True)
class Secret:
    label: str
    mask: int


@dataclass(frozen=True)
class Policy:
    secrets: tuple[Secret, ...]


class PolicyError(ValueError):
    """A secret that the initial knowledge could never satisfy compliantly."""


def validate_policy(policy: Policy, space: StateSpace) -> None:
    """Initial compliance: no secret may cover the whole state space."""
    for s in policy.secrets:
        if s.mask == space.all_mask:
            raise PolicyError(f"secret {s.label!r} covers every possible state")
        if s.mask & ~space.all_mask:
            raise PolicyError(f"secret {s.label!r} references states outside the space")


def sorted_values(values: Iterable[Value]) -> list[Value]:
    return sorted(values, key=sort_key)
