"""Value-indexed partitions of the state space and the algebra over them.

A partition maps each value that a computation could yield to the block
of states on which it yields exactly that value: seeing the value tells
an outsider the state lies in the block. Blocks are int bitmasks over the
canonical state enumeration. Mid-computation a partition may cover only
part of the space (path restriction shrinks coverage on purpose); the
monitor asserts full coverage only where it needs it.
"""

from __future__ import annotations

from typing import Callable, Iterable

from .domain import Query, Schema, StateSpace, eval_query, state_text
from .operators import EvalError, Operators
from .values import TRUE, Value, VBool, sort_key


class PartitionError(RuntimeError):
    pass


class IndexedPartition:
    __slots__ = ("_blocks", "_coverage")

    def __init__(self, blocks: dict[Value, int]):
        clean: dict[Value, int] = {}
        coverage = 0
        for v in sorted(blocks, key=sort_key):
            mask = blocks[v]
            if mask == 0:
                continue
            if mask & coverage:
                raise PartitionError(f"blocks overlap at index {v}")
            coverage |= mask
            clean[v] = mask
        self._blocks = clean
        self._coverage = coverage

    def indices(self) -> list[Value]:
        return list(self._blocks)

    def block(self, v: Value) -> int:
        return self._blocks.get(v, 0)

    def items(self) -> list[tuple[Value, int]]:
        return list(self._blocks.items())

    @property
    def coverage(self) -> int:
        return self._coverage

    def __len__(self) -> int:
        return len(self._blocks)

    def __contains__(self, v: Value) -> bool:
        return v in self._blocks

    def __eq__(self, other) -> bool:
        return isinstance(other, IndexedPartition) and self._blocks == other._blocks

    def __repr__(self) -> str:
        return f"IndexedPartition({len(self._blocks)} blocks)"

    def dump(self, space: StateSpace) -> str:
        lines = []
        for v, mask in self._blocks.items():
            states = ", ".join(state_text(space.schema, s) for s in space.members(mask))
            lines.append(f"{v} -> [{states}]")
        return "\n".join(lines)


def single_block(space: StateSpace, index: Value, mask: int | None = None) -> IndexedPartition:
    return IndexedPartition({index: space.all_mask if mask is None else mask})


def from_grouping(space: StateSpace, fn: Callable) -> IndexedPartition:
    blocks: dict[Value, int] = {}
    for state in space:
        v = fn(state)
        blocks[v] = blocks.get(v, 0) | space.bit(state)
    return IndexedPartition(blocks)


def init_view(schema: Schema, query: Query, space: StateSpace) -> IndexedPartition:
    """Partition the space by query result: state s lands in the block of
    its own result, so result w identifies exactly the block of w."""
    return from_grouping(space, lambda s: eval_query(schema, query, s))


def lift_operator(ops: Operators, name: str, parts: Iterable[IndexedPartition]) -> IndexedPartition:
    """Apply an operator blockwise: for each combination of argument
    indices, the states on which all arguments take those values yield the
    operator result, so they join that result's block."""
    parts = list(parts)
    blocks: dict[Value, int] = {}

    def walk(i: int, idx_prefix: list[Value], mask: int):
        if mask == 0:
            return
        if i == len(parts):
            try:
                v = ops.apply(name, list(idx_prefix))
            except EvalError as e:
                tup = ", ".join(str(w) for w in idx_prefix)
                raise EvalError(f"{e} (lifting {name} at index tuple ({tup}))") from e
            blocks[v] = blocks.get(v, 0) | mask
            return
        for w, b in parts[i].items():
            idx_prefix.append(w)
            walk(i + 1, idx_prefix, mask & b)
            idx_prefix.pop()

    common = parts[0].coverage if parts else 0
    for p in parts[1:]:
        common &= p.coverage
    walk(0, [], ~0)
    result = IndexedPartition(blocks)
    # coverage(lift) must equal the intersection of argument coverages
    if result.coverage != common:
        raise PartitionError("lifted coverage mismatch")
    return result


def branch(cond: IndexedPartition, val: IndexedPartition) -> IndexedPartition:
    """Keep only the states on which the path condition holds."""
    for v in cond.indices():
        if not isinstance(v, VBool):
            raise PartitionError(f"path condition indexed by non-boolean {v}")
    taken = cond.block(TRUE)
    return IndexedPartition({v: mask & taken for v, mask in val.items()})


def join(p1: IndexedPartition, p2: IndexedPartition) -> IndexedPartition:
    """Merge the partitions of two complementary paths blockwise by index."""
    if p1.coverage & p2.coverage:
        raise PartitionError("joined paths overlap: path conditions were not complementary")
    blocks = dict(p1.items())
    for v, mask in p2.items():
        blocks[v] = blocks.get(v, 0) | mask
    return IndexedPartition(blocks)
