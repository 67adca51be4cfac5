"""Rooted generalization hierarchy over the scenario's finite value range.

The hierarchy is a single tree: replacing a value by an ancestor loses
detail but never misleads. It is assembled from per-attribute atom trees,
an optional integer/interval tree, derived tuple trees for projection
shapes (componentwise, rightmost position first) and a synthetic top
value adopting everything else (booleans, EMPTY, full rows).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .operators import IntervalTable
from .values import Value, VAtom, VInt, VInterval, VNode, VTuple, sort_key

TOP = VNode("TOP")


class HierarchyError(ValueError):
    pass


@dataclass
class TreeSpec:
    """One declared or derived subtree, before assembly under the top."""

    root: Value
    children: dict[Value, tuple[Value, ...]] = field(default_factory=dict)

    def values(self) -> list[Value]:
        out: list[Value] = []

        def walk(v: Value):
            out.append(v)
            for c in self.children.get(v, ()):
                walk(c)

        walk(self.root)
        return out

    def is_leaf(self, v: Value) -> bool:
        return not self.children.get(v)


_INTERVAL_TEXT = re.compile(r"\[(-?\d+),(-?\d+)\]$")


def parse_node_value(raw, atom_attr: str | None = None) -> Value:
    """A node in a hierarchy declaration: int, "[lo,hi]", or a name."""
    if isinstance(raw, bool):
        raise HierarchyError(f"boolean {raw!r} cannot be a hierarchy node")
    if isinstance(raw, int):
        return VInt(raw)
    if isinstance(raw, str):
        m = _INTERVAL_TEXT.match(raw)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if lo >= hi:
                raise HierarchyError(f"degenerate interval node {raw!r}")
            return VInterval(lo, hi)
        if ":" in raw:
            raise HierarchyError(f"node name {raw!r} may not contain ':'")
        return VNode(raw) if atom_attr is None else VAtom(atom_attr, raw)
    raise HierarchyError(f"cannot read hierarchy node {raw!r}")


def parse_tree(spec, leaf_attr: str | None, leaf_names: set[str] | None = None) -> TreeSpec:
    """Nested {"node": name, "children": [...]} declaration; plain entries
    are leaves. For an attribute tree, leaves are that attribute's atoms
    and inner names become generalized nodes."""
    children: dict[Value, tuple[Value, ...]] = {}

    def walk(node) -> Value:
        if isinstance(node, dict):
            try:
                name = node["node"]
            except KeyError:
                raise HierarchyError("hierarchy node object needs a 'node' name")
            if leaf_names and isinstance(name, str) and name in leaf_names:
                raise HierarchyError(f"domain value {name!r} cannot be an inner node")
            value = parse_node_value(name, None)
            kids = tuple(walk(c) for c in node.get("children", ()))
            if value in children:
                raise HierarchyError(f"hierarchy node {value} declared twice")
            children[value] = kids
            return value
        leaf = parse_node_value(node, leaf_attr if leaf_names and str(node) in leaf_names else None)
        if isinstance(leaf, VNode) and leaf_attr is not None:
            raise HierarchyError(f"leaf {node!r} is not in dom({leaf_attr})")
        if leaf in children:
            raise HierarchyError(f"hierarchy node {leaf} declared twice")
        children[leaf] = ()
        return leaf

    root = walk(spec)
    return TreeSpec(root, children)


def flat_tree(root: Value, leaves: list[Value]) -> TreeSpec:
    return TreeSpec(root, {root: tuple(leaves), **{v: () for v in leaves}})


def tuple_tree(position_trees: list[TreeSpec]) -> TreeSpec:
    """Componentwise tuple tree. A node is a tuple whose positions read as
    leaves*, one free node, roots*; going up generalizes the rightmost
    position that is not yet at its root, so each node has one parent and
    the diagram stays a tree."""
    children: dict[Value, tuple[Value, ...]] = {}

    def expand(cells: tuple[Value, ...]) -> Value:
        node = VTuple(cells)
        for j, tree in enumerate(position_trees):
            if not tree.is_leaf(cells[j]):
                kids = tuple(
                    expand(cells[:j] + (c,) + cells[j + 1:])
                    for c in tree.children[cells[j]]
                )
                children[node] = kids
                return node
        children[node] = ()
        return node

    root = expand(tuple(t.root for t in position_trees))
    return TreeSpec(root, children)


class Hierarchy:
    def __init__(self, root: Value, children: dict[Value, tuple[Value, ...]],
                 interval_root: Value | None = None):
        self.root = root
        self.children = children
        self.parent: dict[Value, Value | None] = {root: None}
        order: list[Value] = []

        def walk(v: Value):
            order.append(v)
            for c in children.get(v, ()):
                if c in self.parent:
                    raise HierarchyError(f"value {c} appears twice in the hierarchy")
                self.parent[c] = v
                walk(c)

        walk(root)
        if len(order) != len(self.parent):
            raise HierarchyError("hierarchy is not a tree")
        self._order = order
        self.interval_root = interval_root
        self._subtrees: dict[Value, frozenset[Value]] = {}

    def __contains__(self, v: Value) -> bool:
        return v in self.parent

    def values(self) -> list[Value]:
        return list(self._order)

    def parent_of(self, v: Value) -> Value | None:
        try:
            return self.parent[v]
        except KeyError:
            raise HierarchyError(f"value {v} is not in the hierarchy")

    def subtree_values(self, v: Value) -> frozenset[Value]:
        if v not in self._subtrees:
            acc = {v}
            for c in self.children.get(v, ()):
                acc |= self.subtree_values(c)
            self._subtrees[v] = frozenset(acc)
        return self._subtrees[v]

    def ancestors_or_self(self, v: Value):
        cur: Value | None = v
        while cur is not None:
            yield cur
            cur = self.parent[cur]

    def is_ancestor_or_self(self, above: Value, below: Value) -> bool:
        return any(a == above for a in self.ancestors_or_self(below))

    def interval_table(self) -> IntervalTable | None:
        if self.interval_root is None:
            return None
        spans = set()
        for v in self.subtree_values(self.interval_root):
            if isinstance(v, VInt):
                spans.add((v.n, v.n))
            elif isinstance(v, VInterval):
                spans.add((v.lo, v.hi))
        root = self.interval_root
        root_span = (root.n, root.n) if isinstance(root, VInt) else (root.lo, root.hi)
        return IntervalTable(frozenset(spans), root_span)


def assemble(parts: list[TreeSpec], extras: list[Value],
             interval_root: Value | None = None) -> Hierarchy:
    """Hang the declared and derived subtrees plus every leftover value
    under a synthetic top."""
    children: dict[Value, tuple[Value, ...]] = {}
    top_kids: list[Value] = []
    for part in parts:
        for v, kids in part.children.items():
            if v in children and children[v] != kids:
                raise HierarchyError(f"value {v} appears in two subtrees")
            children[v] = kids
        top_kids.append(part.root)
    for v in sorted(set(extras), key=sort_key):
        if any(v in part.children for part in parts):
            raise HierarchyError(f"value {v} already placed by a subtree")
        children[v] = ()
        top_kids.append(v)
    children[TOP] = tuple(top_kids)
    return Hierarchy(TOP, children, interval_root)
