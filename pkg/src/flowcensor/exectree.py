"""Branching execution trees for protected-realm fragments.

Each root-to-leaf path is one control-flow path of the fragment: nodes
carry assignments, edges carry branch conditions. Sequencing is a chain
of unconditional edges; a conditional fans out into a guard edge and a
negated-guard edge, each continued with the remaining statements, so the
tree duplicates the continuation per path (loop-free code keeps this
finite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lang import Assign, Declassify, Expr, If, Stmt, Unary, Var, expr_text, stmt_text
from .levels import Fragment


@dataclass(eq=False)
class TreeNode:
    assign: Assign | None
    edges: list[tuple[Expr | None, "TreeNode"]] = field(default_factory=list)


@dataclass
class ExecutionTree:
    fragment: Fragment
    root: TreeNode

    def leaves(self) -> list[TreeNode]:
        out: list[TreeNode] = []

        def walk(n: TreeNode):
            if not n.edges:
                out.append(n)
            for _, child in n.edges:
                walk(child)

        walk(self.root)
        return out

    def paths(self) -> list[tuple[list[Expr], list[Assign]]]:
        """(conditions, assignments) per root-to-leaf path, in tree order."""
        out: list[tuple[list[Expr], list[Assign]]] = []

        def walk(n: TreeNode, conds: list[Expr], assigns: list[Assign]):
            if n.assign is not None:
                assigns = assigns + [n.assign]
            if not n.edges:
                out.append((conds, assigns))
            for cond, child in n.edges:
                walk(child, conds + [cond] if cond is not None else conds, assigns)

        walk(self.root, [], [])
        return out


def path_count(stmts: tuple[Stmt, ...]) -> int:
    """Number of control-flow paths through a loop-free statement sequence."""
    for i, s in enumerate(stmts):
        if isinstance(s, If):
            rest = stmts[i + 1:]
            return path_count(s.then + rest) + path_count(s.orelse + rest)
    return 1


def to_tree(fragment: Fragment) -> ExecutionTree:
    root = TreeNode(None)

    def extend(node: TreeNode, cond: Expr | None, stmts: tuple[Stmt, ...]):
        if not stmts:
            if cond is not None:
                node.edges.append((cond, TreeNode(None)))
            return
        head, rest = stmts[0], stmts[1:]
        if isinstance(head, Declassify):
            # an in-realm copy: tracked exactly like the assignment it is
            head = Assign(head.dest, Var(head.src), sid=head.sid, line=head.line)
        if isinstance(head, Assign):
            child = TreeNode(head)
            node.edges.append((cond, child))
            extend(child, None, rest)
        elif isinstance(head, If):
            base = node
            if cond is not None:
                base = TreeNode(None)
                node.edges.append((cond, base))
            extend(base, head.guard, head.then + rest)
            extend(base, Unary("not", head.guard), head.orelse + rest)
        else:
            raise ValueError(f"{stmt_text(head)} cannot appear in a fragment")

    extend(root, None, fragment.stmts)
    tree = ExecutionTree(fragment, root)
    if len(tree.leaves()) != path_count(fragment.stmts):
        raise AssertionError("execution tree leaf count diverged from the path count")
    return tree


def to_dot(tree: ExecutionTree) -> str:
    lines = ["digraph fragment {"]
    ids: dict[int, str] = {}

    def name(n: TreeNode) -> str:
        if id(n) not in ids:
            ids[id(n)] = f"n{len(ids)}"
            label = stmt_text(n.assign) if n.assign is not None else ("start" if n is tree.root else "skip")
            lines.append(f'  {ids[id(n)]} [label="{label}"];')
        return ids[id(n)]

    def walk(n: TreeNode):
        src = name(n)
        for cond, child in n.edges:
            dst = name(child)
            label = expr_text(cond) if cond is not None else "TRUE"
            lines.append(f'  {src} -> {dst} [label="{label}"];')
            walk(child)

    walk(tree.root)
    lines.append("}")
    return "\n".join(lines)
