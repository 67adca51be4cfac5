"""Symbolic execution of fragment trees.

A depth-first traversal threads a per-path symbolic state (high variable
-> symbolic expression) and a path condition. Low-only expressions and
data requests become fresh symbols recorded in a definition map; high
variables resolve to their current symbolic expression. The per-variable
result folds every leaf as `path condition |> leaf expression`, joined
with `<+>` across leaves, so alternative paths stay visible to the flow
tracker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exectree import ExecutionTree, TreeNode
from .lang import BasicReq, Binary, Expr, InDomain, Unary, Var, expr_text
from .levels import Fragment, Level, TypedProgram, contains_basicreq, expr_is_high


@dataclass(frozen=True)
class SymExpr:
    pass


@dataclass(frozen=True)
class SSym(SymExpr):
    name: str


@dataclass(frozen=True)
class SHigh(SymExpr):
    var: str


@dataclass(frozen=True)
class SApply(SymExpr):
    op: str
    args: tuple[SymExpr, ...]


@dataclass(frozen=True)
class SBranch(SymExpr):
    cond: SymExpr
    val: SymExpr


@dataclass(frozen=True)
class SJoin(SymExpr):
    left: SymExpr
    right: SymExpr


def sym_text(e: SymExpr) -> str:
    match e:
        case SSym(name):
            return name
        case SHigh(var):
            return var
        case SApply("not", (a,)):
            inner = sym_text(a)
            if isinstance(a, (SBranch, SJoin)):
                return f"not ({inner})"
            return f"not {inner}"
        case SApply(op, (a,)) if op.startswith("in_dom:"):
            return f"{sym_text(a)} in dom({op.split(':', 1)[1]})"
        case SApply(op, (a,)):
            return f"{op}({sym_text(a)})"
        case SApply(op, (l, r)):
            sym = {"gplus": "(+)", "plus": "+", "minus": "-", "times": "*", "eq": "="}.get(op, op)
            return f"({sym_text(l)} {sym} {sym_text(r)})"
        case SBranch(cond, val):
            return f"{sym_text(cond)} |> {sym_text(val)}"
        case SJoin(left, right):
            return f"{sym_text(left)} <+> {sym_text(right)}"
    raise TypeError(f"not a symbolic expression: {e!r}")


@dataclass
class SymResult:
    fragment: Fragment
    exprs: dict[str, SymExpr]  # assigned high variables only
    symbol_defs: dict[str, Expr] = field(default_factory=dict)

    def final(self, var: str) -> SymExpr:
        """Untouched variables keep their symbolic identity."""
        return self.exprs.get(var, SHigh(var))


def trans_expr(expr: Expr, state: dict[str, SymExpr], defs: dict[str, Expr],
               levels: dict[str, Level], fresh) -> SymExpr:
    if isinstance(expr, Var) and levels.get(expr.name) is Level.HIGH:
        return state.get(expr.name, SHigh(expr.name))
    low_only = not contains_basicreq(expr) and not expr_is_high(expr, levels)
    if low_only or isinstance(expr, BasicReq):
        name = fresh()
        defs[name] = expr
        return SSym(name)
    match expr:
        case Unary(op, a):
            return SApply(op, (trans_expr(a, state, defs, levels, fresh),))
        case InDomain(a, attr):
            return SApply(f"in_dom:{attr}", (trans_expr(a, state, defs, levels, fresh),))
        case Binary(op, l, r):
            return SApply(op, (trans_expr(l, state, defs, levels, fresh),
                               trans_expr(r, state, defs, levels, fresh)))
    raise TypeError(f"cannot translate {expr!r}")


def sym_exec(tree: ExecutionTree, typed: TypedProgram) -> SymResult:
    """Traverse the tree once, then fold every leaf into the per-variable
    result expression in traversal order."""
    defs: dict[str, Expr] = {}
    counter = iter(range(10**9))

    def fresh() -> str:
        return f"s{next(counter)}"

    leaves: list[tuple[SymExpr | None, dict[str, SymExpr]]] = []

    def walk(node: TreeNode, pc: SymExpr | None, state: dict[str, SymExpr]):
        if node.assign is not None:
            translated = trans_expr(node.assign.expr, state, defs, typed.levels, fresh)
            state = {**state, node.assign.target: translated}
        if not node.edges:
            leaves.append((pc, state))
            return
        for cond, child in node.edges:
            if cond is None:
                walk(child, pc, state)
            else:
                sym_cond = trans_expr(cond, state, defs, typed.levels, fresh)
                walk(child, sym_cond if pc is None else SBranch(pc, sym_cond), state)

    walk(tree.root, None, {})

    assigned = set(tree.fragment.assigned)
    exprs: dict[str, SymExpr] = {}
    for var in sorted(assigned):
        terms = []
        for pc, state in leaves:
            leaf_expr = state.get(var, SHigh(var))
            terms.append(leaf_expr if pc is None else SBranch(pc, leaf_expr))
        folded = terms[0]
        for t in terms[1:]:
            folded = SJoin(folded, t)
        exprs[var] = folded
    return SymResult(tree.fragment, exprs, defs)


def format_result(res: SymResult) -> str:
    lines = []
    for var in sorted(res.exprs):
        lines.append(f"sigma {var} = {sym_text(res.exprs[var])}")
    for name, expr in res.symbol_defs.items():
        lines.append(f"iota {name} = {expr_text(expr)}")
    return "\n".join(lines)
