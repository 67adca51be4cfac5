"""Flow tracking: interpret symbolic expressions as temporary-view updates.

A temporary view is a value-indexed partition per high variable. Symbols
defined as data requests are interpreted by partitioning the state space
by query result (with request parameters evaluated from low memory);
symbols defined as low expressions become a single full block indexed by
the concrete low value (a constant reveals nothing). Operators lift
blockwise, `|>` restricts to the states where the path condition holds
and `<+>` joins complementary paths. The interpretation never touches the
actual database row or high memory: its inputs do not include them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import Query, Schema, StateSpace
from .lang import BasicReq, Expr, build_query, eval_expr
from .operators import Operators
from .partition import (IndexedPartition, branch, init_view, join,
                        lift_operator, single_block)
from .symexec import SApply, SBranch, SHigh, SJoin, SSym, SymExpr, SymResult
from .values import Value

IDLE = "idle"
TRACKING = "tracking"


class TrackerError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrackerState:
    """Immutable snapshot: temporary views plus the tracking status."""

    views: dict[str, IndexedPartition]
    status: str = IDLE

    def view(self, var: str) -> IndexedPartition:
        try:
            return self.views[var]
        except KeyError:
            raise TrackerError(f"no temporary view for {var!r}")


def initial_tracker(high_vars, mem0: dict[str, Value], space: StateSpace) -> TrackerState:
    """Before any tracking, a variable's initial value holds on every state."""
    views = {x: single_block(space, mem0[x]) for x in high_vars}
    return TrackerState(views, IDLE)


def eval_symb(expr: SymExpr, defs: dict[str, Expr], views: dict[str, IndexedPartition],
              low_mem: dict[str, Value], schema: Schema, space: StateSpace,
              ops: Operators, view_cache: dict[Query, IndexedPartition] | None = None) -> IndexedPartition:
    def ev(e: SymExpr) -> IndexedPartition:
        match e:
            case SSym(name):
                try:
                    source = defs[name]
                except KeyError:
                    raise TrackerError(f"symbol {name!r} has no definition")
                if isinstance(source, BasicReq):
                    query = build_query(schema, source, low_mem, ops)
                    if view_cache is not None and query in view_cache:
                        return view_cache[query]
                    part = init_view(schema, query, space)
                    if view_cache is not None:
                        view_cache[query] = part
                    return part
                value = eval_expr(source, low_mem, None, schema, ops)
                return single_block(space, value)
            case SHigh(var):
                if var not in views:
                    raise TrackerError(f"no temporary view for {var!r}")
                return views[var]
            case SApply(op, args):
                return lift_operator(ops, op, [ev(a) for a in args])
            case SBranch(cond, val):
                return branch(ev(cond), ev(val))
            case SJoin(left, right):
                return join(ev(left), ev(right))
        raise TypeError(f"not a symbolic expression: {e!r}")

    return ev(expr)


def track_fragment(result: SymResult, state: TrackerState, low_mem: dict[str, Value],
                   schema: Schema, space: StateSpace, ops: Operators,
                   view_cache: dict | None = None) -> TrackerState:
    """Update the views of every variable the fragment assigns; views of
    untouched variables persist. Only callable while idle."""
    if state.status != IDLE:
        raise TrackerError("tracking already in progress")
    views = dict(state.views)
    for var in result.fragment.assigned:
        views[var] = eval_symb(result.final(var), result.symbol_defs, state.views,
                               low_mem, schema, space, ops, view_cache)
    return TrackerState(views, TRACKING)


def stop_tracking(state: TrackerState) -> TrackerState:
    if state.status != TRACKING:
        raise TrackerError("tracker is not tracking")
    return TrackerState(state.views, IDLE)
