"""The run-based mediator.

One run executes a program on a fixed database row under the monitor.
Per step, exactly one case applies, checked in order: (1) an idle
protected-realm statement ahead starts flow tracking over the maximal
consecutive protected prefix, plants a stop marker behind it and executes
the first command; (2) the stop marker ends tracking; (3) a
declassification from a high source into a low destination routes through
the censor; (4) any other declassification copies uncensored; (5) plain
interaction processing takes one language step. The actual row is a view
member at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

from .censor import CensorDecision, CensorState, censor_step
from .domain import State, StateSpace, state_text, validate_policy
from .exectree import to_tree
from .lang import (FTSTOP, Assign, Config, Declassify, FtStop, Stmt,
                   eval_expr, initial_memory, statement_count, step, stmt_text)
from .levels import Fragment, Level, TypedProgram, collect_targets
from .symexec import SymResult, sym_exec
from .tracker import (IDLE, TrackerState, initial_tracker, stop_tracking,
                      track_fragment)
from .values import Value


class MediatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class MediatorState:
    code: tuple[Stmt, ...]
    mem: dict[str, Value]
    db: State
    view: int
    tracker: TrackerState
    t: int

    @property
    def active(self) -> Stmt | None:
        return self.code[0] if self.code else None


@dataclass
class FragmentNote:
    key: tuple[int, ...]
    updated: tuple[str, ...]


@dataclass
class StepRecord:
    t: int
    case: int
    active: str
    stmt: Stmt
    event: tuple[str, Value] | None = None
    view_size: int = 0
    censor: CensorDecision | None = None
    fragment: FragmentNote | None = None


@dataclass
class RunTrace:
    db: State
    states: list[MediatorState]
    records: list[StepRecord]
    reaction: Value

    @property
    def final(self) -> MediatorState:
        return self.states[-1]


class Session:
    """Executable binding of one scenario program: the typed program, the
    operator table and memo caches for symbolic fragments, query views and
    whole run traces (runs are deterministic, so caching is sound)."""

    def __init__(self, scenario, program: str | None = None, censor_enabled: bool = True):
        self.scenario = scenario
        self.program_name = scenario.program_name(program)
        self.typed: TypedProgram = scenario.programs[self.program_name]
        self.censor_enabled = censor_enabled
        self.schema = scenario.schema
        self.space: StateSpace = scenario.space
        self.ops = scenario.ops
        self._sym_cache: dict[tuple[int, ...], SymResult] = {}
        self._view_cache: dict = {}
        self._trace_cache: dict[tuple[State, int | None], RunTrace] = {}
        self._scheme_cache: dict = {}

    # -- fragments ---------------------------------------------------------

    def _prefix_fragment(self, code: tuple[Stmt, ...]):
        """Maximal consecutive protected-realm prefix of the rest program."""
        n = 0
        while n < len(code) and not isinstance(code[n], FtStop) \
                and self.typed.fragment_member(code[n]):
            n += 1
        if n == 0:
            return None
        # maximality: the loop stops at open-realm work, a declassification,
        # the stop marker or the end of the program
        return code[:n]

    def _symexec_for(self, stmts: tuple[Stmt, ...]) -> SymResult:
        key = tuple(s.sid for s in stmts)
        if key not in self._sym_cache:
            assigned = tuple(sorted(set(collect_targets(stmts))))
            fragment = Fragment(len(self._sym_cache), stmts, assigned)
            self._sym_cache[key] = sym_exec(to_tree(fragment), self.typed)
        return self._sym_cache[key]

    # -- run mechanics -----------------------------------------------------

    def low_memory(self, mem: dict[str, Value]) -> dict[str, Value]:
        return {v: mem[v] for v in self.typed.program.variables
                if self.typed.level(v) is Level.LOW}

    def initialize(self, db: State, view: int | None = None) -> MediatorState:
        validate_policy(self.scenario.policy, self.space)
        program = self.typed.program
        mem = initial_memory(program, self.scenario.args)
        tracker = initial_tracker(self.typed.high_vars, mem, self.space)
        view_mask = self.space.all_mask if view is None else view
        if not (self.space.bit(db) & view_mask):
            raise MediatorError(
                f"database row {state_text(self.schema, db)} outside the initial view")
        return MediatorState(tuple(program.body), mem, db, view_mask, tracker, 0)

    def step(self, st: MediatorState) -> tuple[MediatorState, StepRecord]:
        active = st.active
        if active is None:
            raise MediatorError("step on a terminated run")
        record = StepRecord(st.t, 0, stmt_text(active), active)
        code, mem, view, tracker = st.code, st.mem, st.view, st.tracker

        fragment = None
        if tracker.status == IDLE and not isinstance(active, FtStop):
            fragment = self._prefix_fragment(code)

        if fragment is not None:
            record.case = 1
            result = self._symexec_for(fragment)
            try:
                tracker = track_fragment(result, tracker, self.low_memory(mem),
                                         self.schema, self.space, self.ops,
                                         self._view_cache)
            except Exception as e:
                raise MediatorError(f"t={st.t}: tracking failed: {e}") from e
            record.fragment = FragmentNote(result.fragment.key, result.fragment.assigned)
            code = fragment + (FTSTOP,) + code[len(fragment):]
            if isinstance(active, Declassify):
                # an in-realm copy heading the fragment: execute it directly
                mem = dict(mem)
                mem[active.dest] = mem[active.src]
                code = code[1:]
            else:
                nxt = step(Config(code, mem, st.db), self.schema, self.ops)
                code, mem = nxt.code, nxt.mem
        elif isinstance(active, FtStop):
            record.case = 2
            tracker = stop_tracking(tracker)
            code = code[1:]
        elif isinstance(active, Declassify):
            value = mem[active.src]
            src_high = self.typed.level(active.src) is Level.HIGH
            dest_low = self.typed.level(active.dest) is Level.LOW
            if src_high and dest_low:
                record.case = 3
                released = value
                if self.censor_enabled:
                    cs = CensorState(view, self.scenario.policy, self.scenario.hierarchy,
                                     self._scheme_cache)
                    try:
                        decision = censor_step(cs, tracker.view(active.src), value)
                    except Exception as e:
                        raise MediatorError(f"t={st.t}: censor failed: {e}") from e
                    record.censor = decision
                    released = decision.generalized
                    view = decision.view_after
            else:
                record.case = 4
                released = value
            if self.typed.level(active.dest) is Level.LOW and mem[active.dest] != released:
                record.event = (active.dest, released)
            mem = dict(mem)
            mem[active.dest] = released
            code = code[1:]
        else:
            record.case = 5
            if isinstance(active, Assign) and self.typed.level(active.target) is Level.LOW:
                new_value = eval_expr(active.expr, mem, st.db, self.schema, self.ops)
                if new_value != mem[active.target]:
                    record.event = (active.target, new_value)
            nxt = step(Config(code, mem, st.db), self.schema, self.ops)
            code, mem = nxt.code, nxt.mem

        if not (self.space.bit(st.db) & view):
            raise MediatorError(f"t={st.t}: the actual row left the view")
        record.view_size = view.bit_count()
        return MediatorState(code, mem, st.db, view, tracker, st.t + 1), record

    def run(self, db: State, view: int | None = None) -> RunTrace:
        key = (db, view)
        if key in self._trace_cache:
            return self._trace_cache[key]
        st = self.initialize(db, view)
        states = [st]
        records: list[StepRecord] = []
        budget = 2 * statement_count(self.typed.program.body) + 8
        while st.code:
            if len(records) > budget:
                raise MediatorError("step budget exceeded")
            st, record = self.step(st)
            states.append(st)
            records.append(record)
        trace = RunTrace(db, states, records, st.mem[self.typed.program.reaction])
        self._trace_cache[key] = trace
        return trace

    # -- reporting ---------------------------------------------------------

    def trace_text(self, trace: RunTrace, views: bool = False, censor: bool = False) -> str:
        lines = [f"run db={state_text(self.schema, trace.db)} "
                 f"program={self.program_name} censor={'on' if self.censor_enabled else 'off'}"]
        for r in trace.records:
            line = f"t={r.t:02d} case={r.case} view={r.view_size:3d} {r.active}"
            if r.event:
                line += f"  obs {r.event[0]}:={r.event[1]}"
            lines.append(line)
            if views and r.fragment:
                for var in r.fragment.updated:
                    part = trace.states[r.t + 1].tracker.view(var)
                    lines.append(f"    view {var}:")
                    for entry in part.dump(self.space).splitlines():
                        lines.append(f"      {entry}")
            if censor and r.censor:
                d = r.censor
                lines.append(f"    censor {d.sc.describe()}")
                lines.append(f"    censor value={d.value} released={d.generalized} "
                             f"view {d.view_before.bit_count()} -> {d.view_after.bit_count()}")
        lines.append(f"reaction {trace.reaction}")
        return "\n".join(lines) + "\n"


def run_mediated(scenario, db: State, program: str | None = None,
                 censor_enabled: bool = True, view: int | None = None) -> RunTrace:
    return Session(scenario, program, censor_enabled).run(db, view)
