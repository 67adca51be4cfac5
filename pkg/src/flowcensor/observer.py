"""Observer semantics and exhaustive verification.

The observer sees the initial memory, every change of a low variable and
termination; nothing else, and no clock. Its knowledge after a sequence
of observations is the set of database rows whose runs pass through the
identical sequence at some point; it is computed here by brute force over
the whole state space. On top of that sit the checkers: knowledge never
confined to a secret, knowledge constant outside declassification steps,
temporary views correct and identical across observation-equivalent runs,
the knowledge update at a censored declassification equal to the view
narrowing, and step-matching correspondences between runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import State, state_text
from .lang import Assign, Declassify, FtStop, If, Stmt
from .levels import Level, expr_is_high
from .mediator import RunTrace, Session

END = ("end",)


@dataclass
class ObsView:
    """Per-run observation data: the cut of the event sequence at each time
    plus the set of every sequence stage the run passes through."""

    events: tuple
    cuts: list[int]  # cuts[t] = number of events visible at time t

    def at(self, t: int) -> tuple:
        t = min(t, len(self.cuts) - 1)
        return self.events[: self.cuts[t]]

    @property
    def stages(self) -> set[tuple]:
        return {self.at(t) for t in range(len(self.cuts))}


def observe(trace: RunTrace) -> ObsView:
    """Observation sequence per mediator time: the initial memory snapshot,
    then one event per low-memory change, then one terminal marker."""
    init = ("init", tuple(sorted(trace.states[0].mem.items())))
    events = [init]
    cuts = [1]
    for record in trace.records:
        if record.event is not None:
            events.append(("set",) + record.event)
        cuts.append(len(events))
    events.append(END)
    cuts.append(len(events))
    return ObsView(tuple(events), cuts)


@dataclass
class PropertyResult:
    prop: str
    title: str
    passed: bool
    detail: str = ""
    counterexample: dict | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = f"{self.prop} {self.title}: {status}"
        if self.detail:
            out += f" ({self.detail})"
        if self.counterexample:
            ce = ", ".join(f"{k}={v}" for k, v in self.counterexample.items())
            out += f"\n    counterexample: {ce}"
        return out


@dataclass
class VerifyReport:
    scenario: str
    program: str
    results: list[PropertyResult] = field(default_factory=list)
    partial: bool = False

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results) and not self.partial

    def text(self) -> str:
        lines = [f"verify {self.scenario} program={self.program}"]
        lines += [r.line() for r in self.results]
        if self.partial:
            lines.append("WARNING: budget exceeded, report is partial")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "program": self.program,
            "partial": self.partial,
            "passed": self.passed,
            "results": [
                {"property": r.prop, "title": r.title, "passed": r.passed,
                 "detail": r.detail,
                 "counterexample": {k: str(v) for k, v in (r.counterexample or {}).items()} or None}
                for r in self.results
            ],
        }


class _Simulation:
    """All runs of one session plus the knowledge table over them."""

    def __init__(self, session: Session):
        self.session = session
        self.space = session.space
        self.dbs = list(session.space)
        self.traces = {db: session.run(db) for db in self.dbs}
        self.obs = {db: observe(self.traces[db]) for db in self.dbs}
        self.stages = {db: self.obs[db].stages for db in self.dbs}

    def knowledge_of(self, target: tuple) -> int:
        mask = 0
        for db in self.dbs:
            if target in self.stages[db]:
                mask |= self.space.bit(db)
        return mask

    def knowledge(self, db: State, t: int) -> int:
        return self.knowledge_of(self.obs[db].at(t))

    def times(self, db: State) -> int:
        """Observer times for the run: one per state plus the terminal mark."""
        return len(self.obs[db].cuts)


def knowledge(session: Session, target: tuple) -> int:
    """Brute-force knowledge: the rows whose runs reach the observation
    sequence `target` at any time."""
    return _Simulation(session).knowledge_of(target)


def active_level(session: Session, state) -> Level | None:
    """Realm of the command executing next. While the tracker is running,
    the whole bracketed fragment is protected: even an open-realm guard
    dispatch nested under a high guard is only reached because of high data,
    so it counts as protected activity."""
    stmt = state.active
    if stmt is None:
        return None
    if state.tracker.status == "tracking" or isinstance(stmt, FtStop):
        return Level.HIGH
    typed = session.typed
    if isinstance(stmt, Assign):
        return typed.level(stmt.target)
    if isinstance(stmt, Declassify):
        return typed.level(stmt.dest)
    if isinstance(stmt, If):
        return Level.HIGH if expr_is_high(stmt.guard, typed.levels) else Level.LOW
    return None


# ---------------------------------------------------------------------------
# Correspondences between two runs


@dataclass
class Correspondence:
    ok: bool
    pairs: tuple[tuple[int, int], ...] = ()
    failed_item: str | None = None
    witness: str = ""


def _lcont(session: Session, code: tuple[Stmt, ...]) -> tuple[Stmt, ...]:
    """The rest program from its first open-realm statement on. While a
    fragment is executing its stop marker delimits the protected region."""
    for i, s in enumerate(code):
        if isinstance(s, FtStop):
            return code[i + 1:]
    i = 0
    while i < len(code) and session.typed.fragment_member(code[i]):
        i += 1
    return code[i:]


def find_correspondence(session: Session, r: RunTrace, t: int,
                        rp: RunTrace, tp: int) -> Correspondence:
    """Construct a step-matching relation between two run prefixes and verify
    it mechanically: matched low memories, matched activity levels, equal
    code at matched open-realm steps, equal open-realm continuations at
    matched protected steps, monotone and complete both ways. Low times
    anchor pairwise in order; protected stretches pair diagonally with the
    shorter side clamped."""

    def level_at(trace: RunTrace, i: int) -> Level | None:
        return active_level(session, trace.states[i])

    if t >= len(r.states) or tp >= len(rp.states):
        return Correspondence(False, failed_item="range", witness="time beyond the trace")
    lows_r = [i for i in range(t + 1) if level_at(r, i) is Level.LOW]
    lows_rp = [j for j in range(tp + 1) if level_at(rp, j) is Level.LOW]
    if len(lows_r) != len(lows_rp):
        return Correspondence(False, failed_item="completeness",
                              witness="different numbers of open-realm steps")

    pairs: set[tuple[int, int]] = set()
    anchors = [(0, 0)] + list(zip(lows_r, lows_rp)) + [(t + 1, tp + 1)]
    seen: set[tuple[int, int]] = set()
    bounds = []
    for a in anchors:
        if a not in seen:
            seen.add(a)
            bounds.append(a)
    bounds.sort()
    for k in range(len(bounds)):
        i, j = bounds[k]
        if i <= t and j <= tp:
            pairs.add((i, j))
        if k + 1 == len(bounds):
            break
        ni, nj = bounds[k + 1]
        gap_r = list(range(i + 1, min(ni, t + 1)))
        gap_rp = list(range(j + 1, min(nj, tp + 1)))
        for m in range(max(len(gap_r), len(gap_rp))):
            gi = gap_r[m] if m < len(gap_r) else (gap_r[-1] if gap_r else i)
            gj = gap_rp[m] if m < len(gap_rp) else (gap_rp[-1] if gap_rp else j)
            if (gi, gj) != (i, j):
                pairs.add((gi, gj))

    # mechanical verification of every defining item
    def low_mem(trace: RunTrace, i: int):
        return tuple(sorted(session.low_memory(trace.states[i].mem).items()))

    for (i, j) in sorted(pairs):
        li, lj = level_at(r, i), level_at(rp, j)
        if low_mem(r, i) != low_mem(rp, j):
            return Correspondence(False, pairs=tuple(sorted(pairs)),
                                  failed_item="state agreement", witness=f"({i},{j})")
        if (li is Level.LOW) != (lj is Level.LOW):
            return Correspondence(False, pairs=tuple(sorted(pairs)),
                                  failed_item="level agreement", witness=f"({i},{j})")
        if li is Level.LOW and r.states[i].code != rp.states[j].code:
            return Correspondence(False, pairs=tuple(sorted(pairs)),
                                  failed_item="code agreement low", witness=f"({i},{j})")
        if li is not Level.LOW and _lcont(session, r.states[i].code) != _lcont(session, rp.states[j].code):
            return Correspondence(False, pairs=tuple(sorted(pairs)),
                                  failed_item="code agreement high", witness=f"({i},{j})")
    ordered = sorted(pairs)
    for (i, j) in ordered:
        for (i2, j2) in ordered:
            if i < i2 and j > j2:
                return Correspondence(False, pairs=tuple(ordered),
                                      failed_item="monotonicity", witness=f"({i},{j}) vs ({i2},{j2})")
    if {i for i, _ in pairs} != set(range(t + 1)) or {j for _, j in pairs} != set(range(tp + 1)):
        return Correspondence(False, pairs=tuple(ordered),
                              failed_item="completeness", witness="unmatched time")
    if (0, 0) not in pairs:
        return Correspondence(False, pairs=tuple(ordered),
                              failed_item="completeness", witness="(0,0) missing")
    return Correspondence(True, pairs=tuple(ordered))


# ---------------------------------------------------------------------------
# The property suite


PROPERTY_TITLES = {
    "p1": "knowledge never confined to a secret",
    "p2": "knowledge constant outside declassification",
    "p3": "temporary views correct at declassification",
    "p4": "temporary views agree across matched runs",
    "t1": "knowledge update equals the view narrowing",
    "t2": "confidentiality preserved end to end",
    "t3": "flow tracking correct and non-interfering",
    "corr": "correspondence coherence",
}

DEFAULT_PROPERTIES = ("p1", "p2", "p3", "p4", "t1", "corr")


def check_properties(scenario, program: str | None = None, censor_enabled: bool = True,
                     properties: tuple[str, ...] | None = None,
                     max_states: int = 1000, max_steps: int = 100) -> VerifyReport:
    session = Session(scenario, program, censor_enabled)
    report = VerifyReport(scenario.name, session.program_name)
    selected = list(properties or DEFAULT_PROPERTIES)
    # the end-to-end and tracking theorems reduce to the property checks
    expanded: list[str] = []
    for prop in selected:
        if prop == "t2":
            expanded.append("p1")
        elif prop == "t3":
            expanded += ["p3", "p4"]
        else:
            expanded.append(prop)
    expanded = list(dict.fromkeys(expanded))

    if len(session.space) > max_states:
        report.partial = True
        report.results.append(PropertyResult(
            "budget", "state space within budget", False,
            detail=f"{len(session.space)} states exceed the budget of {max_states}"))
        return report
    sim = _Simulation(session)
    for db in sim.dbs:
        if len(sim.traces[db].records) > max_steps:
            report.partial = True
            report.results.append(PropertyResult(
                "budget", "step count within budget", False,
                detail=f"run for {state_text(session.schema, db)} exceeds {max_steps} steps"))
            return report

    checks = {
        "p1": _check_p1, "p2": _check_p2, "p3": _check_p3,
        "p4": _check_p4, "t1": _check_t1, "corr": _check_corr,
    }
    for prop in expanded:
        if prop not in checks:
            raise ValueError(f"unknown property {prop!r}")
        report.results.append(checks[prop](session, sim))
    return report


def _check_p1(session: Session, sim: _Simulation) -> PropertyResult:
    steps = 0
    for db in sim.dbs:
        for t in range(sim.times(db)):
            k = sim.knowledge(db, t)
            steps += 1
            for secret in session.scenario.policy.secrets:
                if k & ~secret.mask == 0:
                    cause = min(t - 1, len(sim.traces[db].records) - 1)
                    record = sim.traces[db].records[cause]
                    return PropertyResult(
                        "p1", PROPERTY_TITLES["p1"], False,
                        counterexample={
                            "db": state_text(session.schema, db),
                            "secret": secret.label,
                            "t": t,
                            "caused_by_step": record.t,
                            "active": record.active,
                        })
    return PropertyResult("p1", PROPERTY_TITLES["p1"], True,
                          detail=f"{len(sim.dbs)} runs, {steps} knowledge states")


def _check_p2(session: Session, sim: _Simulation) -> PropertyResult:
    for db in sim.dbs:
        trace = sim.traces[db]
        for t, record in enumerate(trace.records):
            if isinstance(record.stmt, Declassify):
                continue
            if sim.knowledge(db, t + 1) != sim.knowledge(db, t):
                return PropertyResult(
                    "p2", PROPERTY_TITLES["p2"], False,
                    counterexample={"db": state_text(session.schema, db),
                                    "t": t, "active": record.active})
    return PropertyResult("p2", PROPERTY_TITLES["p2"], True,
                          detail=f"{len(sim.dbs)} runs")


def _declassification_steps(session: Session, sim: _Simulation):
    for db in sim.dbs:
        for t, record in enumerate(sim.traces[db].records):
            if record.case == 3:
                yield db, t, record


def _check_p3(session: Session, sim: _Simulation) -> PropertyResult:
    checked = 0
    for db, t, record in _declassification_steps(session, sim):
        checked += 1
        trace = sim.traces[db]
        stmt = record.stmt
        views = trace.states[t].tracker.views
        if stmt.src not in views:
            return PropertyResult("p3", PROPERTY_TITLES["p3"], False,
                                  counterexample={"db": state_text(session.schema, db),
                                                  "t": t, "missing": stmt.src})
        part = views[stmt.src]
        k = sim.knowledge(db, t)
        if k & ~part.coverage:
            return PropertyResult("p3", PROPERTY_TITLES["p3"], False,
                                  detail="blocks do not cover the knowledge set",
                                  counterexample={"db": state_text(session.schema, db), "t": t})
        actual = trace.states[t].mem[stmt.src]
        bit = session.space.bit(db)
        for v, block in part.items():
            if (v == actual) != bool(block & bit):
                return PropertyResult("p3", PROPERTY_TITLES["p3"], False,
                                      detail="actual value and actual block disagree",
                                      counterexample={"db": state_text(session.schema, db),
                                                      "t": t, "index": str(v)})
    return PropertyResult("p3", PROPERTY_TITLES["p3"], True,
                          detail=f"{checked} declassification steps")


def _check_p4(session: Session, sim: _Simulation) -> PropertyResult:
    points = list(_declassification_steps(session, sim))
    high_vars = set(session.typed.high_vars)
    pairs = 0
    for db, t, record in points:
        for db2, t2, record2 in points:
            if record.stmt is not record2.stmt:
                continue
            if sim.obs[db].at(t) != sim.obs[db2].at(t2):
                continue
            pairs += 1
            views, views2 = sim.traces[db].states[t].tracker.views, sim.traces[db2].states[t2].tracker.views
            if set(views) != high_vars or set(views2) != high_vars:
                return PropertyResult("p4", PROPERTY_TITLES["p4"], False,
                                      detail="view domain is not the high variables",
                                      counterexample={"db": state_text(session.schema, db), "t": t})
            for x in high_vars:
                if views[x] != views2[x]:
                    return PropertyResult(
                        "p4", PROPERTY_TITLES["p4"], False,
                        counterexample={"db": state_text(session.schema, db),
                                        "db'": state_text(session.schema, db2),
                                        "t": t, "t'": t2, "var": x})
    return PropertyResult("p4", PROPERTY_TITLES["p4"], True, detail=f"{pairs} matched pairs")


def _check_t1(session: Session, sim: _Simulation) -> PropertyResult:
    checked = 0
    for db, t, record in _declassification_steps(session, sim):
        if record.censor is None:
            continue
        checked += 1
        expected = sim.knowledge(db, t) & record.censor.inferred
        if sim.knowledge(db, t + 1) != expected:
            return PropertyResult("t1", PROPERTY_TITLES["t1"], False,
                                  counterexample={"db": state_text(session.schema, db), "t": t})
    return PropertyResult("t1", PROPERTY_TITLES["t1"], True,
                          detail=f"{checked} censored declassifications")


def _check_corr(session: Session, sim: _Simulation) -> PropertyResult:
    """Both directions at desk scale: equal observations at matched-ordinal
    open-realm steps admit a correspondence, and a verified correspondence
    implies equal observations."""
    found = 0
    for db in sim.dbs:
        lows = [i for i in range(len(sim.traces[db].states))
                if active_level(session, sim.traces[db].states[i]) is Level.LOW]
        for db2 in sim.dbs:
            lows2 = [i for i in range(len(sim.traces[db2].states))
                     if active_level(session, sim.traces[db2].states[i]) is Level.LOW]
            for ordinal in range(min(len(lows), len(lows2))):
                t, t2 = lows[ordinal], lows2[ordinal]
                same_obs = sim.obs[db].at(t) == sim.obs[db2].at(t2)
                corr = find_correspondence(session, sim.traces[db], t, sim.traces[db2], t2)
                if same_obs and not corr.ok:
                    return PropertyResult(
                        "corr", PROPERTY_TITLES["corr"], False,
                        detail=f"expected correspondence, {corr.failed_item} failed",
                        counterexample={"db": state_text(session.schema, db),
                                        "db'": state_text(session.schema, db2),
                                        "t": t, "t'": t2, "witness": corr.witness})
                if corr.ok and not same_obs:
                    return PropertyResult(
                        "corr", PROPERTY_TITLES["corr"], False,
                        detail="correspondence without equal observations",
                        counterexample={"db": state_text(session.schema, db),
                                        "db'": state_text(session.schema, db2),
                                        "t": t, "t'": t2})
                found += corr.ok
    return PropertyResult("corr", PROPERTY_TITLES["corr"], True,
                          detail=f"{found} correspondences checked")
