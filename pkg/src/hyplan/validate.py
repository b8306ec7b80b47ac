"""Off-line high-precision plan validation.

A plan is re-executed happening by happening: action sequences apply at their
recorded times, and each waiting segment is re-simulated with the validator's
integrator (implicit Euler by default) on a fine grid (simulation step 0.001,
monitoring step a tenth of that), re-deriving the mode and the strengthened
invariant from the replayed state.  The plan is VALID when no unexpected
crossing occurs in any segment interior and the final state satisfies the
goal exactly.

Two tolerances absorb unavoidable floating-point disagreements between the
planner's trajectory and the more precise replay:

* ``goal_slack``: a goal-negation crossing is the expected way a plan ends.
  The planner's entry point lands up to its own monitoring step past the
  analytic crossing, so the precise replay finds the crossing up to that much
  before the recorded end.
* ``edge_slack``: a plan whose interval was truncated at a boundary leaves a
  state *on* that boundary, and the replayed trajectory may poke past it just
  before the recorded interval end.  Safety crossings within this distance of
  a segment's end clip the segment at the validator's own last-good point
  instead of failing the plan.  Genuine violations shorter than the slack and
  flush against an interval end are therefore not detectable.

Both default to ``max(1.5 * task delta_h, 10 * dz)``: the first term covers
the planner's grid quantization, the second the replay's own resolution and
trajectory divergence.  Both stay small against any sensible planning step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import compute_mode
from .errors import (
    EvaluationError,
    HyplanError,
    IntegrationFailure,
    NotApplicable,
    PlanFormatError,
    StrengtheningVacuous,
)
from .model import Task, apply_sequence
from .monitor import ORIGIN_GOAL, build_invariant, detect_crossing_traced
from .plans import PlanText, as_plan_text
from .terms import State, eval_formula

VALID = "VALID"
INVALID = "INVALID"

_TINY = 1e-12


@dataclass
class Violation:
    time: float
    atom: str
    origin: str

    def as_dict(self) -> dict:
        return {"time": self.time, "atom": self.atom, "origin": self.origin}


@dataclass
class IntervalCheck:
    index: int
    start: float
    end: float
    mode: tuple[str, ...]
    min_margins: dict[str, float]
    clipped: bool = False
    goal_entry_time: float | None = None

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "start": self.start,
            "end": self.end,
            "duration": self.end - self.start,
            "mode": list(self.mode),
            "min_margins": self.min_margins,
            "clipped": self.clipped,
            "goal_entry_time": self.goal_entry_time,
        }


@dataclass
class ValidationReport:
    verdict: str
    recorded_makespan: float
    measured_makespan: float | None = None
    intervals: list[IntervalCheck] = field(default_factory=list)
    violation: Violation | None = None
    cause: str | None = None
    final_state: State | None = None
    trace: list[tuple[float, list[float]]] | None = None

    @property
    def valid(self) -> bool:
        return self.verdict == VALID

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "recorded_makespan": self.recorded_makespan,
            "measured_makespan": self.measured_makespan,
            "intervals": [iv.as_dict() for iv in self.intervals],
            "first_violation": self.violation.as_dict() if self.violation else None,
            "cause": self.cause,
        }


def validate_plan(task: Task, plan, integrator: str = "ieuler", dz: float = 0.001,
                  goal_slack: float | None = None, edge_slack: float | None = None,
                  collect_trace: bool = False) -> ValidationReport:
    """Replay a plan under high-precision settings and judge it."""
    ptext = as_plan_text(plan)
    auto_slack = max(1.5 * task.config.delta_h, 10.0 * dz)
    if goal_slack is None:
        goal_slack = auto_slack
    if edge_slack is None:
        edge_slack = auto_slack
    report = ValidationReport(verdict=INVALID, recorded_makespan=ptext.makespan)
    if collect_trace:
        report.trace = []

    state = task.initial
    segments = _segments(ptext)
    program_cache: dict = {}

    for index, (start, end, actions, is_final) in enumerate(segments):
        duration = end - start
        if duration > _TINY:
            outcome = _replay_segment(task, state, index, start, end, is_final,
                                      integrator, dz, goal_slack, edge_slack,
                                      report, program_cache)
            if outcome is None:
                return report  # INVALID, already recorded
            state, entered_goal = outcome
            if entered_goal:
                report.verdict = VALID
                report.final_state = state
                return report
        if actions:
            try:
                state = _apply_happening(task, state, actions, end)
            except (NotApplicable, PlanFormatError) as e:
                report.violation = Violation(end, str(e), "action-application")
                report.cause = str(e)
                return report

    # No waiting tail entered the goal region: the plan must already be there.
    try:
        goal_holds = eval_formula(task.goal, state)
    except EvaluationError as e:
        report.cause = f"goal evaluation failed: {e}"
        return report
    if goal_holds:
        report.verdict = VALID
        report.measured_makespan = ptext.makespan
        report.final_state = state
        return report
    report.violation = Violation(ptext.makespan, "goal", "goal")
    report.cause = "final state does not satisfy the goal"
    return report


def _segments(ptext: PlanText):
    """Yield (start, end, actions-at-end, is_final) waiting segments.

    Actions of happening i apply at the *end* of the segment that leads to
    it; the final segment runs from the last happening to the makespan and
    carries no actions.
    """
    out = []
    cursor = 0.0
    for h in ptext.happenings:
        if h.time < -_TINY:
            raise PlanFormatError("negative happening time")
        out.append((cursor, h.time, h.actions, False))
        cursor = h.time
    out.append((cursor, ptext.makespan, (), True))
    return out


def _apply_happening(task: Task, state: State, names, at_time: float) -> State:
    by_name = {a.name: a for a in task.actions}
    seq = []
    for n in names:
        a = by_name.get(n)
        if a is None:
            raise PlanFormatError(f"plan names unknown action {n!r}")
        seq.append(a)
    return apply_sequence(task, state.replace(clock=at_time), seq)


def _replay_segment(task, state, index, start, end, is_final, integrator, dz,
                    goal_slack, edge_slack, report, program_cache):
    """Replay one waiting segment.  Returns (state-at-end, entered_goal) or
    None after recording a violation."""
    duration = end - start
    state = state.replace(clock=start)
    try:
        mode = compute_mode(task, state)
    except EvaluationError as e:
        report.cause = f"mode evaluation failed at t={start}: {e}"
        report.violation = Violation(start, str(e), "mode-evaluation")
        return None
    try:
        invariant = build_invariant(task, mode, state)
    except StrengtheningVacuous as e:
        report.cause = f"interval at t={start} starts outside its invariant: {e}"
        report.violation = Violation(start, str(e), "invariant-start")
        return None
    try:
        crossing, rows = detect_crossing_traced(
            task, invariant, state, mode, duration, integrator,
            delta_z=dz, program_cache=program_cache)
    except IntegrationFailure as e:
        report.cause = f"integration failure in interval {index}: {e}"
        report.violation = Violation(start, str(e), "integration")
        return None

    if report.trace is not None and rows:
        skip_first = bool(report.trace)
        report.trace.extend(rows[1:] if skip_first else rows)

    check = IntervalCheck(
        index=index, start=start, end=end, mode=mode.active,
        min_margins={str(m): margin
                     for m, margin in zip(invariant.atoms, crossing.margins)},
    )
    report.intervals.append(check)

    if not crossing.crossed:
        return crossing.truncated_state.replace(clock=end), False

    assert crossing.cross_time is not None
    tail = end - crossing.cross_time

    if crossing.origin == ORIGIN_GOAL:
        if not is_final:
            report.violation = Violation(crossing.cross_time, str(crossing.atom),
                                         ORIGIN_GOAL)
            report.cause = ("trajectory enters the goal region inside interval "
                            f"{index}; the interval is not steady")
            return None
        if tail > goal_slack:
            report.violation = Violation(crossing.cross_time, str(crossing.atom),
                                         ORIGIN_GOAL)
            report.cause = (f"goal region entered {tail:.6g}s before the recorded "
                            "plan end (overshoot)")
            return None
        entry = crossing.crossed_state
        assert entry is not None
        try:
            goal_ok = eval_formula(task.goal, entry)
        except EvaluationError as e:
            report.cause = f"goal evaluation failed at entry: {e}"
            return None
        if not goal_ok:
            report.violation = Violation(crossing.cross_time, str(crossing.atom),
                                         ORIGIN_GOAL)
            report.cause = "goal-entry state does not satisfy the goal exactly"
            return None
        check.goal_entry_time = crossing.cross_time
        report.measured_makespan = crossing.cross_time
        return entry, True

    # Safety crossing: clip boundary-touch at the segment end, else fail.
    if tail <= edge_slack and crossing.truncation_time > start:
        check.clipped = True
        return crossing.truncated_state.replace(clock=end), False
    report.violation = Violation(crossing.cross_time, str(crossing.atom),
                                 crossing.origin or "unknown")
    report.cause = (f"invariant atom {crossing.atom} falsified at "
                    f"t={crossing.cross_time:.6g} inside interval {index}")
    return None


def trace_plan(task: Task, plan, integrator: str, dz: float,
               goal_slack: float | None = None,
               edge_slack: float | None = None) -> ValidationReport:
    """Replay a plan collecting the fine-grid trajectory (for CSV/SVG dumps)."""
    return validate_plan(task, plan, integrator=integrator, dz=dz,
                         goal_slack=goal_slack, edge_slack=edge_slack,
                         collect_trace=True)
