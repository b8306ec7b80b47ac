"""Interval invariants, disjunction strengthening, and zero-crossing detection.

The invariant of a steady interval conjoins the negated goal, the conditions
of active processes, the negated conditions of inactive processes, and every
global constraint clause.  Before monitoring, each disjunction is replaced by
the conjunction of the disjuncts true at the interval start (falsifying one of
those is a necessary condition for the disjunction to fall), the result is
flattened to relational atoms, and atoms that mention only variables no active
process touches are dropped: they cannot change during the interval.

Crossing detection walks a fine grid (step = delta_h_factor * delta_z) and
reports the first grid point where a monitored atom goes false, together with
the last point where everything still held.  Checking every fine-grid point is
a strictly more conservative localization than checking only coarse-grid
happenings; the fine states must be computed anyway, so the extra checks are
nearly free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import engine
from .dynamics import Mode, method_code, rate_program, _raise_failure
from .engine import Program
from .engine.tape import REL_CODE
from .errors import InternalInconsistency, StrengtheningVacuous
from .model import Task
from .terms import (
    CLOCK_VAR,
    And,
    Arith,
    Atom,
    Formula,
    Not,
    Or,
    State,
    StateVar,
    Term,
    Truth,
    eval_formula,
    eval_term,
    term_vars,
)

ORIGIN_CONSTRAINT = "global-constraint"
ORIGIN_ACTIVE = "active-process-condition"
ORIGIN_INACTIVE = "inactive-process-condition-negation"
ORIGIN_GOAL = "goal-negation"

#: Safety origins: a crossing there truncates; a goal-negation crossing is a
#: candidate entry into the goal region.
SAFETY_ORIGINS = (ORIGIN_CONSTRAINT, ORIGIN_ACTIVE, ORIGIN_INACTIVE)

_FLIP = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}


@dataclass(frozen=True)
class MonitoredAtom:
    """A relational atom under watch, with its sign indicator term."""

    atom: Atom
    origin: str

    @property
    def indicator(self) -> Term:
        return Arith("-", (self.atom.lhs, self.atom.rhs))

    @property
    def rel_code(self) -> int:
        return REL_CODE[self.atom.rel]

    def __str__(self) -> str:
        return f"{self.atom} [{self.origin}]"


@dataclass(frozen=True)
class Invariant:
    atoms: tuple[MonitoredAtom, ...]

    def key(self) -> tuple:
        return tuple((m.atom, m.origin) for m in self.atoms)


@dataclass(frozen=True)
class CrossingReport:
    """Result of monitoring one interval.

    ``truncated_state`` is the state at the last grid point where every
    monitored atom held (it satisfies them all); ``crossed_state`` is the
    state at the first falsifying point, which for goal-negation crossings is
    the candidate entry into the goal region.
    """

    crossed: bool
    origin: str | None
    truncation_time: float
    truncated_state: State
    cross_time: float | None = None
    crossed_state: State | None = None
    atom: Atom | None = None
    margins: tuple[float, ...] = ()
    steps_taken: int = 0
    remainder_step: float | None = None


def indicator(atom: Atom) -> Term:
    """The sign-carrying term: lhs - rhs."""
    return Arith("-", (atom.lhs, atom.rhs))


def sign_of(atom: Atom, state: State) -> int:
    """-1, 0, or +1 for the indicator's value in ``state``."""
    v = eval_term(indicator(atom), state)
    if v < 0.0:
        return -1
    if v > 0.0:
        return 1
    return 0


def nnf(formula: Formula, negate: bool = False) -> Formula:
    """Negation normal form; numeric negated atoms become flipped atoms and
    numeric disequalities become strict-order disjunctions."""
    if isinstance(formula, Truth):
        return Truth(formula.value != negate)
    if isinstance(formula, Atom):
        if not negate:
            return formula
        if formula.rel == "=":
            lhs, rhs = formula.lhs, formula.rhs
            return Or((Atom(lhs, "<", rhs), Atom(lhs, ">", rhs)))
        return Atom(formula.lhs, _FLIP[formula.rel], formula.rhs)
    if isinstance(formula, Not):
        return nnf(formula.inner, not negate)
    if isinstance(formula, And):
        parts = tuple(nnf(p, negate) for p in formula.parts)
        return Or(parts) if negate else And(parts)
    if isinstance(formula, Or):
        parts = tuple(nnf(p, negate) for p in formula.parts)
        return And(parts) if negate else Or(parts)
    raise InternalInconsistency(f"cannot normalize {formula!r}")


def _numeric_atom(task: Task, atom: Atom) -> bool:
    return task.type_of_term(atom.lhs) == "num"


def _nnf_objects_safe(task: Task, formula: Formula, negate: bool) -> Formula:
    """Like nnf but leaves object-typed (in)equalities as (negated) atoms;
    they never enter monitoring, so the exact literal shape is irrelevant."""
    if isinstance(formula, Atom) and negate and not _numeric_atom(task, formula):
        return Not(formula)
    if isinstance(formula, Not):
        return _nnf_objects_safe(task, formula.inner, not negate)
    if isinstance(formula, (And, Or)):
        parts = tuple(_nnf_objects_safe(task, p, negate) for p in formula.parts)
        if isinstance(formula, And):
            return Or(parts) if negate else And(parts)
        return And(parts) if negate else Or(parts)
    return nnf(formula, negate)


def strengthen(formula: Formula, state: State) -> Formula:
    """Replace every disjunction by the conjunction of its true disjuncts.

    Raises StrengtheningVacuous when a disjunction (or literal) is not
    satisfied in ``state``: the interval's start does not satisfy the
    invariant, which for the planner is a caller bug and for the validator an
    invalid plan.
    """
    if isinstance(formula, Truth):
        if not formula.value:
            raise StrengtheningVacuous("invariant conjunct is constant false")
        return formula
    if isinstance(formula, (Atom, Not)):
        if not eval_formula(formula, state):
            raise StrengtheningVacuous(f"invariant literal {formula} false at interval start")
        return formula
    if isinstance(formula, And):
        kept = tuple(strengthen(p, state) for p in formula.parts)
        return And(tuple(p for p in kept if p != Truth(True)))
    if isinstance(formula, Or):
        true_parts = [p for p in formula.parts if eval_formula(p, state)]
        if not true_parts:
            raise StrengtheningVacuous(f"no true disjunct in {formula} at interval start")
        return And(tuple(strengthen(p, state) for p in true_parts))
    raise InternalInconsistency(f"cannot strengthen {formula!r}")


def _flatten_literals(formula: Formula, out: list[Formula]) -> None:
    if isinstance(formula, (Atom, Not)):
        out.append(formula)
    elif isinstance(formula, And):
        for p in formula.parts:
            _flatten_literals(p, out)
    elif isinstance(formula, Truth):
        pass
    else:
        raise InternalInconsistency(f"non-conjunctive strengthened form: {formula!r}")


def build_invariant(task: Task, mode: Mode, start_state: State) -> Invariant:
    """Build and strengthen the interval invariant for a mode at its start.

    Atom order matters for same-grid-point tie-breaking: safety conjuncts
    (constraints, process conditions) come before the negated goal, so a point
    that simultaneously leaves the legal region and enters the goal region
    counts as a violation, not an entry.
    """
    active = set(mode.active)
    conjuncts: list[tuple[Formula, str]] = []
    for clause in task.constraints:
        conjuncts.append((_nnf_objects_safe(task, clause, False), ORIGIN_CONSTRAINT))
    for p in task.processes:
        if p.name in active:
            conjuncts.append((_nnf_objects_safe(task, p.condition, False), ORIGIN_ACTIVE))
        else:
            conjuncts.append((_nnf_objects_safe(task, p.condition, True), ORIGIN_INACTIVE))
    conjuncts.append((_nnf_objects_safe(task, task.goal, True), ORIGIN_GOAL))

    affected = set(mode.affected)
    affected.add(CLOCK_VAR)  # waiting always moves the clock

    atoms: list[MonitoredAtom] = []
    seen: set[tuple[Atom, str]] = set()
    for formula, origin in conjuncts:
        strengthened = strengthen(formula, start_state)
        literals: list[Formula] = []
        _flatten_literals(strengthened, literals)
        for lit in literals:
            atom = lit.inner if isinstance(lit, Not) else lit
            assert isinstance(atom, Atom)
            vs = term_vars(atom.lhs) | term_vars(atom.rhs)
            if not (vs & affected):
                continue  # cannot change over the interval
            if not _numeric_atom(task, atom):
                raise InternalInconsistency(
                    f"object-typed atom {atom} over process-affected variables")
            if isinstance(lit, Not):
                raise InternalInconsistency(f"unnormalized literal {lit} in invariant")
            if atom.rel == "=":
                halves = (Atom(atom.lhs, "<=", atom.rhs), Atom(atom.lhs, ">=", atom.rhs))
            else:
                halves = (atom,)
            for h in halves:
                if (h, origin) not in seen:
                    seen.add((h, origin))
                    atoms.append(MonitoredAtom(h, origin))
    return Invariant(tuple(atoms))


def monitored_program(task: Task, mode: Mode, invariant: Invariant,
                      cache: dict | None = None) -> Program:
    """Compile rates plus atom indicators, with optional per-search caching."""
    key = (mode.key, invariant.key())
    if cache is not None and key in cache:
        return cache[key]
    prog = rate_program(task.layout, mode,
                        [(m.rel_code, m.indicator) for m in invariant.atoms])
    if cache is not None:
        cache[key] = prog
    return prog


def detect_crossing(task: Task, invariant: Invariant, start_state: State,
                    mode: Mode, duration: float, integrator: str,
                    delta_z: float | None = None,
                    delta_h: float | None = None,
                    program_cache: dict | None = None) -> CrossingReport:
    """Simulate on the fine grid and watch every monitored atom.

    Grid step defaults to delta_h_factor * delta_z of the task configuration;
    the validator passes its own finer values.
    """
    report, _ = _scan_interval(task, invariant, start_state, mode, duration,
                               integrator, delta_z, delta_h, program_cache, False)
    return report


def detect_crossing_traced(task: Task, invariant: Invariant, start_state: State,
                           mode: Mode, duration: float, integrator: str,
                           delta_z: float | None = None,
                           delta_h: float | None = None,
                           program_cache: dict | None = None):
    """Like detect_crossing but also returns the visited fine-grid rows as
    (time, vector) pairs, start point included."""
    return _scan_interval(task, invariant, start_state, mode, duration,
                          integrator, delta_z, delta_h, program_cache, True)


def _scan_interval(task, invariant, start_state, mode, duration, integrator,
                   delta_z, delta_h, program_cache, want_trace):
    if duration <= 0.0:
        raise InternalInconsistency("detect_crossing needs a positive duration")
    cfg = task.config
    dz = cfg.delta_z if delta_z is None else delta_z
    dh = cfg.delta_h_factor * dz if delta_h is None else delta_h
    prog = monitored_program(task, mode, invariant, program_cache)
    t0 = start_state.clock
    res = engine.run_scan(prog, method_code(integrator), start_state.to_vec(),
                          t0, duration, dh, cfg.fixpoint_epsilon,
                          cfg.max_fixpoint_iters, want_trace=want_trace)
    if res.status in (engine.ST_EVAL_ERROR, engine.ST_NO_CONVERGENCE):
        _raise_failure(res, "crossing scan")

    n_full, rem, use_rem = engine.grid_points(duration, dh)
    total = n_full + (1 if use_rem else 0)

    def point_time(i: int) -> float:
        return t0 + duration if i >= total else t0 + i * dh

    trace_rows = None
    if want_trace and res.trace is not None:
        trace_rows = [(t0, start_state.to_vec())]
        for i, row in enumerate(res.trace, start=1):
            trace_rows.append((point_time(i), row))

    margins = tuple(res.margins)
    if res.crossed:
        j = res.steps
        trunc_time = point_time(j - 1) if j > 0 else t0
        matom = invariant.atoms[res.bad_atom]
        report = CrossingReport(
            crossed=True,
            origin=matom.origin,
            truncation_time=trunc_time,
            truncated_state=start_state.with_vec(res.last_good, clock=trunc_time),
            cross_time=point_time(j),
            crossed_state=start_state.with_vec(res.final, clock=point_time(j)),
            atom=matom.atom,
            margins=margins,
            steps_taken=j,
            remainder_step=rem if (use_rem and j >= total) else None,
        )
        return report, trace_rows

    report = CrossingReport(
        crossed=False,
        origin=None,
        truncation_time=t0 + duration,
        truncated_state=start_state.with_vec(res.final, clock=t0 + duration),
        margins=margins,
        steps_taken=total,
        remainder_step=rem if use_rem else None,
    )
    return report, trace_rows
