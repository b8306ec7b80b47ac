"""Planning-task data model: fluents, actions, processes, and the task tuple.

Tasks are ground and immutable after construction: parameterized schemas are
enumerated over the object pools at load time (see ``parser``), so everything
at search time is monomorphic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConstraintViolation, EvaluationError, ModelError, NotApplicable
from .terms import (
    CLOCK_VAR,
    And,
    Arith,
    Atom,
    Formula,
    Not,
    NumConst,
    ObjConst,
    Or,
    State,
    StateLayout,
    StateVar,
    Term,
    Trig,
    Truth,
    eval_formula,
    eval_term,
    formula_vars,
    term_vars,
)

NUMERIC_TYPES = ("real", "int")


@dataclass(frozen=True)
class FluentDecl:
    """A fluent symbol with argument types and a value type.

    ``value_type`` is "real", "int", or the name of a finite object type.
    """

    name: str
    arg_types: tuple[str, ...] = ()
    value_type: str = "real"


@dataclass(frozen=True)
class Action:
    """An instantaneous action: precondition plus simultaneous assignments."""

    name: str
    precondition: Formula
    effects: tuple[tuple[StateVar, Term], ...]

    def __post_init__(self):
        targets = [v for v, _ in self.effects]
        if len(targets) != len(set(targets)):
            raise ModelError(f"action {self.name!r} assigns one variable twice")


@dataclass(frozen=True)
class Process:
    """A process: condition plus rate-of-change rules for real variables."""

    name: str
    condition: Formula
    effects: tuple[tuple[StateVar, Term], ...]


@dataclass(frozen=True)
class SimConfig:
    """Simulation configuration: time bounds and integrator knobs."""

    delta_max: float
    delta_min: float = 0.0
    delta_z: float | None = None
    delta_h_factor: float = 0.1
    fixpoint_epsilon: float = 1e-6
    max_fixpoint_iters: int = 100

    def __post_init__(self):
        if self.delta_z is None:
            object.__setattr__(self, "delta_z", self.delta_max / 10.0)
        if not (0.0 <= self.delta_min <= self.delta_max):
            raise ModelError("need 0 <= delta_min <= delta_max")
        if not (0.0 < self.delta_z <= self.delta_max):
            raise ModelError("need 0 < delta_z <= delta_max")
        if not (0.0 < self.delta_h_factor <= 1.0):
            raise ModelError("need 0 < delta_h_factor <= 1")
        if self.fixpoint_epsilon <= 0.0 or self.max_fixpoint_iters < 1:
            raise ModelError("bad fixed-point settings")

    @property
    def delta_h(self) -> float:
        return self.delta_h_factor * self.delta_z


class Task:
    """The ground planning task: fluents, initial state, actions, processes,
    goal, CNF global constraints, and simulation configuration.

    Construction validates totality of the initial state, typing of effects,
    and that the initial state satisfies every constraint clause.
    """

    def __init__(
        self,
        fluents: Sequence[FluentDecl],
        objects: Mapping[str, Sequence[str]],
        init_values: Mapping[StateVar, object],
        actions: Sequence[Action],
        processes: Sequence[Process],
        goal: Formula,
        constraints: Sequence[Formula],
        config: SimConfig,
    ):
        self.fluents = tuple(fluents)
        self.objects = {t: tuple(names) for t, names in objects.items()}
        self.actions = tuple(actions)
        self.processes = tuple(processes)
        self.goal = goal
        self.constraints = tuple(constraints)
        self.config = config

        self._fluent_type: dict[str, str] = {}
        for decl in self.fluents:
            if decl.name in self._fluent_type:
                raise ModelError(f"fluent {decl.name!r} declared twice")
            self._fluent_type[decl.name] = decl.value_type

        self._object_type: dict[str, str] = {}
        for tname, names in self.objects.items():
            if tname in NUMERIC_TYPES:
                raise ModelError(f"object type name {tname!r} is reserved")
            for n in names:
                if n in self._object_type:
                    raise ModelError(f"object constant {n!r} declared twice")
                self._object_type[n] = tname

        self.layout = self._build_layout()
        self.initial = State.from_values(self.layout, init_values, clock=0.0)

        self._validate_operators()
        for i, clause in enumerate(self.constraints):
            if not eval_formula(clause, self.initial):
                raise ModelError(f"initial state violates constraint clause {i}: {clause}")

        names = [a.name for a in self.actions]
        if len(names) != len(set(names)):
            raise ModelError("duplicate action names")

        self.uses_clock = any(
            CLOCK_VAR in vs
            for vs in (
                [formula_vars(self.goal)]
                + [formula_vars(c) for c in self.constraints]
                + [formula_vars(p.condition) for p in self.processes]
                + [formula_vars(a.precondition) for a in self.actions]
                + [term_vars(r) for p in self.processes for _, r in p.effects]
                + [term_vars(rhs) for a in self.actions for _, rhs in a.effects]
            )
        )

    # -- construction helpers -------------------------------------------------

    def _build_layout(self) -> StateLayout:
        reals: list[StateVar] = []
        ints: list[StateVar] = []
        objs: list[StateVar] = []
        for decl in self.fluents:
            for args in self._ground_args(decl.arg_types):
                var = StateVar(decl.name, args)
                if decl.value_type == "real":
                    reals.append(var)
                elif decl.value_type == "int":
                    ints.append(var)
                elif decl.value_type in self.objects:
                    objs.append(var)
                else:
                    raise ModelError(
                        f"fluent {decl.name!r} has unknown value type {decl.value_type!r}")
        return StateLayout(tuple(reals), tuple(ints), tuple(objs))

    def _ground_args(self, arg_types: tuple[str, ...]) -> Iterable[tuple[str, ...]]:
        if not arg_types:
            return [()]
        pools = []
        for t in arg_types:
            if t not in self.objects:
                raise ModelError(f"unknown argument type {t!r}")
            pools.append(self.objects[t])
        out: list[tuple[str, ...]] = [()]
        for pool in pools:
            out = [prefix + (name,) for prefix in out for name in pool]
        return out

    def _validate_operators(self) -> None:
        for a in self.actions:
            self.check_formula(a.precondition, where=f"action {a.name!r} precondition")
            for var, rhs in a.effects:
                tv = self.type_of_var(var)
                tr = self.type_of_term(rhs, where=f"action {a.name!r} effect")
                if tv in NUMERIC_TYPES:
                    if tr != "num":
                        raise ModelError(f"action {a.name!r} assigns object value to {var}")
                elif tr != tv:
                    raise ModelError(
                        f"action {a.name!r} assigns {tr}-typed value to {tv}-typed {var}")
        for p in self.processes:
            self.check_formula(p.condition, where=f"process {p.name!r} condition")
            for var, rate in p.effects:
                if self.type_of_var(var) != "real":
                    raise ModelError(f"process {p.name!r} targets non-real variable {var}")
                if self.type_of_term(rate, where=f"process {p.name!r} rate") != "num":
                    raise ModelError(f"process {p.name!r} has object-typed rate for {var}")
        self.check_formula(self.goal, where="goal")
        for clause in self.constraints:
            self.check_formula(clause, where="constraint")

    # -- typing ---------------------------------------------------------------

    def type_of_var(self, var: StateVar) -> str:
        if var == CLOCK_VAR:
            return "real"
        return self._fluent_type[var.fluent]

    def type_of_term(self, term: Term, where: str = "term") -> str:
        """"num" for numeric terms, else the object type name."""
        if isinstance(term, NumConst):
            return "num"
        if isinstance(term, ObjConst):
            t = self._object_type.get(term.name)
            if t is None:
                raise ModelError(f"unknown object constant {term.name!r} in {where}")
            return t
        if isinstance(term, StateVar):
            if term == CLOCK_VAR:
                return "num"
            if term not in self.layout:
                raise ModelError(f"undeclared state variable {term} in {where}")
            t = self.type_of_var(term)
            return "num" if t in NUMERIC_TYPES else t
        if isinstance(term, (Arith, Trig)):
            operands = term.operands if isinstance(term, Arith) else (term.operand,)
            for o in operands:
                if self.type_of_term(o, where) != "num":
                    raise ModelError(f"object-typed operand in arithmetic in {where}")
            return "num"
        raise ModelError(f"cannot type {term!r}")

    def check_formula(self, formula: Formula, where: str = "formula") -> None:
        if isinstance(formula, Truth):
            return
        if isinstance(formula, Atom):
            tl = self.type_of_term(formula.lhs, where)
            tr = self.type_of_term(formula.rhs, where)
            if tl != tr:
                raise ModelError(f"atom compares {tl} with {tr} in {where}: {formula}")
            if tl != "num" and formula.rel != "=":
                raise ModelError(f"ordering over object type in {where}: {formula}")
            return
        if isinstance(formula, Not):
            self.check_formula(formula.inner, where)
            return
        if isinstance(formula, (And, Or)):
            for p in formula.parts:
                self.check_formula(p, where)
            return
        raise ModelError(f"cannot type-check {formula!r}")

    def coerce_assignment(self, var: StateVar, value):
        """Coerce an evaluated effect value to the target variable's type."""
        kind = self.layout.kind_of(var)
        if kind == "real":
            return float(value)
        if kind == "int":
            if isinstance(value, str):
                raise EvaluationError(f"object value assigned to integer variable {var}")
            if not (-2.0 ** 53 < value < 2.0 ** 53):
                raise EvaluationError(f"integer assignment overflow for {var}")
            return math.trunc(value)
        # object-typed: value must be a member of the variable's type pool
        t = self.type_of_var(var)
        if not isinstance(value, str) or self._object_type.get(value) != t:
            raise EvaluationError(f"value {value!r} not of type {t!r} for {var}")
        return value


def apply_action(task: Task, state: State, action: Action) -> State:
    """Apply one instantaneous action; all right-hand sides are evaluated in
    the old state (simultaneous assignment), the clock is unchanged, and every
    constraint clause must hold afterwards."""
    try:
        if not eval_formula(action.precondition, state):
            raise NotApplicable(f"precondition of {action.name!r} is false")
        updates = {
            var: task.coerce_assignment(var, eval_term(rhs, state))
            for var, rhs in action.effects
        }
    except EvaluationError as e:
        raise NotApplicable(f"evaluation error applying {action.name!r}: {e}", cause=e) from e
    successor = state.replace(updates)
    for i, clause in enumerate(task.constraints):
        try:
            ok = eval_formula(clause, successor)
        except EvaluationError as e:
            raise NotApplicable(
                f"evaluation error checking constraints after {action.name!r}: {e}",
                cause=e) from e
        if not ok:
            raise ConstraintViolation(
                f"action {action.name!r} violates constraint clause {i}: {clause}",
                clause_index=i)
    return successor


def apply_sequence(task: Task, state: State, actions: Sequence[Action]) -> State:
    """Fold ``apply_action`` left to right, checking each precondition in the
    running intermediate state."""
    current = state
    for i, a in enumerate(actions):
        try:
            current = apply_action(task, current, a)
        except (NotApplicable, ConstraintViolation) as e:
            raise NotApplicable(f"sequence fails at index {i} ({a.name!r}): {e}",
                                index=i, cause=e) from e
    return current
