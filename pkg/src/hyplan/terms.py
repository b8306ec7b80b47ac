"""Ground expression trees, formulas, and states.

Terms are built from numeric constants, object constants, state-variable
references, arithmetic, and trigonometric applications; there are no variable
symbols.  Formulas are relational atoms closed under negation, conjunction and
disjunction.  Both are immutable and hashable, so they can key caches.

Evaluation is exact 64-bit floating point with no epsilon anywhere: tolerance
handling belongs to the zero-crossing monitor, not the evaluator.  Any
division by zero, even root of a negative, power of a negative base with a
non-integer exponent, or non-finite intermediate result raises
``EvaluationError``, which callers treat as a dead end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

from .errors import EvaluationError, ModelError

ARITH_OPS = ("+", "-", "*", "/", "pow", "nthroot")
TRIG_OPS = ("sin", "cos", "tan")
REL_OPS = ("=", "<", ">", "<=", ">=")

#: Name of the implicit clock variable; reading it yields the state's clock.
CLOCK_FLUENT = "t"


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumConst:
    value: float

    def __str__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class ObjConst:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class StateVar:
    """A ground state variable: a fluent applied to fixed constants."""

    fluent: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        if self.args:
            return f"{self.fluent}({', '.join(self.args)})"
        return self.fluent


CLOCK_VAR = StateVar(CLOCK_FLUENT)


@dataclass(frozen=True)
class Arith:
    op: str
    operands: "tuple[Term, ...]"

    def __post_init__(self):
        if self.op not in ARITH_OPS:
            raise ModelError(f"unknown arithmetic operator {self.op!r}")
        n = len(self.operands)
        if self.op in ("pow", "nthroot"):
            if n != 2:
                raise ModelError(f"{self.op} takes exactly 2 operands, got {n}")
        elif self.op == "/":
            if n < 2:
                raise ModelError(f"/ takes at least 2 operands, got {n}")
        elif n < 1:
            raise ModelError(f"{self.op} takes at least 1 operand")

    def __str__(self) -> str:
        return f"({self.op} {' '.join(str(o) for o in self.operands)})"


@dataclass(frozen=True)
class Trig:
    op: str
    operand: "Term"

    def __post_init__(self):
        if self.op not in TRIG_OPS:
            raise ModelError(f"unknown trig operator {self.op!r}")

    def __str__(self) -> str:
        return f"({self.op} {self.operand})"


Term = Union[NumConst, ObjConst, StateVar, Arith, Trig]


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    lhs: Term
    rel: str
    rhs: Term

    def __post_init__(self):
        if self.rel not in REL_OPS:
            raise ModelError(f"unknown relational operator {self.rel!r}")

    def __str__(self) -> str:
        return f"({self.rel} {self.lhs} {self.rhs})"


@dataclass(frozen=True)
class Not:
    inner: "Formula"

    def __str__(self) -> str:
        return f"(not {self.inner})"


@dataclass(frozen=True)
class And:
    parts: "tuple[Formula, ...]"

    def __str__(self) -> str:
        return f"(and {' '.join(str(p) for p in self.parts)})"


@dataclass(frozen=True)
class Or:
    parts: "tuple[Formula, ...]"

    def __str__(self) -> str:
        return f"(or {' '.join(str(p) for p in self.parts)})"


@dataclass(frozen=True)
class Truth:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


TRUE = Truth(True)
FALSE = Truth(False)

Formula = Union[Atom, Not, And, Or, Truth]


def term_vars(term: Term) -> frozenset[StateVar]:
    """All state variables referenced by a term."""
    out: set[StateVar] = set()
    _collect_term_vars(term, out)
    return frozenset(out)


def _collect_term_vars(term: Term, out: set[StateVar]) -> None:
    if isinstance(term, StateVar):
        out.add(term)
    elif isinstance(term, Arith):
        for o in term.operands:
            _collect_term_vars(o, out)
    elif isinstance(term, Trig):
        _collect_term_vars(term.operand, out)


def formula_vars(formula: Formula) -> frozenset[StateVar]:
    out: set[StateVar] = set()
    for atom in iter_atoms(formula):
        _collect_term_vars(atom.lhs, out)
        _collect_term_vars(atom.rhs, out)
    return frozenset(out)


def iter_atoms(formula: Formula) -> Iterator[Atom]:
    if isinstance(formula, Atom):
        yield formula
    elif isinstance(formula, Not):
        yield from iter_atoms(formula.inner)
    elif isinstance(formula, (And, Or)):
        for p in formula.parts:
            yield from iter_atoms(p)


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

class StateLayout:
    """Slot assignment for the ground state variables of a task.

    Real-valued variables occupy slots 1..R of the kernel vector (slot 0 is
    the clock), integer-valued variables follow, and object-valued variables
    never enter the vector.
    """

    __slots__ = ("real_vars", "int_vars", "obj_vars", "_index")

    def __init__(
        self,
        real_vars: tuple[StateVar, ...],
        int_vars: tuple[StateVar, ...] = (),
        obj_vars: tuple[StateVar, ...] = (),
    ):
        self.real_vars = tuple(real_vars)
        self.int_vars = tuple(int_vars)
        self.obj_vars = tuple(obj_vars)
        index: dict[StateVar, tuple[str, int]] = {}
        for i, v in enumerate(self.real_vars):
            index[v] = ("real", i)
        for i, v in enumerate(self.int_vars):
            index[v] = ("int", i)
        for i, v in enumerate(self.obj_vars):
            index[v] = ("obj", i)
        if len(index) != len(self.real_vars) + len(self.int_vars) + len(self.obj_vars):
            raise ModelError("duplicate state variable in layout")
        if CLOCK_VAR in index:
            raise ModelError(f"fluent name {CLOCK_FLUENT!r} is reserved for the clock")
        self._index = index

    @property
    def all_vars(self) -> tuple[StateVar, ...]:
        return self.real_vars + self.int_vars + self.obj_vars

    def kind_of(self, var: StateVar) -> str:
        if var == CLOCK_VAR:
            return "real"
        try:
            return self._index[var][0]
        except KeyError:
            raise KeyError(f"undeclared state variable {var}") from None

    def __contains__(self, var: StateVar) -> bool:
        return var in self._index

    def vec_slot(self, var: StateVar) -> int:
        """Kernel-vector slot of a numeric variable (clock is slot 0)."""
        if var == CLOCK_VAR:
            return 0
        kind, pos = self._index[var]
        if kind == "real":
            return 1 + pos
        if kind == "int":
            return 1 + len(self.real_vars) + pos
        raise ModelError(f"{var} is object-typed and has no numeric slot")

    @property
    def vec_size(self) -> int:
        return 1 + len(self.real_vars) + len(self.int_vars)


class State:
    """Total assignment of values to state variables, plus the clock."""

    __slots__ = ("layout", "reals", "ints", "objs", "clock")

    def __init__(
        self,
        layout: StateLayout,
        reals: tuple[float, ...],
        ints: tuple[int, ...] = (),
        objs: tuple[str, ...] = (),
        clock: float = 0.0,
    ):
        if len(reals) != len(layout.real_vars) or len(ints) != len(layout.int_vars) \
                or len(objs) != len(layout.obj_vars):
            raise ModelError("state does not match layout (totality violated)")
        if clock < 0.0:
            raise ModelError("clock must be nonnegative")
        self.layout = layout
        self.reals = tuple(float(v) for v in reals)
        self.ints = tuple(int(v) for v in ints)
        self.objs = tuple(objs)
        self.clock = float(clock)

    @classmethod
    def from_values(cls, layout: StateLayout, values: Mapping[StateVar, object],
                    clock: float = 0.0) -> "State":
        missing = [v for v in layout.all_vars if v not in values]
        if missing:
            raise ModelError(f"initial state misses values for: {', '.join(map(str, missing))}")
        extra = [v for v in values if v not in layout]
        if extra:
            raise ModelError(f"values given for undeclared variables: {', '.join(map(str, extra))}")
        reals = tuple(float(values[v]) for v in layout.real_vars)  # type: ignore[arg-type]
        ints = tuple(int(values[v]) for v in layout.int_vars)  # type: ignore[call-overload]
        objs = tuple(str(values[v]) for v in layout.obj_vars)
        return cls(layout, reals, ints, objs, clock)

    def value(self, var: StateVar):
        if var == CLOCK_VAR:
            return self.clock
        kind, pos = self.layout._index[var]
        if kind == "real":
            return self.reals[pos]
        if kind == "int":
            return self.ints[pos]
        return self.objs[pos]

    def replace(self, updates: Mapping[StateVar, object] | None = None,
                clock: float | None = None) -> "State":
        """A copy with some variables (and/or the clock) replaced."""
        reals, ints, objs = self.reals, self.ints, self.objs
        if updates:
            r, i, o = list(reals), list(ints), list(objs)
            for var, val in updates.items():
                kind, pos = self.layout._index[var]
                if kind == "real":
                    r[pos] = float(val)  # type: ignore[arg-type]
                elif kind == "int":
                    i[pos] = int(val)  # type: ignore[call-overload]
                else:
                    o[pos] = str(val)
            reals, ints, objs = tuple(r), tuple(i), tuple(o)
        return State(self.layout, reals, ints, objs,
                     self.clock if clock is None else clock)

    def to_vec(self) -> list[float]:
        """Kernel vector: [clock, reals..., ints-as-floats...]."""
        return [self.clock, *self.reals, *(float(i) for i in self.ints)]

    def with_vec(self, vec, clock: float) -> "State":
        """Rebuild a state from a kernel vector (ints and objects unchanged)."""
        n = len(self.layout.real_vars)
        return State(self.layout, tuple(vec[1:1 + n]), self.ints, self.objs, clock)

    def items(self):
        for v in self.layout.all_vars:
            yield v, self.value(v)

    def __eq__(self, other) -> bool:
        return (isinstance(other, State) and self.reals == other.reals
                and self.ints == other.ints and self.objs == other.objs
                and self.clock == other.clock)

    def __hash__(self) -> int:
        return hash((self.reals, self.ints, self.objs, self.clock))

    def __repr__(self) -> str:
        vals = ", ".join(f"{v}={val}" for v, val in self.items())
        return f"State(t={self.clock}, {vals})"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _finite(value: float, where: object) -> float:
    # value - value != 0.0 exactly when value is NaN or +-inf
    if value - value != 0.0:
        raise EvaluationError(f"non-finite result in {where}")
    return value


def _num(term: Term, state: State) -> float:
    v = eval_term(term, state)
    if isinstance(v, str):
        raise EvaluationError(f"object-typed operand {term} in numeric context")
    return v


def eval_term(term: Term, state: State):
    """The denotation of a ground term in a state: a float or an object name.

    Deterministic and pure; matches the compiled kernel bit for bit on
    numeric terms (same operation order, same libm calls).
    """
    if isinstance(term, NumConst):
        return term.value
    if isinstance(term, StateVar):
        v = state.value(term)
        return v if isinstance(v, str) else float(v)
    if isinstance(term, ObjConst):
        return term.name
    if isinstance(term, Arith):
        op = term.op
        ops = term.operands
        if op == "+":
            acc = _num(ops[0], state)
            for o in ops[1:]:
                acc = _finite(acc + _num(o, state), term)
            return acc
        if op == "-":
            if len(ops) == 1:
                return -_num(ops[0], state)
            acc = _num(ops[0], state)
            for o in ops[1:]:
                acc = _finite(acc - _num(o, state), term)
            return acc
        if op == "*":
            acc = _num(ops[0], state)
            for o in ops[1:]:
                acc = _finite(acc * _num(o, state), term)
            return acc
        if op == "/":
            acc = _num(ops[0], state)
            for o in ops[1:]:
                d = _num(o, state)
                if d == 0.0:
                    raise EvaluationError(f"division by zero in {term}")
                acc = _finite(acc / d, term)
            return acc
        if op == "pow":
            base = _num(ops[0], state)
            exp = _num(ops[1], state)
            return _pow(base, exp, term)
        if op == "nthroot":
            x = _num(ops[0], state)
            deg = _num(ops[1], state)
            return _nthroot(x, deg, term)
        raise EvaluationError(f"unknown operator {op!r}")
    if isinstance(term, Trig):
        x = _num(term.operand, state)
        if term.op == "sin":
            return _finite(math.sin(x), term)
        if term.op == "cos":
            return _finite(math.cos(x), term)
        return _finite(math.tan(x), term)
    raise EvaluationError(f"cannot evaluate {term!r}")


def _pow(base: float, exp: float, where: object) -> float:
    if base < 0.0 and exp != math.floor(exp):
        raise EvaluationError(f"negative base with non-integer exponent in {where}")
    try:
        out = math.pow(base, exp)
    except (ValueError, OverflowError) as e:
        raise EvaluationError(f"pow failed in {where}: {e}") from None
    return _finite(out, where)


def _nthroot(x: float, deg: float, where: object) -> float:
    if deg != math.floor(deg) or deg < 1.0:
        raise EvaluationError(f"root degree must be a positive integer in {where}")
    if x < 0.0:
        if int(deg) % 2 == 0:
            raise EvaluationError(f"even root of a negative in {where}")
        return _finite(-math.pow(-x, 1.0 / deg), where)
    return _finite(math.pow(x, 1.0 / deg), where)


def eval_formula(formula: Formula, state: State) -> bool:
    """Standard truth evaluation; comparisons are exact (no epsilon)."""
    if isinstance(formula, Truth):
        return formula.value
    if isinstance(formula, Atom):
        l = eval_term(formula.lhs, state)
        r = eval_term(formula.rhs, state)
        l_obj, r_obj = isinstance(l, str), isinstance(r, str)
        if l_obj or r_obj:
            if not (l_obj and r_obj):
                raise EvaluationError(f"type mismatch in atom {formula}")
            if formula.rel != "=":
                raise EvaluationError(f"ordering applied to object terms in {formula}")
            return l == r
        rel = formula.rel
        if rel == "=":
            return l == r
        if rel == "<":
            return l < r
        if rel == ">":
            return l > r
        if rel == "<=":
            return l <= r
        return l >= r
    if isinstance(formula, Not):
        return not eval_formula(formula.inner, state)
    if isinstance(formula, And):
        return all(eval_formula(p, state) for p in formula.parts)
    if isinstance(formula, Or):
        return any(eval_formula(p, state) for p in formula.parts)
    raise EvaluationError(f"cannot evaluate {formula!r}")
