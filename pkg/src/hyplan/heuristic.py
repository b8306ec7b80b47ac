"""Distance estimator: processes compiled away, evaluated on an
interval-propagation relaxed planning graph.

Each process becomes an instantaneous action whose effect applies one
planning-step's worth of its rate (f := f + delta_max * rate).  The graph
propagates per-variable bounds: real variables carry closed intervals,
integer variables integer ranges, object variables value sets.  A layer
applies every action whose precondition is interval-satisfiable and widens
the box with the convex union of all effect results; h is the index of the
first layer where the goal is interval-satisfiable (0 on goal states,
infinity on fixpoint or layer overflow).  Everything is optimistic: atoms in
a conjunction are tested independently and global constraints are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ModelError
from .model import Action, Task
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
    StateVar,
    Term,
    Trig,
    Truth,
)

#: Infinity clamp: keeps interval arithmetic total.
CLAMP = 1e18

Interval = tuple[float, float]

_TWO_PI = 2.0 * math.pi


def _clamp(lo: float, hi: float) -> Interval:
    lo = min(max(lo, -CLAMP), CLAMP)
    hi = min(max(hi, -CLAMP), CLAMP)
    if math.isnan(lo) or math.isnan(hi):
        return (-CLAMP, CLAMP)
    return (lo, hi) if lo <= hi else (hi, lo)


def hull(a: Interval, b: Interval) -> Interval:
    return (min(a[0], b[0]), max(a[1], b[1]))


class Box:
    """Per-variable value bounds: intervals for reals (and the clock),
    integer ranges for integers, finite sets for object variables."""

    __slots__ = ("layout", "clock", "reals", "ints", "objs")

    def __init__(self, layout, clock: Interval, reals, ints, objs):
        self.layout = layout
        self.clock = clock
        self.reals: list[Interval] = reals
        self.ints: list[tuple[int, int]] = ints
        self.objs: list[frozenset[str]] = objs

    @classmethod
    def from_state(cls, state: State) -> "Box":
        return cls(
            state.layout,
            (state.clock, state.clock),
            [(v, v) for v in state.reals],
            [(v, v) for v in state.ints],
            [frozenset((v,)) for v in state.objs],
        )

    def real_iv(self, var: StateVar) -> Interval:
        if var == CLOCK_VAR:
            return self.clock
        kind, pos = self.layout._index[var]
        if kind == "real":
            return self.reals[pos]
        if kind == "int":
            lo, hi = self.ints[pos]
            return (float(lo), float(hi))
        raise ModelError(f"{var} is object-typed, no numeric interval")

    def obj_set(self, var: StateVar) -> frozenset[str]:
        kind, pos = self.layout._index[var]
        if kind != "obj":
            raise ModelError(f"{var} is not object-typed")
        return self.objs[pos]

    def snapshot(self) -> tuple:
        return (self.clock, tuple(self.reals), tuple(self.ints), tuple(self.objs))

    def contains(self, other: "Box") -> bool:
        """True when every bound of ``other`` lies within this box."""
        if not (self.clock[0] <= other.clock[0] and other.clock[1] <= self.clock[1]):
            return False
        for a, b in zip(self.reals, other.reals):
            if not (a[0] <= b[0] and b[1] <= a[1]):
                return False
        for ai, bi in zip(self.ints, other.ints):
            if not (ai[0] <= bi[0] and bi[1] <= ai[1]):
                return False
        return all(b <= a for a, b in zip(self.objs, other.objs))


def interval_eval(term: Term, box: Box) -> Interval:
    """Conservative interval arithmetic; never raises.

    Products are the naive four-corner rule (correlations ignored), division
    by an interval containing zero widens to the clamp, trig uses
    critical-point analysis, and tan over a pole returns the full clamp.
    """
    if isinstance(term, NumConst):
        v = float(term.value)
        return _clamp(v, v)
    if isinstance(term, StateVar):
        return _clamp(*box.real_iv(term))
    if isinstance(term, ObjConst):
        raise ModelError(f"object constant {term.name!r} in numeric interval context")
    if isinstance(term, Trig):
        x = interval_eval(term.operand, box)
        if term.op == "sin":
            return _sin_range(x)
        if term.op == "cos":
            return _sin_range((x[0] + math.pi / 2.0, x[1] + math.pi / 2.0))
        return _tan_range(x)
    assert isinstance(term, Arith)
    op = term.op
    ops = term.operands
    if op == "+":
        lo, hi = interval_eval(ops[0], box)
        for o in ops[1:]:
            l2, h2 = interval_eval(o, box)
            lo, hi = lo + l2, hi + h2
        return _clamp(lo, hi)
    if op == "-":
        lo, hi = interval_eval(ops[0], box)
        if len(ops) == 1:
            return _clamp(-hi, -lo)
        for o in ops[1:]:
            l2, h2 = interval_eval(o, box)
            lo, hi = lo - h2, hi - l2
        return _clamp(lo, hi)
    if op == "*":
        acc = interval_eval(ops[0], box)
        for o in ops[1:]:
            acc = _mul(acc, interval_eval(o, box))
        return acc
    if op == "/":
        acc = interval_eval(ops[0], box)
        for o in ops[1:]:
            acc = _div(acc, interval_eval(o, box))
        return acc
    if op == "pow":
        return _pow_range(interval_eval(ops[0], box), interval_eval(ops[1], box))
    if op == "nthroot":
        return _root_range(interval_eval(ops[0], box), interval_eval(ops[1], box))
    raise ModelError(f"cannot interval-evaluate {term!r}")


def _mul(a: Interval, b: Interval) -> Interval:
    ps = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return _clamp(min(ps), max(ps))


def _div(a: Interval, b: Interval) -> Interval:
    if b[0] <= 0.0 <= b[1]:
        return (-CLAMP, CLAMP)
    ps = (a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1])
    return _clamp(min(ps), max(ps))


def _sin_range(x: Interval) -> Interval:
    lo, hi = x
    if hi - lo >= _TWO_PI:
        return (-1.0, 1.0)
    vals = [math.sin(lo), math.sin(hi)]
    # maxima at pi/2 + 2k*pi, minima at -pi/2 + 2k*pi inside [lo, hi]
    k = math.ceil((lo - math.pi / 2.0) / _TWO_PI)
    if math.pi / 2.0 + k * _TWO_PI <= hi:
        vals.append(1.0)
    k = math.ceil((lo + math.pi / 2.0) / _TWO_PI)
    if -math.pi / 2.0 + k * _TWO_PI <= hi:
        vals.append(-1.0)
    return (min(vals), max(vals))


def _tan_range(x: Interval) -> Interval:
    lo, hi = x
    if hi - lo >= math.pi:
        return (-CLAMP, CLAMP)
    # pole at (k + 1/2) * pi inside [lo, hi]?
    k = math.ceil((lo - math.pi / 2.0) / math.pi)
    if math.pi / 2.0 + k * math.pi <= hi:
        return (-CLAMP, CLAMP)
    return _clamp(math.tan(lo), math.tan(hi))


def _pow_range(base: Interval, exp: Interval) -> Interval:
    if exp[0] == exp[1] and float(exp[0]).is_integer():
        n = int(exp[0])
        if n == 0:
            return (1.0, 1.0)
        if n < 0:
            return _div((1.0, 1.0), _pow_range(base, (float(-n), float(-n))))
        lo, hi = base
        plo, phi = lo ** n, hi ** n
        if n % 2 == 0 and lo < 0.0 <= hi:
            return _clamp(0.0, max(plo, phi))
        if n % 2 == 0 and hi < 0.0:
            return _clamp(phi, plo)
        return _clamp(plo, phi)
    if base[0] > 0.0:
        corners = []
        for b in base:
            for e in exp:
                try:
                    corners.append(math.pow(b, e))
                except (OverflowError, ValueError):
                    corners.append(CLAMP)
        return _clamp(min(corners), max(corners))
    return (-CLAMP, CLAMP)


def _root_range(x: Interval, deg: Interval) -> Interval:
    if deg[0] != deg[1] or not float(deg[0]).is_integer() or deg[0] < 1:
        return (-CLAMP, CLAMP)
    n = int(deg[0])

    def root(v: float) -> float:
        if v < 0.0:
            return -math.pow(-v, 1.0 / n)
        return math.pow(v, 1.0 / n)

    lo, hi = x
    if n % 2 == 1:
        return _clamp(root(lo), root(hi))
    if hi < 0.0:
        return (-CLAMP, CLAMP)  # concrete evaluation would always fail
    return _clamp(root(max(lo, 0.0)), root(hi))


def interval_satisfiable(formula: Formula, box: Box) -> bool:
    """Optimistic truth: an atom holds if its indicator interval intersects
    the relation's sign region; conjuncts are tested independently."""
    if isinstance(formula, Truth):
        return formula.value
    if isinstance(formula, Atom):
        return _atom_satisfiable(formula, box, negate=False)
    if isinstance(formula, Not):
        inner = formula.inner
        if isinstance(inner, Atom):
            return _atom_satisfiable(inner, box, negate=True)
        if isinstance(inner, Not):
            return interval_satisfiable(inner.inner, box)
        if isinstance(inner, And):
            return any(interval_satisfiable(Not(p), box) for p in inner.parts)
        if isinstance(inner, Or):
            return all(interval_satisfiable(Not(p), box) for p in inner.parts)
        return not inner.value  # Truth
    if isinstance(formula, And):
        return all(interval_satisfiable(p, box) for p in formula.parts)
    if isinstance(formula, Or):
        return any(interval_satisfiable(p, box) for p in formula.parts)
    raise ModelError(f"cannot test {formula!r}")


def _objectish(term: Term, box: Box) -> frozenset[str] | None:
    if isinstance(term, ObjConst):
        return frozenset((term.name,))
    if isinstance(term, StateVar) and term != CLOCK_VAR:
        kind, _ = box.layout._index[term]
        if kind == "obj":
            return box.obj_set(term)
    return None


def _atom_satisfiable(atom: Atom, box: Box, negate: bool) -> bool:
    ls = _objectish(atom.lhs, box)
    if ls is not None:
        rs = _objectish(atom.rhs, box)
        if rs is None:
            raise ModelError(f"atom mixes object and numeric terms: {atom}")
        if not negate:
            return bool(ls & rs)
        # some pair of distinct values exists
        return len(ls | rs) > 1 or ls != rs
    lo, hi = interval_eval(Arith("-", (atom.lhs, atom.rhs)), box)
    rel = atom.rel
    if negate:
        rel = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}.get(rel)
        if rel is None:  # negated equality: any nonzero value in the interval
            return not (lo == 0.0 and hi == 0.0)
    if rel == "<":
        return lo < 0.0
    if rel == "<=":
        return lo <= 0.0
    if rel == ">":
        return hi > 0.0
    if rel == ">=":
        return hi >= 0.0
    return lo <= 0.0 <= hi  # equality


@dataclass(frozen=True)
class CompiledTask:
    """Original actions plus one instantaneous action per process; the
    compiled action applies delta_max's worth of each rate."""

    task: Task
    actions: tuple[Action, ...]


def compile_processes(task: Task) -> CompiledTask:
    compiled = list(task.actions)
    dmax = NumConst(task.config.delta_max)
    for p in task.processes:
        effects = tuple(
            (var, Arith("+", (var, Arith("*", (dmax, rate)))))
            for var, rate in p.effects
        )
        compiled.append(Action(name=f"wait[{p.name}]",
                               precondition=p.condition, effects=effects))
    return CompiledTask(task, tuple(compiled))


def _apply_effects(action: Action, box: Box, out: Box) -> bool:
    """Widen ``out`` with the effect values of ``action`` evaluated on ``box``.

    Returns True when something actually widened.
    """
    layout = box.layout
    grew = False
    for var, rhs in action.effects:
        kind, pos = layout._index[var]
        if kind == "real":
            val = interval_eval(rhs, box)
            widened = hull(out.reals[pos], val)
            if widened != out.reals[pos]:
                out.reals[pos] = widened
                grew = True
        elif kind == "int":
            lo, hi = interval_eval(rhs, box)
            lo_i = math.trunc(max(lo, -CLAMP))
            hi_i = math.trunc(min(hi, CLAMP))
            cur = out.ints[pos]
            widened_i = (min(cur[0], lo_i), max(cur[1], hi_i))
            if widened_i != cur:
                out.ints[pos] = widened_i
                grew = True
        else:
            vals = _objectish(rhs, box)
            if vals is None:
                raise ModelError(f"object variable {var} assigned numeric value")
            merged = out.objs[pos] | vals
            if merged != out.objs[pos]:
                out.objs[pos] = merged
                grew = True
    return grew


def h_interval_rpg(compiled: CompiledTask, state: State,
                   max_layers: int = 256,
                   layer_log: list | None = None) -> float:
    """Layers until the goal becomes interval-satisfiable; inf on fixpoint.

    ``layer_log`` (when given) receives, per layer, the names of the actions
    first applied there, for diagnostics; h itself is the layer count.
    """
    task = compiled.task
    box = Box.from_state(state)
    if interval_satisfiable(task.goal, box):
        return 0
    applied: set[str] = set()
    for layer in range(1, max_layers + 1):
        grew = False
        new_names: list[str] = []
        effects_from = Box(box.layout, box.clock, list(box.reals),
                           list(box.ints), list(box.objs))
        for action in compiled.actions:
            if interval_satisfiable(action.precondition, box):
                if _apply_effects(action, box, effects_from):
                    grew = True
                if action.name not in applied:
                    applied.add(action.name)
                    new_names.append(action.name)
        box = effects_from
        if layer_log is not None:
            layer_log.append(new_names)
        if interval_satisfiable(task.goal, box):
            return layer
        if not grew:
            return math.inf
    return math.inf


class RpgHeuristic:
    """Callable heuristic with per-state memoization."""

    def __init__(self, task: Task, max_layers: int = 256):
        self.compiled = compile_processes(task)
        self.max_layers = max_layers
        self._memo: dict[State, float] = {}

    def __call__(self, state: State) -> float:
        h = self._memo.get(state)
        if h is None:
            h = h_interval_rpg(self.compiled, state, self.max_layers)
            self._memo[state] = h
        return h
