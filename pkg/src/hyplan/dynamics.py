"""Mode computation and numerical integration of process effects.

A mode is the set of processes whose conditions hold at an interval's start;
it is frozen for the whole interval (stability is the monitor's job, not
ours).  Rates of active processes affecting the same variable superpose by
addition, in process declaration order.  Three one-step integrators are
provided; ``integrate_interval`` decomposes a duration into full steps of the
simulation step plus one remainder step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import engine
from .engine import Program, ScanResult
from .engine.tape import METHOD_CODE, ST_EVAL_ERROR, ST_NO_CONVERGENCE, ST_OK
from .errors import IntegrationFailure, ModelError, NoConvergence
from .model import Task
from .terms import State, StateVar, Term, eval_formula

INTEGRATORS = ("euler", "rk2", "ieuler")


@dataclass(frozen=True)
class Mode:
    """Active process set plus the per-variable index of their rate terms."""

    active: tuple[str, ...]
    rate_index: Mapping[StateVar, tuple[Term, ...]]

    @property
    def affected(self) -> frozenset[StateVar]:
        return frozenset(self.rate_index.keys())

    @property
    def key(self) -> tuple[str, ...]:
        return self.active

    def is_empty(self) -> bool:
        return not self.active


def compute_mode(task: Task, state: State) -> Mode:
    """The processes whose conditions evaluate true in ``state``.

    An EvaluationError in some condition propagates: the caller must treat
    the state as a dead end.
    """
    active: list[str] = []
    rate_index: dict[StateVar, list[Term]] = {}
    for p in task.processes:
        if eval_formula(p.condition, state):
            active.append(p.name)
            for var, rate in p.effects:
                rate_index.setdefault(var, []).append(rate)
    return Mode(tuple(active), {v: tuple(r) for v, r in rate_index.items()})


def method_code(integrator: str) -> int:
    try:
        return METHOD_CODE[integrator]
    except KeyError:
        raise ModelError(f"unknown integrator {integrator!r}; "
                         f"choose from {', '.join(INTEGRATORS)}") from None


def rate_program(layout, mode: Mode,
                 atoms: Sequence[tuple[int, Term]] = ()) -> Program:
    """Compile a mode's rates (and optional atom indicators) into a program.

    Affected variables are ordered by vector slot so that programs are
    deterministic regardless of rate-index dict order.
    """
    items = sorted(((layout.vec_slot(v), list(terms))
                    for v, terms in mode.rate_index.items()))
    return engine.assemble(layout, items, list(atoms))


def _raise_failure(res: ScanResult, what: str) -> None:
    if res.status == ST_NO_CONVERGENCE:
        raise NoConvergence(
            f"implicit Euler did not converge during {what} (step {res.steps})",
            step_index=res.steps)
    if res.status == ST_EVAL_ERROR:
        raise IntegrationFailure(
            f"evaluation error during {what} at step {res.steps}: {res.error_message()}",
            step_index=res.steps)


def _one_step(state: State, mode: Mode, h: float, method: int,
              eps: float, max_iters: int) -> State:
    if h <= 0.0:
        raise ModelError("step size must be positive")
    prog = rate_program(state.layout, mode)
    res = engine.run_scan(prog, method, state.to_vec(), state.clock, h, h,
                          eps, max_iters)
    if res.status != ST_OK:
        _raise_failure(res, "step")
    return state.with_vec(res.final, clock=state.clock + h)


def step_explicit_euler(state: State, mode: Mode, h: float) -> State:
    """new = old + h * (sum of active rates at old); clock advances by h."""
    return _one_step(state, mode, h, engine.METHOD_EULER, 1e-6, 1)


def step_rk22(state: State, mode: Mode, h: float) -> State:
    """Midpoint rule: rates at old form the half-step state, rates there
    advance the full step.  All affected variables move together."""
    return _one_step(state, mode, h, engine.METHOD_RK22, 1e-6, 1)


def step_implicit_euler(state: State, mode: Mode, h: float,
                        eps: float = 1e-6, max_iters: int = 100) -> State:
    """Iterate s_{j+1} = old + h*rate(s_j) from the explicit-Euler seed until
    the largest per-variable change drops below ``eps``."""
    return _one_step(state, mode, h, engine.METHOD_IEULER, eps, max_iters)


def integrate_interval(task: Task, state: State, mode: Mode, duration: float,
                       integrator: str) -> list[State]:
    """Integrate for ``duration`` using k full steps of the simulation step
    plus one remainder step; returns the ordered trace of post-step states.

    The mode is frozen: process conditions are never re-evaluated here.
    Clocks accumulate as start + i*dz (and exactly start + duration at the
    end) to avoid drift.
    """
    if duration <= 0.0:
        raise ModelError("duration must be positive")
    cfg = task.config
    dz = cfg.delta_z
    prog = rate_program(state.layout, mode)
    res = engine.run_scan(prog, method_code(integrator), state.to_vec(),
                          state.clock, duration, dz, cfg.fixpoint_epsilon,
                          cfg.max_fixpoint_iters, want_trace=True)
    if res.status != ST_OK:
        _raise_failure(res, "interval integration")
    n_full, _, use_rem = engine.grid_points(duration, dz)
    total = n_full + (1 if use_rem else 0)
    trace: list[State] = []
    assert res.trace is not None
    for i, row in enumerate(res.trace):
        if i == total - 1:
            clock = state.clock + duration
        else:
            clock = state.clock + (i + 1) * dz
        trace.append(state.with_vec(row, clock=clock))
    return trace
