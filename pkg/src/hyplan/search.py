"""Forward search over the deterministic state model, and plan extraction.

Successors of a state are every applicable instantaneous action (clock
unchanged) plus one waiting successor produced by integrating the current
mode until the planning step elapses or a zero-crossing truncates the
interval.  A goal-negation crossing hands forward the first fine-grid point
inside the goal region (the entry point); safety crossings hand forward the
last point where the invariant still held.  Waiting that would make no
progress (zero-duration truncation, or an empty mode with nothing to watch)
is pruned, which also excludes Zeno-style executions.
"""

from __future__ import annotations

import heapq
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .dynamics import Mode, compute_mode, integrate_interval
from .errors import (
    ConstraintViolation,
    EvaluationError,
    IntegrationFailure,
    InternalInconsistency,
    NotApplicable,
    StrengtheningVacuous,
)
from .model import Task, apply_action
from .monitor import ORIGIN_GOAL, build_invariant, detect_crossing
from .terms import State, eval_formula


@dataclass(frozen=True)
class SimLabel:
    """Label of a waiting transition: how long and why it ended."""

    duration: float
    origin: str | None               # crossing origin, None for a full step
    mode: tuple[str, ...]
    fine_steps: int                  # full fine-grid steps to the successor
    remainder_step: float | None     # trailing partial step, if any

    def __str__(self) -> str:
        tag = f", {self.origin}" if self.origin else ""
        return f"SIM({self.duration:.6g}{tag})"


Label = object  # str (action name) | SimLabel


@dataclass
class SearchOptions:
    integrator: str = "rk2"
    no_zcc: bool = False
    quantize: float | None = None
    node_cap: int = 10_000_000
    time_cap_seconds: float = 1800.0
    action_chain_cap: int = 64


@dataclass
class SearchStats:
    expansions: int = 0
    generations: int = 0
    pruned_zero_duration: int = 0
    inapplicable_actions: int = 0
    dead_end_signals: int = 0
    duplicates: int = 0
    runtime_seconds: float = 0.0
    h_root: float | None = None

    def as_dict(self) -> dict:
        return {
            "expansions": self.expansions,
            "generations": self.generations,
            "pruned_zero_duration": self.pruned_zero_duration,
            "inapplicable_actions": self.inapplicable_actions,
            "dead_end_signals": self.dead_end_signals,
            "duplicates": self.duplicates,
            "runtime_seconds": self.runtime_seconds,
            "h_root": self.h_root,
        }


@dataclass(frozen=True)
class Happening:
    time: float
    actions: tuple[str, ...]


@dataclass(frozen=True)
class PlanInterval:
    start: float
    end: float
    mode: tuple[str, ...]
    origin: str | None
    fine_steps: int
    remainder_step: float | None

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Plan:
    happenings: tuple[Happening, ...]
    makespan: float
    intervals: tuple[PlanInterval, ...]

    def as_dict(self) -> dict:
        return {
            "happenings": [
                {"time": h.time, "actions": list(h.actions)} for h in self.happenings
            ],
            "makespan": self.makespan,
            "intervals": [
                {
                    "start": iv.start,
                    "end": iv.end,
                    "duration": iv.duration,
                    "mode": list(iv.mode),
                    "crossing_origin": iv.origin,
                }
                for iv in self.intervals
            ],
        }


class SearchNode:
    __slots__ = ("state", "parent", "label", "g", "h")

    def __init__(self, state: State, parent: "SearchNode | None", label, h: float = 0.0):
        self.state = state
        self.parent = parent
        self.label = label
        self.g = state.clock
        self.h = h


@dataclass
class SearchResult:
    status: str                      # "solved" | "unsolvable" | "resource-exhausted"
    plan: Plan | None
    stats: SearchStats
    goal_state: State | None = None
    reason: str | None = None


def state_key(task: Task, state: State, quantize: float):
    """Quantized duplicate-detection key; equal keys agree componentwise
    within half a quantum.  The clock participates only when the task
    mentions it, so time-invariant tasks deduplicate across time."""
    reals = tuple(round(v / quantize) for v in state.reals)
    clock = round(state.clock / quantize) if task.uses_clock else None
    return (reals, state.ints, state.objs, clock)


def expand(task: Task, state: State, options: SearchOptions | None = None,
           stats: SearchStats | None = None,
           program_cache: dict | None = None) -> list[tuple[object, State]]:
    """All successors: applicable actions first (declaration order), SIM last."""
    options = options or SearchOptions()
    stats = stats if stats is not None else SearchStats()
    successors: list[tuple[object, State]] = []
    for action in task.actions:
        try:
            successors.append((action.name, apply_action(task, state, action)))
        except (NotApplicable, ConstraintViolation):
            stats.inapplicable_actions += 1
    sim = _sim_successor(task, state, options, stats, program_cache)
    if sim is not None:
        successors.append(sim)
    return successors


def _sim_successor(task, state, options, stats, program_cache):
    cfg = task.config
    try:
        mode = compute_mode(task, state)
    except EvaluationError:
        stats.dead_end_signals += 1
        return None

    if options.no_zcc:
        if mode.is_empty() and not task.uses_clock:
            return None
        try:
            trace = integrate_interval(task, state, mode, cfg.delta_max,
                                       options.integrator)
        except IntegrationFailure:
            stats.dead_end_signals += 1
            return None
        end = trace[-1]
        try:
            if not all(eval_formula(c, end) for c in task.constraints):
                return None
        except EvaluationError:
            stats.dead_end_signals += 1
            return None
        from .engine import grid_points
        n_full, rem, use_rem = grid_points(cfg.delta_max, cfg.delta_z)
        label = SimLabel(cfg.delta_max, None, mode.active, n_full,
                         rem if use_rem else None)
        return (label, end)

    try:
        invariant = build_invariant(task, mode, state)
    except StrengtheningVacuous as e:
        raise InternalInconsistency(
            f"expanded state violates its own invariant: {e}") from e
    if mode.is_empty() and not invariant.atoms:
        return None  # waiting changes nothing observable

    try:
        report = detect_crossing(task, invariant, state, mode, cfg.delta_max,
                                 options.integrator, program_cache=program_cache)
    except IntegrationFailure:
        stats.dead_end_signals += 1
        return None

    if not report.crossed:
        label = SimLabel(cfg.delta_max, None, mode.active,
                         report.steps_taken - (1 if report.remainder_step else 0),
                         report.remainder_step)
        return (label, report.truncated_state)

    if report.origin == ORIGIN_GOAL:
        entry = report.crossed_state
        assert entry is not None and report.cross_time is not None
        safety_ok = True
        try:
            for m in invariant.atoms:
                if m.origin != ORIGIN_GOAL and not eval_formula(m.atom, entry):
                    safety_ok = False
                    break
        except EvaluationError:
            safety_ok = False
        if safety_ok:
            label = SimLabel(
                report.cross_time - state.clock, ORIGIN_GOAL, mode.active,
                report.steps_taken - (1 if report.remainder_step else 0),
                report.remainder_step)
            return (label, entry)
        # goal boundary and a safety boundary inside the same fine step:
        # fall through to the safety truncation below

    if report.truncation_time <= state.clock:
        stats.pruned_zero_duration += 1
        return None
    label = SimLabel(report.truncation_time - state.clock, report.origin,
                     mode.active, report.steps_taken - 1, None)
    return (label, report.truncated_state)


def extract_plan(goal_node: SearchNode, delta_max: float) -> Plan:
    """Fold a node chain into happenings and steady intervals, checking the
    timing invariants as it goes."""
    chain: list[SearchNode] = []
    node = goal_node
    while node.parent is not None:
        chain.append(node)
        node = node.parent
    chain.reverse()
    root_state = node.state

    happenings: list[Happening] = []
    intervals: list[PlanInterval] = []
    pending: list[str] = []
    current = root_state
    for step in chain:
        if isinstance(step.label, SimLabel):
            happenings.append(Happening(current.clock, tuple(pending)))
            pending = []
            intervals.append(PlanInterval(
                start=current.clock,
                end=step.state.clock,
                mode=step.label.mode,
                origin=step.label.origin,
                fine_steps=step.label.fine_steps,
                remainder_step=step.label.remainder_step,
            ))
            current = step.state
        else:
            pending.append(str(step.label))
            current = step.state
    if pending:
        happenings.append(Happening(current.clock, tuple(pending)))

    makespan = goal_node.state.clock
    eps = 1e-9 * max(1.0, delta_max)
    last_time = 0.0
    for h in happenings:
        if h.time + eps < last_time:
            raise InternalInconsistency("happening times decrease")
        last_time = max(last_time, h.time)
    for i, iv in enumerate(intervals):
        if not (0.0 < iv.duration <= delta_max + eps):
            raise InternalInconsistency(
                f"interval {i} has duration {iv.duration} outside (0, delta_max]")
        if i > 0 and intervals[i - 1].end != iv.start:
            raise InternalInconsistency("consecutive interval boundaries differ")
    return Plan(tuple(happenings), makespan, tuple(intervals))


def _run_search(task: Task, pop_policy: str,
                heuristic: Callable[[State], float] | None,
                options: SearchOptions) -> SearchResult:
    stats = SearchStats()
    caches: dict = {}
    t_start = time.monotonic()

    def finish(status, plan=None, goal_state=None, reason=None):
        stats.runtime_seconds = time.monotonic() - t_start
        return SearchResult(status, plan, stats, goal_state, reason)

    h_of: Callable[[State], float] = heuristic if heuristic else (lambda s: 0.0)
    root = SearchNode(task.initial, None, None)
    root_h = h_of(task.initial)
    stats.h_root = None if heuristic is None else root_h

    open_deque: deque[SearchNode] = deque()
    open_heap: list[tuple[float, int, SearchNode]] = []
    seq = 0

    def push(n: SearchNode):
        nonlocal seq
        if pop_policy == "bfs":
            open_deque.append(n)
        else:
            heapq.heappush(open_heap, (n.h, seq, n))
            seq += 1

    def pop() -> SearchNode | None:
        if pop_policy == "bfs":
            return open_deque.popleft() if open_deque else None
        if open_heap:
            return heapq.heappop(open_heap)[2]
        return None

    closed: set = set()
    if options.quantize:
        closed.add(state_key(task, task.initial, options.quantize))

    root.h = root_h
    push(root)

    while True:
        node = pop()
        if node is None:
            return finish("unsolvable", reason="frontier exhausted")
        try:
            if eval_formula(task.goal, node.state):
                return finish("solved", extract_plan(node, task.config.delta_max),
                              node.state)
        except EvaluationError:
            stats.dead_end_signals += 1
            continue

        stats.expansions += 1
        if stats.expansions > options.node_cap:
            return finish("resource-exhausted", reason="node cap reached")
        if stats.expansions % 128 == 0:
            if time.monotonic() - t_start > options.time_cap_seconds:
                return finish("resource-exhausted", reason="time cap reached")

        chain_len = 0
        probe = node
        while probe.parent is not None and isinstance(probe.label, str):
            chain_len += 1
            probe = probe.parent

        for label, succ in expand(task, node.state, options, stats, caches):
            if isinstance(label, str) and chain_len >= options.action_chain_cap:
                continue
            stats.generations += 1
            child = SearchNode(succ, node, label)
            if (isinstance(label, SimLabel) and label.origin == ORIGIN_GOAL):
                try:
                    if eval_formula(task.goal, succ):
                        return finish("solved",
                                      extract_plan(child, task.config.delta_max), succ)
                except EvaluationError:
                    stats.dead_end_signals += 1
                    continue
            if options.quantize:
                key = state_key(task, succ, options.quantize)
                if key in closed:
                    stats.duplicates += 1
                    continue
                closed.add(key)
            child.h = h_of(succ)
            push(child)


def search_bfs(task: Task, options: SearchOptions | None = None) -> SearchResult:
    """Breadth-first search; goal-entry successors are tested on generation."""
    return _run_search(task, "bfs", None, options or SearchOptions())


def search_gbfs(task: Task, heuristic: Callable[[State], float] | None = None,
                options: SearchOptions | None = None) -> SearchResult:
    """Greedy best-first search ordered by h with FIFO tie-breaking."""
    if heuristic is None:
        from .heuristic import RpgHeuristic
        heuristic = RpgHeuristic(task)
    return _run_search(task, "gbfs", heuristic, options or SearchOptions())


def replay_plan_exact(task: Task, plan: Plan, integrator: str,
                      options: SearchOptions | None = None) -> State:
    """Re-execute a plan with the integrator and the recorded fine steps;
    reproduces the search's goal state bit for bit (for tasks whose dynamics
    do not read the clock, whose grid times are reproduced only up to
    rounding of time sums)."""
    from . import engine
    from .dynamics import rate_program

    options = options or SearchOptions()
    cfg = task.config
    dh = cfg.delta_max / 10.0 * cfg.delta_h_factor  # overwritten below per interval
    state = task.initial
    by_time: dict[float, tuple[str, ...]] = {h.time: h.actions for h in plan.happenings}
    action_by_name = {a.name: a for a in task.actions}

    def apply_at(s: State) -> State:
        names = by_time.get(s.clock, ())
        from .model import apply_sequence
        return apply_sequence(task, s, [action_by_name[n] for n in names])

    state = apply_at(state)
    for iv in plan.intervals:
        mode = compute_mode(task, state)
        prog = rate_program(task.layout, mode)
        dh = cfg.delta_z if options.no_zcc else cfg.delta_h
        vec = state.to_vec()
        clock = state.clock
        for i in range(iv.fine_steps):
            res = engine.run_scan(prog, engine.METHOD_CODE[integrator], vec,
                                  clock, dh, dh, cfg.fixpoint_epsilon,
                                  cfg.max_fixpoint_iters)
            if not res.ok:
                raise IntegrationFailure("replay step failed", step_index=i)
            vec = res.final
            clock = state.clock + (i + 1) * dh
            vec[0] = clock
        if iv.remainder_step is not None:
            res = engine.run_scan(prog, engine.METHOD_CODE[integrator], vec,
                                  clock, iv.remainder_step, iv.remainder_step,
                                  cfg.fixpoint_epsilon, cfg.max_fixpoint_iters)
            if not res.ok:
                raise IntegrationFailure("replay remainder failed")
            vec = res.final
        state = state.with_vec(vec, clock=iv.end)
        state = apply_at(state)
    return state
