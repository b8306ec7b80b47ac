"""Command-line entry points: plan, validate, simulate.

Exit codes: 0 success, 2 parse/input error, 3 unsolvable or resource
exhausted, 4 internal error, 5 invalid plan.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .dynamics import compute_mode
from .errors import HyplanError, IntegrationFailure, ParseError, PlanFormatError
from .heuristic import RpgHeuristic
from .model import Task
from .monitor import build_invariant, detect_crossing_traced
from .parser import parse_domain, parse_problem
from .plans import parse_plan_text, write_plan_text
from .search import SearchOptions, search_bfs, search_gbfs
from .terms import And, Atom, NumConst, StateVar
from .validate import trace_plan, validate_plan

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_UNSOLVED = 3
EXIT_INTERNAL = 4
EXIT_INVALID = 5


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, PlanFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except HyplanError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="hyplan",
                                  description="Hybrid-domain planner and validator")
    top.add_argument("--version", action="version", version=f"hyplan {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="search for a plan")
    _add_task_args(p)
    p.add_argument("--search", choices=("bfs", "gbfs"), default="gbfs")
    p.add_argument("--integrator", choices=("euler", "rk2", "ieuler"), default="rk2")
    p.add_argument("--no-zcc", action="store_true",
                   help="disable zero-crossing checks (invariant at endpoints only)")
    p.add_argument("--quantize", type=float, default=None,
                   help="duplicate-detection quantum (off by default)")
    p.add_argument("--node-cap", type=int, default=10_000_000)
    p.add_argument("--time-cap-seconds", type=float, default=1800.0)
    p.add_argument("--out", type=Path, help="write the plan here instead of stdout")
    _add_artifact_args(p)
    p.set_defaults(func=cmd_plan)

    v = sub.add_parser("validate", help="replay and check a plan")
    _add_task_args(v)
    v.add_argument("plan", type=Path)
    v.add_argument("--integrator", choices=("euler", "rk2", "ieuler"),
                   default="ieuler")
    v.add_argument("--dz", type=float, default=0.001,
                   help="validator simulation step (default 0.001)")
    v.add_argument("--goal-slack", type=float, default=None,
                   help="accepted gap between goal entry and recorded plan end "
                        "(default: max(1.5*delta_h, 10*dz))")
    v.add_argument("--edge-slack", type=float, default=None,
                   help="clip window for boundary-touching interval ends "
                        "(default: max(1.5*delta_h, 10*dz))")
    v.add_argument("--json", type=Path, dest="json_out")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="integrate from the initial state, no actions")
    _add_task_args(s)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--integrator", choices=("euler", "rk2", "ieuler"), default="rk2")
    _add_artifact_args(s)
    s.set_defaults(func=cmd_simulate)
    return top


def _add_task_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("domain", type=Path)
    p.add_argument("problem", type=Path)
    p.add_argument("--delta-max", type=float, default=None,
                   help="planning step (required unless the problem's :bounds set it)")
    p.add_argument("--delta-min", type=float, default=None)
    p.add_argument("--delta-z", type=float, default=None,
                   help="simulation step (default delta-max/10)")
    p.add_argument("--delta-h-factor", type=float, default=None,
                   help="monitoring step as a fraction of delta-z (default 0.1)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="implicit-Euler fixed-point tolerance (default 1e-6)")


def _add_artifact_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trace", type=Path, help="write the fine-grid trajectory CSV")
    p.add_argument("--json", type=Path, dest="json_out", help="write a JSON result")
    p.add_argument("--svg", type=Path, help="render a 2-D trajectory plot")
    p.add_argument("--plot-x", default=None, help="variable for the SVG x axis")
    p.add_argument("--plot-y", default=None, help="variable for the SVG y axis")


def load_task(args) -> Task:
    domain_text = Path(args.domain).read_text(encoding="utf-8")
    problem_text = Path(args.problem).read_text(encoding="utf-8")
    domain = parse_domain(domain_text, str(args.domain))
    overrides = {
        "delta_max": args.delta_max,
        "delta_min": args.delta_min,
        "delta_z": args.delta_z,
        "delta_h_factor": args.delta_h_factor,
        "fixpoint_epsilon": args.epsilon,
    }
    return parse_problem(problem_text, domain, str(args.problem), overrides)


def _config_echo(task: Task, args) -> dict:
    cfg = task.config
    echo = {
        "delta_max": cfg.delta_max,
        "delta_min": cfg.delta_min,
        "delta_z": cfg.delta_z,
        "delta_h_factor": cfg.delta_h_factor,
        "fixpoint_epsilon": cfg.fixpoint_epsilon,
        "max_fixpoint_iters": cfg.max_fixpoint_iters,
        "integrator": getattr(args, "integrator", None),
    }
    for extra in ("search", "no_zcc", "quantize", "node_cap", "time_cap_seconds",
                  "dz", "goal_slack", "edge_slack", "horizon"):
        if hasattr(args, extra):
            echo[extra] = getattr(args, extra)
    return echo


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def cmd_plan(args) -> int:
    task = load_task(args)
    options = SearchOptions(
        integrator=args.integrator,
        no_zcc=args.no_zcc,
        quantize=args.quantize,
        node_cap=args.node_cap,
        time_cap_seconds=args.time_cap_seconds,
    )
    t0 = time.monotonic()
    if args.search == "bfs":
        result = search_bfs(task, options)
    else:
        result = search_gbfs(task, RpgHeuristic(task), options)
    runtime = time.monotonic() - t0

    payload = {
        "schema_version": SCHEMA_VERSION,
        "status": result.status,
        "makespan": result.plan.makespan if result.plan else None,
        "runtime_seconds": runtime,
        "config": _config_echo(task, args),
        **result.stats.as_dict(),
        "plan": result.plan.as_dict() if result.plan else None,
    }
    if args.json_out:
        args.json_out.write_text(json.dumps(payload, indent=2), encoding="utf-8")

    if result.status != "solved":
        print(f"no plan: {result.status} ({result.reason})", file=sys.stderr)
        return EXIT_UNSOLVED

    assert result.plan is not None
    text = write_plan_text(result.plan)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)

    if args.trace or args.svg:
        replay = trace_plan(task, result.plan, integrator=args.integrator,
                            dz=task.config.delta_z)
        if not replay.valid:
            print(f"warning: plan replay for tracing reported {replay.verdict} "
                  f"({replay.cause})", file=sys.stderr)
        rows = replay.trace or []
        if args.trace:
            _write_csv(args.trace, task, rows)
        if args.svg:
            _write_svg(args.svg, task, rows, args.plot_x, args.plot_y)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    task = load_task(args)
    ptext = parse_plan_text(Path(args.plan).read_text(encoding="utf-8"))
    report = validate_plan(task, ptext, integrator=args.integrator, dz=args.dz,
                           goal_slack=args.goal_slack, edge_slack=args.edge_slack)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_echo(task, args),
        **report.as_dict(),
    }
    if args.json_out:
        args.json_out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(f"{report.verdict}: recorded makespan {report.recorded_makespan}"
          + (f", measured {report.measured_makespan}" if report.measured_makespan
             is not None else ""))
    if report.valid:
        return EXIT_OK
    if report.violation:
        print(f"first violation at t={report.violation.time:.6g}: "
              f"{report.violation.atom} [{report.violation.origin}]",
              file=sys.stderr)
    if report.cause:
        print(f"cause: {report.cause}", file=sys.stderr)
    return EXIT_INVALID


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    task = load_task(args)
    state = task.initial
    rows: list[tuple[float, list[float]]] = [(0.0, state.to_vec())]
    crossings: list[dict] = []
    caches: dict = {}
    status = "horizon"
    while state.clock < args.horizon - 1e-12:
        mode = compute_mode(task, state)
        invariant = build_invariant(task, mode, state)
        if mode.is_empty() and not invariant.atoms:
            status = "quiescent"
            break
        duration = min(task.config.delta_max, args.horizon - state.clock)
        try:
            report, seg_rows = detect_crossing_traced(
                task, invariant, state, mode, duration, args.integrator,
                program_cache=caches)
        except IntegrationFailure as e:
            print(f"integration failure at t={state.clock}: {e}", file=sys.stderr)
            status = "integration-failure"
            break
        if seg_rows:
            rows.extend(seg_rows[1:])
        if report.crossed:
            crossings.append({
                "time": report.cross_time,
                "truncation_time": report.truncation_time,
                "atom": str(report.atom),
                "origin": report.origin,
            })
            state = report.truncated_state
            status = "crossing"
            break
        state = report.truncated_state

    payload = {
        "schema_version": SCHEMA_VERSION,
        "status": status,
        "end_time": state.clock,
        "config": _config_echo(task, args),
        "crossings": crossings,
    }
    if args.json_out:
        args.json_out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    if args.trace:
        _write_csv(args.trace, task, rows)
    if args.svg:
        _write_svg(args.svg, task, rows, args.plot_x, args.plot_y)
    print(f"simulated to t={state.clock:.6g} ({status})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _var_columns(task: Task) -> list[tuple[str, int]]:
    """CSV columns: every declared real variable, by kernel-vector slot."""
    return [(str(v), task.layout.vec_slot(v)) for v in task.layout.real_vars]


def _write_csv(path: Path, task: Task, rows) -> None:
    cols = _var_columns(task)
    lines = ["t," + ",".join(name for name, _ in cols)]
    last_t = None
    for t, vec in rows:
        if last_t is not None and t <= last_t:
            continue
        last_t = t
        lines.append(",".join([repr(t)] + [repr(vec[slot]) for _, slot in cols]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _goal_box(task: Task, xvar: StateVar, yvar: StateVar):
    """Extract per-axis bounds when the goal is a conjunction of bounds."""
    bounds = {xvar: [None, None], yvar: [None, None]}
    goal = task.goal
    parts = goal.parts if isinstance(goal, And) else (goal,)
    for p in parts:
        if not isinstance(p, Atom):
            continue
        var, const, rel = None, None, p.rel
        if isinstance(p.lhs, StateVar) and isinstance(p.rhs, NumConst):
            var, const = p.lhs, p.rhs.value
        elif isinstance(p.rhs, StateVar) and isinstance(p.lhs, NumConst):
            var, const = p.rhs, p.lhs.value
            rel = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}.get(rel, rel)
        if var not in bounds:
            continue
        if rel in (">", ">="):
            bounds[var][0] = const
        elif rel in ("<", "<="):
            bounds[var][1] = const
    bx, by = bounds[xvar], bounds[yvar]
    if None in bx or None in by:
        return None
    return (bx[0], bx[1], by[0], by[1])


def _write_svg(path: Path, task: Task, rows, plot_x: str | None,
               plot_y: str | None) -> None:
    reals = task.layout.real_vars
    if len(reals) < 2 and not (plot_x and plot_y):
        print("warning: need two real variables for --svg", file=sys.stderr)
        return

    def find(name: str | None, default_idx: int) -> StateVar:
        if name is None:
            return reals[default_idx]
        for v in reals:
            if str(v) == name or v.fluent == name:
                return v
        raise ParseError(f"--plot variable {name!r} is not a real state variable")

    xvar = find(plot_x, 0)
    yvar = find(plot_y, 1)
    xs = [vec[task.layout.vec_slot(xvar)] for _, vec in rows]
    ys = [vec[task.layout.vec_slot(yvar)] for _, vec in rows]
    if not xs:
        return
    box = _goal_box(task, xvar, yvar)
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    if box:
        xmin, xmax = min(xmin, box[0]), max(xmax, box[1])
        ymin, ymax = min(ymin, box[2]), max(ymax, box[3])
    span_x = (xmax - xmin) or 1.0
    span_y = (ymax - ymin) or 1.0
    size, pad = 600.0, 40.0

    def sx(x):
        return pad + (x - xmin) / span_x * (size - 2 * pad)

    def sy(y):
        return size - pad - (y - ymin) / span_y * (size - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 {size:.0f} {size:.0f}">',
        f'<rect width="{size:.0f}" height="{size:.0f}" fill="white"/>',
    ]
    if box:
        parts.append(
            f'<rect x="{sx(box[0]):.2f}" y="{sy(box[3]):.2f}" '
            f'width="{sx(box[1]) - sx(box[0]):.2f}" '
            f'height="{sy(box[2]) - sy(box[3]):.2f}" '
            'fill="none" stroke="green" stroke-width="2"/>')
    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{points}" fill="none" stroke="blue" '
                 'stroke-width="1.5"/>')
    parts.append(f'<circle cx="{sx(xs[0]):.2f}" cy="{sy(ys[0]):.2f}" r="5" '
                 'fill="none" stroke="black" stroke-width="2"/>')
    parts.append(f'<text x="{pad:.0f}" y="{size - 8:.0f}" font-size="12">'
                 f"{xvar} vs {yvar}</text>")
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
