"""Numeric kernel selection and the uniform scan interface.

At import time the compiled Cython kernel is preferred; if it is missing
(no compiler at install time) or ``HYPLAN_PURE_KERNEL`` is set in the
environment, the pure-Python twin is used.  Both implement identical
semantics; ``scripts/benchmark_kernel.py`` compares their speed and checks
bitwise agreement.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from ..errors import EvaluationError
from . import tape
from .tape import (
    METHOD_CODE,
    METHOD_EULER,
    METHOD_IEULER,
    METHOD_RK22,
    REL_CODE,
    ST_CROSSED,
    ST_EVAL_ERROR,
    ST_NO_CONVERGENCE,
    ST_OK,
    ERR_MESSAGES,
    Program,
    assemble,
    grid_points,
)

if os.environ.get("HYPLAN_PURE_KERNEL"):
    from . import _pycore as _backend
    COMPILED = False
else:
    try:
        from . import _core as _backend  # type: ignore[attr-defined]
        COMPILED = True
    except ImportError:
        from . import _pycore as _backend
        COMPILED = False


def backend_name() -> str:
    return "compiled" if COMPILED else "pure-python"


@dataclass
class ScanResult:
    """Outcome of one grid scan.

    ``steps`` counts completed grid steps; the stop point is grid point
    ``steps`` (point 0 being the start state).  ``final`` is the state vector
    at the stop point, ``last_good`` the vector at the last point where every
    atom held.  ``margins`` holds the minimum indicator magnitude per atom
    over all visited points.
    """

    status: int
    steps: int
    bad_atom: int
    err_code: int
    final: list[float]
    last_good: list[float]
    margins: list[float]
    trace: list[list[float]] | None

    @property
    def crossed(self) -> bool:
        return self.status == ST_CROSSED

    @property
    def ok(self) -> bool:
        return self.status == ST_OK

    def error_message(self) -> str:
        return ERR_MESSAGES.get(self.err_code, f"kernel error {self.err_code}")


def run_scan(prog: Program, method: int, start_vec, t0: float, duration: float,
             dh: float, eps: float, max_iters: int,
             want_trace: bool = False) -> ScanResult:
    """Run the selected kernel over one interval."""
    out = _backend.scan(prog, method, list(start_vec), t0, duration, dh, eps,
                        max_iters, want_trace)
    status, steps, bad_atom, err_code, final, last_good, margins, trace = out
    return ScanResult(status, steps, bad_atom, err_code, list(final),
                      list(last_good), list(margins), trace)


def eval_tape(prog: Program, index: int, vec) -> float:
    """Evaluate a single tape; raises EvaluationError on failure."""
    err, value = _backend.eval_tape(prog, index, list(vec))
    if err:
        raise EvaluationError(ERR_MESSAGES.get(err, f"kernel error {err}"))
    return value


__all__ = [
    "COMPILED",
    "METHOD_CODE",
    "METHOD_EULER",
    "METHOD_IEULER",
    "METHOD_RK22",
    "REL_CODE",
    "ST_CROSSED",
    "ST_EVAL_ERROR",
    "ST_NO_CONVERGENCE",
    "ST_OK",
    "Program",
    "ScanResult",
    "assemble",
    "backend_name",
    "eval_tape",
    "grid_points",
    "run_scan",
    "tape",
]
