"""Pure-Python kernel: the import-time fallback for the compiled extension.

Implements exactly the same tape semantics as ``_core`` (same operation
order, same libm calls via ``math``), so both kernels produce bit-identical
trajectories.  Used when the extension is unavailable or when
``HYPLAN_PURE_KERNEL`` is set.
"""

from __future__ import annotations

import math

from .tape import (
    ERR_DIV_ZERO,
    ERR_NONFINITE,
    ERR_POW_DOMAIN,
    ERR_ROOT_DEGREE,
    ERR_ROOT_DOMAIN,
    METHOD_EULER,
    METHOD_IEULER,
    METHOD_RK22,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_LOAD,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_ROOT,
    OP_SIN,
    OP_SUB,
    OP_TAN,
    REL_GE,
    REL_GT,
    REL_LE,
    REL_LT,
    ST_CROSSED,
    ST_EVAL_ERROR,
    ST_NO_CONVERGENCE,
    ST_OK,
    Program,
    grid_points,
)

_pow = math.pow
_sin = math.sin
_cos = math.cos
_tan = math.tan
_floor = math.floor


class _EvalErr(Exception):
    __slots__ = ("code",)

    def __init__(self, code: int):
        self.code = code


def _eval(codes, args, consts, i, end, vec, stack) -> float:
    sp = 0
    while i < end:
        op = codes[i]
        if op == OP_LOAD:
            stack[sp] = vec[args[i]]
            sp += 1
        elif op == OP_CONST:
            stack[sp] = consts[args[i]]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            v = stack[sp - 1] + stack[sp]
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_SUB:
            sp -= 1
            v = stack[sp - 1] - stack[sp]
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_MUL:
            sp -= 1
            v = stack[sp - 1] * stack[sp]
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_DIV:
            sp -= 1
            d = stack[sp]
            if d == 0.0:
                raise _EvalErr(ERR_DIV_ZERO)
            v = stack[sp - 1] / d
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_POW:
            sp -= 1
            b = stack[sp - 1]
            e = stack[sp]
            if b < 0.0 and e != _floor(e):
                raise _EvalErr(ERR_POW_DOMAIN)
            try:
                v = _pow(b, e)
            except (ValueError, OverflowError):
                raise _EvalErr(ERR_NONFINITE) from None
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_ROOT:
            sp -= 1
            x = stack[sp - 1]
            deg = stack[sp]
            if deg != _floor(deg) or deg < 1.0:
                raise _EvalErr(ERR_ROOT_DEGREE)
            if x < 0.0:
                if int(deg) % 2 == 0:
                    raise _EvalErr(ERR_ROOT_DOMAIN)
                v = -_pow(-x, 1.0 / deg)
            else:
                v = _pow(x, 1.0 / deg)
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_SIN:
            stack[sp - 1] = _sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = _cos(stack[sp - 1])
        elif op == OP_TAN:
            v = _tan(stack[sp - 1])
            if v - v != 0.0:
                raise _EvalErr(ERR_NONFINITE)
            stack[sp - 1] = v
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        i += 1
    return stack[0]


def eval_tape(prog: Program, index: int, vec) -> tuple[int, float]:
    """Evaluate one tape against a vector; returns (err_code, value)."""
    codes, args, starts, consts, _, _ = prog.as_lists()
    stack = [0.0] * prog.stack_need
    try:
        v = _eval(codes, args, consts, starts[index], starts[index + 1], list(vec), stack)
    except _EvalErr as e:
        return e.code, math.nan
    return 0, v


def _atom_true(rel: int, v: float) -> bool:
    if rel == REL_LT:
        return v < 0.0
    if rel == REL_LE:
        return v <= 0.0
    if rel == REL_GT:
        return v > 0.0
    return v >= 0.0


def scan(prog: Program, method: int, start_vec, t0: float, duration: float,
         dh: float, eps: float, max_iters: int, want_trace: bool):
    """Integrate on the grid of step ``dh``, checking atoms at every point.

    Returns (status, steps, bad_atom, err_code, final, last_good, margins,
    trace); ``steps`` counts completed grid steps, so the stop point is grid
    point ``steps`` (point 0 is the start state).
    """
    codes, args, starts, consts, rate_slots, atom_rels = prog.as_lists()
    n_rate = len(rate_slots)
    n_atoms = len(atom_rels)
    atom_base = n_rate

    vec = list(start_vec)
    m = len(vec)
    stack = [0.0] * prog.stack_need
    rates = [0.0] * n_rate
    buf_a = [0.0] * m
    buf_b = [0.0] * m
    margins = [math.inf] * n_atoms
    trace: list[list[float]] | None = [] if want_trace else None

    n_full, rem, use_rem = grid_points(duration, dh)
    total = n_full + (1 if use_rem else 0)

    def check_atoms() -> int:
        """Returns the first false atom's index, -1 if all hold."""
        bad = -1
        for k in range(n_atoms):
            ti = atom_base + k
            v = _eval(codes, args, consts, starts[ti], starts[ti + 1], vec, stack)
            av = v if v >= 0.0 else -v
            if av < margins[k]:
                margins[k] = av
            if bad < 0 and not _atom_true(atom_rels[k], v):
                bad = k
        return bad

    def eval_rates(src, out) -> None:
        for r in range(n_rate):
            out[r] = _eval(codes, args, consts, starts[r], starts[r + 1], src, stack)

    last_good = vec[:]
    try:
        bad = check_atoms()
    except _EvalErr as e:
        return ST_EVAL_ERROR, 0, -1, e.code, vec, last_good, margins, trace
    if bad >= 0:
        return ST_CROSSED, 0, bad, 0, vec, last_good, margins, trace

    for i in range(total):
        if i < n_full:
            h = dh
            t_next = t0 + (i + 1) * dh
        else:
            h = rem
            t_next = t0 + duration
        try:
            if method == METHOD_EULER:
                eval_rates(vec, rates)
                for r in range(n_rate):
                    vec[rate_slots[r]] += h * rates[r]
            elif method == METHOD_RK22:
                eval_rates(vec, rates)
                half = buf_a
                half[:] = vec
                hh = h * 0.5
                for r in range(n_rate):
                    half[rate_slots[r]] += hh * rates[r]
                half[0] = vec[0] + hh
                eval_rates(half, rates)
                for r in range(n_rate):
                    vec[rate_slots[r]] += h * rates[r]
            elif method == METHOD_IEULER:
                cur = buf_a
                nxt = buf_b
                eval_rates(vec, rates)
                cur[:] = vec
                for r in range(n_rate):
                    cur[rate_slots[r]] += h * rates[r]
                cur[0] = t_next
                converged = False
                for _ in range(max_iters):
                    eval_rates(cur, rates)
                    nxt[:] = cur
                    delta = 0.0
                    for r in range(n_rate):
                        s = rate_slots[r]
                        v = vec[s] + h * rates[r]
                        d = v - cur[s]
                        if d < 0.0:
                            d = -d
                        if d > delta:
                            delta = d
                        nxt[s] = v
                    cur, nxt = nxt, cur
                    if delta < eps:
                        converged = True
                        break
                if not converged:
                    return (ST_NO_CONVERGENCE, i, -1, 0, vec, last_good,
                            margins, trace)
                vec[:] = cur
            else:
                raise ValueError(f"unknown method code {method}")
        except _EvalErr as e:
            return ST_EVAL_ERROR, i, -1, e.code, vec, last_good, margins, trace

        vec[0] = t_next
        if want_trace:
            trace.append(vec[:])
        try:
            bad = check_atoms()
        except _EvalErr as e:
            return ST_EVAL_ERROR, i + 1, -1, e.code, vec, last_good, margins, trace
        if bad >= 0:
            return ST_CROSSED, i + 1, bad, 0, vec, last_good, margins, trace
        last_good[:] = vec

    return ST_OK, total, -1, 0, vec, last_good, margins, trace
