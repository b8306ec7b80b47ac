"""Flattening of expression trees into stack-machine tapes.

The hot loop of the planner evaluates the same rate and indicator terms
thousands of times per expansion.  Instead of walking trees, terms are
compiled once into flat postfix programs over the numeric state vector
(slot 0 is the clock, then real variables, then frozen integer variables),
and a small kernel interprets them.  Two interchangeable kernels exist: a
Cython extension and a pure-Python fallback; both follow exactly the
operation order of ``terms.eval_term`` so results are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError
from ..terms import Arith, NumConst, ObjConst, StateLayout, StateVar, Term, Trig

OP_CONST = 0
OP_LOAD = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_ROOT = 7
OP_SIN = 8
OP_COS = 9
OP_TAN = 10
OP_NEG = 11

# Relational codes over the sign of an indicator value v:
REL_LT = 0   # true iff v < 0
REL_LE = 1   # true iff v <= 0
REL_GT = 2   # true iff v > 0
REL_GE = 3   # true iff v >= 0

REL_CODE = {"<": REL_LT, "<=": REL_LE, ">": REL_GT, ">=": REL_GE}

# Integration method codes.
METHOD_EULER = 0
METHOD_RK22 = 1
METHOD_IEULER = 2

METHOD_CODE = {"euler": METHOD_EULER, "rk2": METHOD_RK22, "ieuler": METHOD_IEULER}

# Kernel status codes.
ST_OK = 0
ST_CROSSED = 1
ST_EVAL_ERROR = 2
ST_NO_CONVERGENCE = 3

# Evaluation error detail codes.
ERR_NONE = 0
ERR_DIV_ZERO = 1
ERR_POW_DOMAIN = 2
ERR_ROOT_DOMAIN = 3
ERR_NONFINITE = 4
ERR_ROOT_DEGREE = 5

ERR_MESSAGES = {
    ERR_DIV_ZERO: "division by zero",
    ERR_POW_DOMAIN: "negative base with non-integer exponent",
    ERR_ROOT_DOMAIN: "even root of a negative",
    ERR_NONFINITE: "non-finite result",
    ERR_ROOT_DEGREE: "root degree must be a positive integer",
}

# Remainder steps smaller than this fraction of the step are skipped.
REMAINDER_SKIP = 1e-12


class _Frag:
    """A compiled term fragment: parallel opcode/arg lists plus constants."""

    __slots__ = ("codes", "args", "consts", "depth")

    def __init__(self):
        self.codes: list[int] = []
        self.args: list[int] = []
        self.consts: list[float] = []
        self.depth = 0


def _compile_into(term: Term, layout: StateLayout, frag: _Frag, depth: int) -> int:
    """Append postfix code for ``term``; returns the maximum stack depth."""
    if isinstance(term, NumConst):
        frag.codes.append(OP_CONST)
        frag.args.append(len(frag.consts))
        frag.consts.append(float(term.value))
        return depth + 1
    if isinstance(term, StateVar):
        frag.codes.append(OP_LOAD)
        frag.args.append(layout.vec_slot(term))
        return depth + 1
    if isinstance(term, ObjConst):
        raise ModelError(f"object constant {term.name!r} in numeric tape")
    if isinstance(term, Trig):
        d = _compile_into(term.operand, layout, frag, depth)
        frag.codes.append({"sin": OP_SIN, "cos": OP_COS, "tan": OP_TAN}[term.op])
        frag.args.append(0)
        return d
    if isinstance(term, Arith):
        op = term.op
        ops = term.operands
        if op == "-" and len(ops) == 1:
            d = _compile_into(ops[0], layout, frag, depth)
            frag.codes.append(OP_NEG)
            frag.args.append(0)
            return d
        if op in ("pow", "nthroot"):
            d1 = _compile_into(ops[0], layout, frag, depth)
            d2 = _compile_into(ops[1], layout, frag, depth + 1)
            frag.codes.append(OP_POW if op == "pow" else OP_ROOT)
            frag.args.append(0)
            return max(d1, d2)
        fold = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}[op]
        worst = _compile_into(ops[0], layout, frag, depth)
        for o in ops[1:]:
            worst = max(worst, _compile_into(o, layout, frag, depth + 1))
            frag.codes.append(fold)
            frag.args.append(0)
        return worst
    raise ModelError(f"cannot compile {term!r}")


def compile_term(term: Term, layout: StateLayout) -> _Frag:
    frag = _Frag()
    frag.depth = _compile_into(term, layout, frag, 0)
    return frag


@dataclass
class Program:
    """A set of compiled tapes over one layout: rate tapes (one per affected
    variable, superposed rates pre-summed in declaration order) followed by
    atom indicator tapes."""

    codes: np.ndarray          # int32[n_instr]
    args: np.ndarray           # int32[n_instr]
    starts: np.ndarray         # int32[n_tapes + 1]
    consts: np.ndarray         # float64
    rate_slots: np.ndarray     # int32[n_rate] vector slot per rate tape
    atom_rels: np.ndarray      # int32[n_atoms] REL_* code per atom tape
    stack_need: int
    vec_size: int
    _lists: tuple | None = field(default=None, repr=False)

    @property
    def n_rate(self) -> int:
        return len(self.rate_slots)

    @property
    def n_atoms(self) -> int:
        return len(self.atom_rels)

    def as_lists(self):
        """Plain-list mirror for the pure-Python kernel (built lazily)."""
        if self._lists is None:
            self._lists = (
                self.codes.tolist(),
                self.args.tolist(),
                self.starts.tolist(),
                self.consts.tolist(),
                self.rate_slots.tolist(),
                self.atom_rels.tolist(),
            )
        return self._lists


def assemble(
    layout: StateLayout,
    rates: list[tuple[int, list[Term]]],
    atoms: list[tuple[int, Term]] = (),
) -> Program:
    """Build a program from per-slot rate term lists and (rel, indicator) atoms.

    Multiple rates on one slot superpose: their tapes are joined by ADD in
    the given order, matching left-folded tree evaluation of a sum.
    """
    codes: list[int] = []
    args: list[int] = []
    starts: list[int] = [0]
    consts: list[float] = []
    stack_need = 1
    rate_slots: list[int] = []
    atom_rels: list[int] = []

    def push(frag: _Frag):
        nonlocal stack_need
        base = len(consts)
        codes.extend(frag.codes)
        args.extend(a + base if c == OP_CONST else a
                    for c, a in zip(frag.codes, frag.args))
        consts.extend(frag.consts)
        stack_need = max(stack_need, frag.depth)
        starts.append(len(codes))

    for slot, terms in rates:
        frag = _Frag()
        d = _compile_into(terms[0], layout, frag, 0)
        for t in terms[1:]:
            d = max(d, _compile_into(t, layout, frag, 1))
            frag.codes.append(OP_ADD)
            frag.args.append(0)
        frag.depth = d
        push(frag)
        rate_slots.append(slot)

    for rel, indicator in atoms:
        push(compile_term(indicator, layout))
        atom_rels.append(rel)

    return Program(
        codes=np.asarray(codes, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        starts=np.asarray(starts, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        rate_slots=np.asarray(rate_slots, dtype=np.int32),
        atom_rels=np.asarray(atom_rels, dtype=np.int32),
        stack_need=max(stack_need, 1),
        vec_size=layout.vec_size,
    )


def grid_points(duration: float, dh: float) -> tuple[int, float, bool]:
    """Decompose a duration into full steps plus an optional remainder.

    Returns (n_full, remainder, use_remainder); remainders below
    ``REMAINDER_SKIP * dh`` are skipped to avoid denormal steps.
    """
    n_full = int(duration / dh)
    rem = duration - n_full * dh
    use_rem = rem > REMAINDER_SKIP * dh
    return n_full, rem, use_rem
