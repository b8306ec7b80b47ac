# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel: tape evaluation, integration steps, crossing scans.

Semantics mirror ``_pycore`` instruction for instruction (same operation
order, same libm calls), so both kernels produce bit-identical results; the
test suite and scripts/benchmark_kernel.py assert it.
"""

from libc.math cimport pow as c_pow, sin as c_sin, cos as c_cos, tan as c_tan
from libc.math cimport floor as c_floor, fabs
from libc.stdlib cimport free, malloc

cdef enum:
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

cdef enum:
    REL_LT = 0
    REL_LE = 1
    REL_GT = 2
    REL_GE = 3

cdef enum:
    METHOD_EULER = 0
    METHOD_RK22 = 1
    METHOD_IEULER = 2

cdef enum:
    ST_OK = 0
    ST_CROSSED = 1
    ST_EVAL_ERROR = 2
    ST_NO_CONVERGENCE = 3

cdef enum:
    ERR_NONE = 0
    ERR_DIV_ZERO = 1
    ERR_POW_DOMAIN = 2
    ERR_ROOT_DOMAIN = 3
    ERR_NONFINITE = 4
    ERR_ROOT_DEGREE = 5

cdef double REMAINDER_SKIP = 1e-12


cdef int _eval(const int[::1] codes, const int[::1] args, const double[::1] consts,
               int i, int end, double* vec, double* stack, double* out) noexcept nogil:
    cdef int sp = 0
    cdef int op
    cdef double v, d, b, e, x, deg
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
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_SUB:
            sp -= 1
            v = stack[sp - 1] - stack[sp]
            if v - v != 0.0:
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_MUL:
            sp -= 1
            v = stack[sp - 1] * stack[sp]
            if v - v != 0.0:
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_DIV:
            sp -= 1
            d = stack[sp]
            if d == 0.0:
                return ERR_DIV_ZERO
            v = stack[sp - 1] / d
            if v - v != 0.0:
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_POW:
            sp -= 1
            b = stack[sp - 1]
            e = stack[sp]
            if b < 0.0 and e != c_floor(e):
                return ERR_POW_DOMAIN
            v = c_pow(b, e)
            if v - v != 0.0:
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_ROOT:
            sp -= 1
            x = stack[sp - 1]
            deg = stack[sp]
            if deg != c_floor(deg) or deg < 1.0:
                return ERR_ROOT_DEGREE
            if x < 0.0:
                if (<long long> deg) % 2 == 0:
                    return ERR_ROOT_DOMAIN
                v = -c_pow(-x, 1.0 / deg)
            else:
                v = c_pow(x, 1.0 / deg)
            if v - v != 0.0:
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_SIN:
            stack[sp - 1] = c_sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = c_cos(stack[sp - 1])
        elif op == OP_TAN:
            v = c_tan(stack[sp - 1])
            if v - v != 0.0:
                return ERR_NONFINITE
            stack[sp - 1] = v
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        i += 1
    out[0] = stack[0]
    return ERR_NONE


def eval_tape(prog, int index, vec):
    """Evaluate one tape against a vector; returns (err_code, value)."""
    cdef const int[::1] codes = prog.codes
    cdef const int[::1] args = prog.args
    cdef const int[::1] starts = prog.starts
    cdef const double[::1] consts = prog.consts
    cdef int m = len(vec)
    cdef int need = prog.stack_need
    cdef double* cvec = <double*> malloc(m * sizeof(double))
    cdef double* stack = <double*> malloc(need * sizeof(double))
    cdef double out = 0.0
    cdef int k, err
    if cvec == NULL or stack == NULL:
        free(cvec)
        free(stack)
        raise MemoryError()
    try:
        for k in range(m):
            cvec[k] = vec[k]
        err = _eval(codes, args, consts, starts[index], starts[index + 1],
                    cvec, stack, &out)
        return err, (float("nan") if err else out)
    finally:
        free(cvec)
        free(stack)


cdef bint _atom_true(int rel, double v) noexcept nogil:
    if rel == REL_LT:
        return v < 0.0
    if rel == REL_LE:
        return v <= 0.0
    if rel == REL_GT:
        return v > 0.0
    return v >= 0.0


def scan(prog, int method, start_vec, double t0, double duration, double dh,
         double eps, int max_iters, bint want_trace):
    """Counterpart of ``_pycore.scan`` with identical result tuples."""
    cdef const int[::1] codes = prog.codes
    cdef const int[::1] args = prog.args
    cdef const int[::1] starts = prog.starts
    cdef const double[::1] consts = prog.consts
    cdef const int[::1] rate_slots = prog.rate_slots
    cdef const int[::1] atom_rels = prog.atom_rels
    cdef int n_rate = rate_slots.shape[0]
    cdef int n_atoms = atom_rels.shape[0]
    cdef int m = len(start_vec)
    cdef int need = prog.stack_need

    cdef double* vec = <double*> malloc(m * sizeof(double))
    cdef double* last_good = <double*> malloc(m * sizeof(double))
    cdef double* buf_a = <double*> malloc(m * sizeof(double))
    cdef double* buf_b = <double*> malloc(m * sizeof(double))
    cdef double* stack = <double*> malloc(need * sizeof(double))
    cdef double* rates = <double*> malloc((n_rate if n_rate else 1) * sizeof(double))
    cdef double* margins = <double*> malloc((n_atoms if n_atoms else 1) * sizeof(double))
    if (vec == NULL or last_good == NULL or buf_a == NULL or buf_b == NULL
            or stack == NULL or rates == NULL or margins == NULL):
        free(vec); free(last_good); free(buf_a); free(buf_b)
        free(stack); free(rates); free(margins)
        raise MemoryError()

    trace = [] if want_trace else None
    cdef int k, r, i, j, err, bad, status, steps, bad_atom
    cdef int n_full, total
    cdef double rem, h, t_next, v, delta, dd, av
    cdef double* cur
    cdef double* nxt
    cdef double* tmp
    cdef bint converged

    try:
        for k in range(m):
            vec[k] = start_vec[k]
            last_good[k] = vec[k]
        for k in range(n_atoms):
            margins[k] = float("inf")

        n_full = <int> (duration / dh)
        rem = duration - n_full * dh
        total = n_full + (1 if rem > REMAINDER_SKIP * dh else 0)

        # point 0: the start state
        err = 0
        bad = -1
        for k in range(n_atoms):
            err = _eval(codes, args, consts, starts[n_rate + k],
                        starts[n_rate + k + 1], vec, stack, &v)
            if err:
                break
            av = fabs(v)
            if av < margins[k]:
                margins[k] = av
            if bad < 0 and not _atom_true(atom_rels[k], v):
                bad = k
        if err:
            return _result(ST_EVAL_ERROR, 0, -1, err, vec, last_good, margins,
                           trace, m, n_atoms)
        if bad >= 0:
            return _result(ST_CROSSED, 0, bad, 0, vec, last_good, margins,
                           trace, m, n_atoms)

        for i in range(total):
            if i < n_full:
                h = dh
                t_next = t0 + (i + 1) * dh
            else:
                h = rem
                t_next = t0 + duration

            if method == METHOD_EULER:
                err = 0
                for r in range(n_rate):
                    err = _eval(codes, args, consts, starts[r], starts[r + 1],
                                vec, stack, &rates[r])
                    if err:
                        break
                if err == 0:
                    for r in range(n_rate):
                        vec[rate_slots[r]] += h * rates[r]
            elif method == METHOD_RK22:
                err = 0
                for r in range(n_rate):
                    err = _eval(codes, args, consts, starts[r], starts[r + 1],
                                vec, stack, &rates[r])
                    if err:
                        break
                if err == 0:
                    for k in range(m):
                        buf_a[k] = vec[k]
                    for r in range(n_rate):
                        buf_a[rate_slots[r]] += (h * 0.5) * rates[r]
                    buf_a[0] = vec[0] + h * 0.5
                    for r in range(n_rate):
                        err = _eval(codes, args, consts, starts[r], starts[r + 1],
                                    buf_a, stack, &rates[r])
                        if err:
                            break
                    if err == 0:
                        for r in range(n_rate):
                            vec[rate_slots[r]] += h * rates[r]
            elif method == METHOD_IEULER:
                err = 0
                for r in range(n_rate):
                    err = _eval(codes, args, consts, starts[r], starts[r + 1],
                                vec, stack, &rates[r])
                    if err:
                        break
                if err == 0:
                    cur = buf_a
                    nxt = buf_b
                    for k in range(m):
                        cur[k] = vec[k]
                    for r in range(n_rate):
                        cur[rate_slots[r]] += h * rates[r]
                    cur[0] = t_next
                    converged = False
                    for j in range(max_iters):
                        for r in range(n_rate):
                            err = _eval(codes, args, consts, starts[r],
                                        starts[r + 1], cur, stack, &rates[r])
                            if err:
                                break
                        if err:
                            break
                        for k in range(m):
                            nxt[k] = cur[k]
                        delta = 0.0
                        for r in range(n_rate):
                            v = vec[rate_slots[r]] + h * rates[r]
                            dd = v - cur[rate_slots[r]]
                            if dd < 0.0:
                                dd = -dd
                            if dd > delta:
                                delta = dd
                            nxt[rate_slots[r]] = v
                        tmp = cur
                        cur = nxt
                        nxt = tmp
                        if delta < eps:
                            converged = True
                            break
                    if err == 0 and not converged:
                        return _result(ST_NO_CONVERGENCE, i, -1, 0, vec,
                                       last_good, margins, trace, m, n_atoms)
                    if err == 0:
                        for k in range(m):
                            vec[k] = cur[k]
            else:
                return _result(ST_EVAL_ERROR, i, -1, 99, vec, last_good,
                               margins, trace, m, n_atoms)

            if err:
                return _result(ST_EVAL_ERROR, i, -1, err, vec, last_good,
                               margins, trace, m, n_atoms)

            vec[0] = t_next
            if want_trace:
                trace.append([vec[k] for k in range(m)])

            bad = -1
            for k in range(n_atoms):
                err = _eval(codes, args, consts, starts[n_rate + k],
                            starts[n_rate + k + 1], vec, stack, &v)
                if err:
                    break
                av = fabs(v)
                if av < margins[k]:
                    margins[k] = av
                if bad < 0 and not _atom_true(atom_rels[k], v):
                    bad = k
            if err:
                return _result(ST_EVAL_ERROR, i + 1, -1, err, vec, last_good,
                               margins, trace, m, n_atoms)
            if bad >= 0:
                return _result(ST_CROSSED, i + 1, bad, 0, vec, last_good,
                               margins, trace, m, n_atoms)
            for k in range(m):
                last_good[k] = vec[k]

        return _result(ST_OK, total, -1, 0, vec, last_good, margins, trace,
                       m, n_atoms)
    finally:
        free(vec); free(last_good); free(buf_a); free(buf_b)
        free(stack); free(rates); free(margins)


cdef _result(int status, int steps, int bad_atom, int err_code, double* vec,
             double* last_good, double* margins, trace, int m, int n_atoms):
    return (status, steps, bad_atom, err_code,
            [vec[k] for k in range(m)],
            [last_good[k] for k in range(m)],
            [margins[k] for k in range(n_atoms)],
            trace)
