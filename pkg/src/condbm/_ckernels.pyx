# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels; see ``_pykernels`` for the reference semantics.

Every floating point operation below appears in the same order as in the
Python reference so that both backends give bit-identical paths.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport erf, exp, sqrt, tanh, floor, fabs, isfinite, isnan, NAN, INFINITY
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t

cnp.import_array()

cdef extern from "numpy/random/distributions.h":
    double random_standard_normal(bitgen_t *bitgen_state) nogil

cdef enum:
    MAX_STACK = 40
    MAX_HALVINGS = 10
    MAX_DRIFT_HALVINGS = 60

cdef enum:
    OK = 0
    EXIT_FAIL = 1
    NONFINITE = 2
    OVERFLOW = 3
    EXHAUSTED = 4

cdef double SQRT_HALF_PI = sqrt(3.141592653589793 / 2.0)
cdef double INV_SQRT2 = 1.0 / sqrt(2.0)
cdef double ASYMPTOTE_CUTOFF = 1e-8

# opcodes, kept in sync with condbm.expr
cdef enum:
    OP_CONST = 0
    OP_X = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_NEG = 6
    OP_EXP = 7
    OP_TANH = 8


cdef struct Prog:
    int n
    const int *ops
    const double *consts


cdef struct Table:
    double x0
    double h
    long n            # number of nodes
    const double *log_pi
    const double *dlog_pi
    const double *cdf
    const double *sf
    const double *pdf
    double mode
    double lo
    double hi
    double total_mass
    double small_gap
    const double *gl_x
    const double *gl_w


cdef inline double eval_prog(const Prog *p, double x) noexcept nogil:
    cdef double stack[MAX_STACK]
    cdef int sp = 0
    cdef int i, op
    cdef double a, b
    for i in range(p.n):
        op = p.ops[i]
        if op == OP_CONST:
            stack[sp] = p.consts[i]
            sp += 1
        elif op == OP_X:
            stack[sp] = x
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_EXP:
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == OP_TANH:
            stack[sp - 1] = tanh(stack[sp - 1])
        else:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            if op == OP_ADD:
                stack[sp - 1] = a + b
            elif op == OP_SUB:
                stack[sp - 1] = a - b
            elif op == OP_MUL:
                stack[sp - 1] = a * b
            else:
                stack[sp - 1] = a / b
    return stack[0]


cdef double DRIFT_FLOOR = 5e-324


cdef inline double halfline_grad(double s, double d) noexcept nogil:
    cdef double rs = sqrt(s)
    cdef double u = d / rs
    cdef double e, g, inv
    if u < ASYMPTOTE_CUTOFF:
        return 1.0 / d
    e = SQRT_HALF_PI * erf(u * INV_SQRT2)
    g = exp(-0.5 * u * u) / (rs * e)
    if g < DRIFT_FLOOR:
        g = DRIFT_FLOOR
    inv = 1.0 / d
    return g if g < inv else inv


cdef inline double hermite(double x, double x0, double h, const double *f, const double *d,
                           long nnodes) noexcept nogil:
    cdef double tau = (x - x0) / h
    cdef long i = <long>floor(tau)
    cdef long n = nnodes - 1
    cdef double s, h00, h10, h01, h11
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    s = tau - i
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    return h00 * f[i] + h10 * h * d[i] + h01 * f[i + 1] + h11 * h * d[i + 1]


cdef inline double tab_pdf(const Table *T, double v) noexcept nogil:
    if v < T.lo or v > T.hi:
        return 0.0
    return exp(hermite(v, T.x0, T.h, T.log_pi, T.dlog_pi, T.n))


cdef inline double tab_cdf(const Table *T, double v) noexcept nogil:
    if v <= T.lo:
        return 0.0
    if v >= T.hi:
        return T.total_mass
    return hermite(v, T.x0, T.h, T.cdf, T.pdf, T.n)


cdef inline double neg_hermite_sf(const Table *T, double v) noexcept nogil:
    # survival function pieces use derivative -pdf; same arithmetic as passing the negated array
    cdef double tau = (v - T.x0) / T.h
    cdef long i = <long>floor(tau)
    cdef long n = T.n - 1
    cdef double s, h00, h10, h01, h11
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    s = tau - i
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    return h00 * T.sf[i] + h10 * T.h * (-T.pdf[i]) + h01 * T.sf[i + 1] + h11 * T.h * (-T.pdf[i + 1])


cdef inline double tab_sf(const Table *T, double v) noexcept nogil:
    if v <= T.lo:
        return T.total_mass
    if v >= T.hi:
        return 0.0
    return neg_hermite_sf(T, v)


cdef inline double tab_theta(const Table *T, double y1, double y2) noexcept nogil:
    cdef double gap = y2 - y1
    cdef double half, mid, acc
    cdef int k
    if gap <= T.small_gap * T.h:
        half = 0.5 * gap
        mid = y1 + half
        acc = 0.0
        for k in range(8):
            acc += T.gl_w[k] * tab_pdf(T, mid + half * T.gl_x[k])
        return acc * half
    if y1 >= T.mode:
        return tab_sf(T, y1) - tab_sf(T, y2)
    if y2 <= T.mode:
        return tab_cdf(T, y2) - tab_cdf(T, y1)
    return (1.0 - tab_cdf(T, y1)) - tab_sf(T, y2)


cdef inline void drift2(int kind, double t, double y1, double y2, double Th,
                        const Table *tab, const Prog *prog,
                        double *b1, double *b2) noexcept nogil:
    cdef double g, th, p1, p2, a1, a2
    if kind == 0:
        b1[0] = halfline_grad(Th - t, y1)
        b2[0] = 0.0
    elif kind == 1:
        g = halfline_grad(2.0 * (Th - t), y2 - y1)
        b1[0] = -g
        b2[0] = g
    else:
        th = tab_theta(tab, y1, y2)
        p1 = tab_pdf(tab, y1)
        p2 = tab_pdf(tab, y2)
        a1 = eval_prog(prog, y1)
        a2 = eval_prog(prog, y2)
        b1[0] = -a1 - p1 / th
        b2[0] = -a2 + p2 / th


cdef int em_core(int kind, const double[::1] times, double y1, double y2, double Th, double tail,
                 int max_retries, double kappa, bitgen_t *rng, const Table *tab, const Prog *prog,
                 double[::1] t_out, double[:, ::1] y_out, long *n_out, long *retries,
                 double *t_fail) noexcept nogil:
    cdef long cap = t_out.shape[0]
    cdef long m = times.shape[0]
    cdef long k, cnt = 1
    cdef int dim = 1 if kind == 0 else 2
    cdef int h, r
    cdef bint full, accepted, inside
    cdef double t = times[0]
    cdef double t_next, b1, b2, bmax, dt, sdt, n1 = 0.0, n2 = 0.0, st
    t_out[0] = t
    y_out[0, 0] = y1
    y_out[0, 1] = y2
    retries[0] = 0
    for k in range(1, m):
        t_next = times[k]
        while t < t_next:
            drift2(kind, t, y1, y2, Th, tab, prog, &b1, &b2)
            if not (isfinite(b1) and isfinite(b2)):
                n_out[0] = cnt
                t_fail[0] = t
                return NONFINITE
            dt = t_next - t
            full = True
            bmax = fabs(b1)
            if fabs(b2) > bmax:
                bmax = fabs(b2)
            for h in range(MAX_DRIFT_HALVINGS):
                if bmax * sqrt(dt) <= kappa:
                    break
                dt = 0.5 * dt
                full = False
            accepted = False
            for h in range(MAX_HALVINGS + 1):
                sdt = sqrt(dt)
                for r in range(max_retries + 1):
                    n1 = y1 + b1 * dt + sdt * random_standard_normal(rng)
                    if dim == 2:
                        n2 = y2 + b2 * dt + sdt * random_standard_normal(rng)
                        inside = n1 < n2
                    else:
                        n2 = 0.0
                        inside = n1 > 0.0
                    if inside:
                        accepted = True
                        break
                    retries[0] += 1
                if accepted:
                    break
                dt = 0.5 * dt
                full = False
            if not accepted:
                n_out[0] = cnt
                t_fail[0] = t
                return EXIT_FAIL
            if full:
                t = t_next
            else:
                t = t + dt
            y1 = n1
            y2 = n2
            if cnt >= cap - 1:
                n_out[0] = cnt
                return OVERFLOW
            t_out[cnt] = t
            y_out[cnt, 0] = y1
            y_out[cnt, 1] = y2
            cnt += 1
    if tail > 0.0:
        st = sqrt(tail)
        accepted = False
        for r in range(max_retries + 1):
            n1 = y1 + st * random_standard_normal(rng)
            if dim == 2:
                n2 = y2 + st * random_standard_normal(rng)
                inside = n1 < n2
            else:
                n2 = 0.0
                inside = n1 > 0.0
            if inside:
                accepted = True
                break
            retries[0] += 1
        if not accepted:
            n_out[0] = cnt
            t_fail[0] = t
            return EXIT_FAIL
        t_out[cnt] = Th
        y_out[cnt, 0] = n1
        y_out[cnt, 1] = n2
        cnt += 1
    n_out[0] = cnt
    t_fail[0] = t
    return OK


cdef bitgen_t *_bitgen(gen) except NULL:
    capsule = gen.bit_generator.capsule
    return <bitgen_t *>PyCapsule_GetPointer(capsule, "BitGenerator")


cdef object _run_em(int kind, times, double y1, double y2, double Th, double tail,
                    int max_retries, double kappa, gen, Table *tab, Prog *prog):
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef bitgen_t *rng = _bitgen(gen)
    cdef long cap = 2 * tv.shape[0] + 32
    cdef long n_out = 0, retries = 0
    cdef double t_fail = 0.0
    cdef int status
    cdef double[::1] t_out
    cdef double[:, ::1] y_out
    bg = gen.bit_generator
    lock = bg.lock
    with lock:
        saved = bg.state
        while True:
            t_arr = np.empty(cap)
            y_arr = np.empty((cap, 2))
            t_out = t_arr
            y_out = y_arr
            with nogil:
                status = em_core(kind, tv, y1, y2, Th, tail, max_retries, kappa, rng, tab, prog,
                                 t_out, y_out, &n_out, &retries, &t_fail)
            if status != OVERFLOW:
                break
            bg.state = saved      # replay from the same state with more room
            cap *= 4
    dim = 1 if kind == 0 else 2
    return t_arr[:n_out].copy(), y_arr[:n_out, :dim].copy(), int(retries), int(status), float(t_fail)


def em_halfline(times, double y0, double T, double tail, int max_retries, gen,
                double kappa=INFINITY):
    return _run_em(0, times, y0, 0.0, T, tail, max_retries, kappa, gen, NULL, NULL)


def em_wedge(times, double y1, double y2, double T, double tail, int max_retries, gen,
             double kappa=INFINITY):
    return _run_em(1, times, y1, y2, T, tail, max_retries, kappa, gen, NULL, NULL)


cdef class _ThetaCtx:
    cdef Table tab
    cdef Prog prog
    cdef object keep

    def __init__(self, table, prog):
        cdef const double[::1] log_pi = np.ascontiguousarray(table.log_pi)
        cdef const double[::1] dlog_pi = np.ascontiguousarray(table.dlog_pi)
        cdef const double[::1] cdf = np.ascontiguousarray(table.cdf_nodes)
        cdef const double[::1] sf = np.ascontiguousarray(table.sf_nodes)
        cdef const double[::1] pdf = np.ascontiguousarray(table.pdf_nodes)
        from .analytic import GL8_NODES, GL8_WEIGHTS
        cdef const double[::1] glx = np.asarray(GL8_NODES, dtype=np.float64)
        cdef const double[::1] glw = np.asarray(GL8_WEIGHTS, dtype=np.float64)
        cdef const int[::1] ops = np.ascontiguousarray(prog.ops, dtype=np.int32)
        cdef const double[::1] consts = np.ascontiguousarray(prog.consts, dtype=np.float64)
        self.keep = (log_pi, dlog_pi, cdf, sf, pdf, glx, glw, ops, consts)
        self.tab.x0 = table.x0
        self.tab.h = table.h
        self.tab.n = log_pi.shape[0]
        self.tab.log_pi = &log_pi[0]
        self.tab.dlog_pi = &dlog_pi[0]
        self.tab.cdf = &cdf[0]
        self.tab.sf = &sf[0]
        self.tab.pdf = &pdf[0]
        self.tab.mode = table.mode
        self.tab.lo = table.lo
        self.tab.hi = table.hi
        self.tab.total_mass = table.total_mass
        self.tab.small_gap = table.small_gap_cells
        self.tab.gl_x = &glx[0]
        self.tab.gl_w = &glw[0]
        self.prog.n = ops.shape[0]
        self.prog.ops = &ops[0]
        self.prog.consts = &consts[0]


def em_theta(times, double y1, double y2, table, prog, int max_retries, gen,
             double kappa=INFINITY):
    ctx = _ThetaCtx(table, prog)
    return _run_em_ctx(times, y1, y2, max_retries, kappa, gen, ctx)


cdef object _run_em_ctx(times, double y1, double y2, int max_retries, double kappa, gen,
                        _ThetaCtx ctx):
    return _run_em(2, times, y1, y2, 0.0, 0.0, max_retries, kappa, gen, &ctx.tab, &ctx.prog)


def theta_scalar(table, double y1, double y2):
    """Compiled theta, exposed for backend-equivalence tests."""
    from .expr import compile_expr
    ctx = _ThetaCtx(table, compile_expr("x"))
    return _theta_ctx(ctx, y1, y2)


cdef double _theta_ctx(_ThetaCtx ctx, double y1, double y2):
    return tab_theta(&ctx.tab, y1, y2)


def eval_program(prog, double x):
    cdef const int[::1] ops = np.ascontiguousarray(prog.ops, dtype=np.int32)
    cdef const double[::1] consts = np.ascontiguousarray(prog.consts, dtype=np.float64)
    cdef Prog p
    p.n = ops.shape[0]
    p.ops = &ops[0]
    p.consts = &consts[0]
    return eval_prog(&p, x)


# --------------------------------------------------------------------------
# rejection samplers

cdef int reject1_core(const double[::1] sdts, double y0, long max_attempts, bitgen_t *rng,
                      double[::1] vals, long *attempts) noexcept nogil:
    cdef long a, k
    cdef long m = sdts.shape[0]
    cdef double y
    cdef bint alive
    for a in range(1, max_attempts + 1):
        vals[0] = y0
        y = y0
        alive = True
        for k in range(m):
            y = y + sdts[k] * random_standard_normal(rng)
            if not y > 0.0:
                alive = False
                break
            vals[k + 1] = y
        if alive:
            attempts[0] = a
            return OK
    attempts[0] = max_attempts
    return EXHAUSTED


def reject_halfline(times, double y0, long max_attempts, gen):
    t = np.asarray(times, dtype=np.float64)
    sd = np.sqrt(np.diff(t))
    cdef const double[::1] sdts = sd
    vals_arr = np.empty(len(t))
    cdef double[::1] vals = vals_arr
    cdef long attempts = 0
    cdef int status
    cdef bitgen_t *rng = _bitgen(gen)
    with gen.bit_generator.lock:
        with nogil:
            status = reject1_core(sdts, y0, max_attempts, rng, vals, &attempts)
    if status != OK:
        return None, int(attempts), int(status)
    return vals_arr, int(attempts), int(status)


cdef int reject2_core(const double[::1] dts, const double[::1] sdts, double x1, double x2,
                      long max_attempts, bitgen_t *rng, const Prog *prog, double bracket,
                      double[:, ::1] vals, long *attempts) noexcept nogil:
    cdef long a, k
    cdef long m = dts.shape[0]
    cdef double y1, y2, b1, b2, dt, s
    cdef bint alive
    cdef bint check_bracket = not isnan(bracket)
    for a in range(1, max_attempts + 1):
        vals[0, 0] = x1
        vals[0, 1] = x2
        y1 = x1
        y2 = x2
        alive = True
        for k in range(m):
            dt = dts[k]
            s = sdts[k]
            if prog != NULL:
                b1 = eval_prog(prog, y1)
                b2 = eval_prog(prog, y2)
                y1 = y1 + b1 * dt + s * random_standard_normal(rng)
                y2 = y2 + b2 * dt + s * random_standard_normal(rng)
            else:
                y1 = y1 + s * random_standard_normal(rng)
                y2 = y2 + s * random_standard_normal(rng)
            if not y1 < y2:
                alive = False
                break
            vals[k + 1, 0] = y1
            vals[k + 1, 1] = y2
        if alive and check_bracket and not (y1 < bracket and bracket < y2):
            alive = False
        if alive:
            attempts[0] = a
            return OK
    attempts[0] = max_attempts
    return EXHAUSTED


def reject_pair(times, double x1, double x2, long max_attempts, gen, prog=None, double bracket=NAN):
    t = np.asarray(times, dtype=np.float64)
    d = np.diff(t)
    sd = np.sqrt(d)
    cdef const double[::1] dts = d
    cdef const double[::1] sdts = sd
    vals_arr = np.empty((len(t), 2))
    cdef double[:, ::1] vals = vals_arr
    cdef long attempts = 0
    cdef int status
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Prog p
    cdef Prog *pp = NULL
    cdef const int[::1] ops
    cdef const double[::1] consts
    if prog is not None:
        ops = np.ascontiguousarray(prog.ops, dtype=np.int32)
        consts = np.ascontiguousarray(prog.consts, dtype=np.float64)
        p.n = ops.shape[0]
        p.ops = &ops[0]
        p.consts = &consts[0]
        pp = &p
    with gen.bit_generator.lock:
        with nogil:
            status = reject2_core(dts, sdts, x1, x2, max_attempts, rng, pp, bracket, vals, &attempts)
    if status != OK:
        return None, int(attempts), int(status)
    return vals_arr, int(attempts), int(status)


# --------------------------------------------------------------------------
# coalescing particle system

cdef long coalesce_core(double dt, long n_steps, int substeps, double *pos, long *labels,
                        long *live_p, long[::1] owner, long *parent, double *start,
                        double *drift, double *noise, bitgen_t *rng, const Prog *prog,
                        bint record, double[:, ::1] traj, long[:, ::1] owners,
                        long *where, bint stop_on_single) noexcept nogil:
    cdef long n = owner.shape[0]
    cdef long live = live_p[0]
    cdef long k, j, s, top, lab, o, steps = 0
    cdef double sub = dt / substeps
    cdef double ssub = sqrt(sub)
    cdef double x
    cdef bint merged
    for k in range(1, n_steps + 1):
        if stop_on_single and live == 1:
            break
        for j in range(live):
            start[j] = pos[j]
        if prog != NULL:
            for j in range(live):
                drift[j] = eval_prog(prog, start[j]) * dt
        else:
            for j in range(live):
                drift[j] = 0.0
        for j in range(live):
            noise[j] = 0.0
        for s in range(substeps):
            for j in range(live):
                noise[j] = noise[j] + ssub * random_standard_normal(rng)
        for j in range(live):
            pos[j] = start[j] + drift[j] + noise[j]
        # merge sweep in place; entries [0, top) form the stack
        top = 0
        merged = False
        for j in range(live):
            x = pos[j]
            lab = labels[j]
            while top > 0 and pos[top - 1] >= x:
                x = 0.5 * (pos[top - 1] + x)
                parent[lab] = labels[top - 1]
                lab = labels[top - 1]
                top -= 1
                merged = True
            pos[top] = x
            labels[top] = lab
            top += 1
        live = top
        if merged:
            for j in range(n):
                o = owner[j]
                while parent[o] != o:
                    o = parent[o]
                owner[j] = o
        steps = k
        if record:
            record_state(traj, owners, k, pos, labels, live, owner, where)
    live_p[0] = live
    return steps


cdef void record_state(double[:, ::1] traj, long[:, ::1] owners, long k, double *pos,
                       long *labels, long live, long[::1] owner, long *where) noexcept nogil:
    cdef long j
    for j in range(live):
        where[labels[j]] = j
    for j in range(owner.shape[0]):
        traj[k, j] = pos[where[owner[j]]]
        owners[k, j] = owner[j]


def coalesce(double dt, long n_steps, int substeps, pos, labels, owner, gen, prog=None,
             bint record=False, bint stop_on_single=False):
    owner_arr = np.array(owner, dtype=np.int64)
    cdef long[::1] own = owner_arr
    cdef long n = own.shape[0]
    cdef long live = len(pos)
    cdef long j, steps
    cdef double *p = <double *>malloc(max(live, 1) * sizeof(double) * 4)
    cdef long *lab = <long *>malloc(max(n, 1) * sizeof(long) * 3)
    if p == NULL or lab == NULL:
        free(p)
        free(lab)
        raise MemoryError()
    cdef double *start = p + live
    cdef double *drift = p + 2 * live
    cdef double *noise = p + 3 * live
    cdef long *parent = lab + n
    cdef long *where = lab + 2 * n
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Prog pr
    cdef Prog *pp = NULL
    cdef const int[::1] ops
    cdef const double[::1] consts
    cdef double[:, ::1] traj
    cdef long[:, ::1] owners
    if prog is not None:
        ops = np.ascontiguousarray(prog.ops, dtype=np.int32)
        consts = np.ascontiguousarray(prog.consts, dtype=np.float64)
        pr.n = ops.shape[0]
        pr.ops = &ops[0]
        pr.consts = &consts[0]
        pp = &pr
    for j in range(live):
        p[j] = float(pos[j])
        lab[j] = int(labels[j])
    for j in range(n):
        parent[j] = j
    traj_arr = owners_arr = None
    if record:
        traj_arr = np.empty((n_steps + 1, n))
        owners_arr = np.empty((n_steps + 1, n), dtype=np.int64)
        traj = traj_arr
        owners = owners_arr
        record_state(traj, owners, 0, p, lab, live, own, where)
    else:
        traj = np.empty((1, 1))
        owners = np.empty((1, 1), dtype=np.int64)
    try:
        with gen.bit_generator.lock:
            with nogil:
                steps = coalesce_core(dt, n_steps, substeps, p, lab, &live, own, parent, start,
                                      drift, noise, rng, pp, record, traj, owners, where,
                                      stop_on_single)
        out_pos = np.array([p[j] for j in range(live)])
        out_lab = np.array([lab[j] for j in range(live)], dtype=np.int64)
    finally:
        free(p)
        free(lab)
    if record and steps < n_steps:
        traj_arr = traj_arr[:steps + 1]
        owners_arr = owners_arr[:steps + 1]
    return out_pos, out_lab, owner_arr, traj_arr, owners_arr, int(steps)
