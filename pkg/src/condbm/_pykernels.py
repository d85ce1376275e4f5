"""Pure-Python path kernels.

Reference implementation of the compiled kernels in ``_ckernels.pyx``. Both
draw their normals one at a time from the same bit generator and perform the
same floating point operations in the same order, so the two backends produce
identical paths for identical generator states.

Status codes: 0 ok, 1 domain could not be maintained, 2 non-finite drift,
4 attempts exhausted.
"""
import math

import numpy as np

from .analytic import halfline_log_grad
from .expr import eval_scalar

OK, EXIT_FAIL, NONFINITE, EXHAUSTED = 0, 1, 2, 4
MAX_HALVINGS = 10
MAX_DRIFT_HALVINGS = 60


def _drift(kind, t, y1, y2, T, ctx):
    if kind == 0:
        return halfline_log_grad(T - t, y1), 0.0
    if kind == 1:
        g = halfline_log_grad(2.0 * (T - t), y2 - y1)
        return -g, g
    tab, prog = ctx
    th = tab.theta_scalar(y1, y2)
    p1 = tab.pdf_scalar(y1)
    p2 = tab.pdf_scalar(y2)
    a1 = eval_scalar(prog, y1)
    a2 = eval_scalar(prog, y2)
    return -a1 - p1 / th, -a2 + p2 / th


def _em(kind, times, y0, T, tail, max_retries, gen, ctx, kappa):
    dim = 1 if kind == 0 else 2
    normal = gen.standard_normal
    t_out = [float(times[0])]
    y1 = float(y0[0])
    y2 = float(y0[1]) if dim == 2 else 0.0
    y_out = [(y1, y2)]
    retries = 0
    t = float(times[0])
    for k in range(1, len(times)):
        t_next = float(times[k])
        while t < t_next:
            b1, b2 = _drift(kind, t, y1, y2, T, ctx)
            if not (math.isfinite(b1) and math.isfinite(b2)):
                return t_out, y_out, retries, NONFINITE, t
            dt = t_next - t
            full = True
            # keep the drift displacement comparable to the noise: |b| sqrt(dt) <= kappa
            bmax = max(abs(b1), abs(b2))
            for _ in range(MAX_DRIFT_HALVINGS):
                if bmax * math.sqrt(dt) <= kappa:
                    break
                dt = 0.5 * dt
                full = False
            accepted = False
            for _ in range(MAX_HALVINGS + 1):
                sdt = math.sqrt(dt)
                for _ in range(max_retries + 1):
                    n1 = y1 + b1 * dt + sdt * normal()
                    if dim == 2:
                        n2 = y2 + b2 * dt + sdt * normal()
                        inside = n1 < n2
                    else:
                        n2 = 0.0
                        inside = n1 > 0.0
                    if inside:
                        accepted = True
                        break
                    retries += 1
                if accepted:
                    break
                dt = 0.5 * dt
                full = False
            if not accepted:
                return t_out, y_out, retries, EXIT_FAIL, t
            t = t_next if full else t + dt
            y1, y2 = n1, n2
            t_out.append(t)
            y_out.append((y1, y2))
    if tail > 0.0:
        st = math.sqrt(tail)
        accepted = False
        for _ in range(max_retries + 1):
            n1 = y1 + st * normal()
            if dim == 2:
                n2 = y2 + st * normal()
                inside = n1 < n2
            else:
                n2 = 0.0
                inside = n1 > 0.0
            if inside:
                accepted = True
                break
            retries += 1
        if not accepted:
            return t_out, y_out, retries, EXIT_FAIL, t
        t_out.append(T)
        y_out.append((n1, n2))
    return t_out, y_out, retries, OK, t


def _pack(res, dim):
    t_out, y_out, retries, status, t_fail = res
    y = np.array(y_out, dtype=float)[:, :dim]
    return np.array(t_out, dtype=float), y, retries, status, t_fail


def em_halfline(times, y0, T, tail, max_retries, gen, kappa=math.inf):
    """Euler scheme for the meander drift d/dy log gamma_{R+}(T - t, y)."""
    return _pack(_em(0, times, (y0,), T, tail, max_retries, gen, None, kappa), 1)


def em_wedge(times, y1, y2, T, tail, max_retries, gen, kappa=math.inf):
    return _pack(_em(1, times, (y1, y2), T, tail, max_retries, gen, None, kappa), 2)


def em_theta(times, y1, y2, table, prog, max_retries, gen, kappa=math.inf):
    """Pair drift -a(y_i) + d_i log theta(y1, y2); ``prog`` computes a."""
    return _pack(_em(2, times, (y1, y2), 0.0, 0.0, max_retries, gen, (table, prog), kappa), 2)


def reject_halfline(times, y0, max_attempts, gen):
    normal = gen.standard_normal
    m = len(times)
    sdts = [math.sqrt(float(times[k + 1]) - float(times[k])) for k in range(m - 1)]
    for attempt in range(1, max_attempts + 1):
        vals = [y0]
        y = y0
        alive = True
        for s in sdts:
            y = y + s * normal()
            if not y > 0.0:
                alive = False
                break
            vals.append(y)
        if alive:
            return np.array(vals), attempt, OK
    return None, max_attempts, EXHAUSTED


def reject_pair(times, x1, x2, max_attempts, gen, prog=None, bracket=math.nan):
    normal = gen.standard_normal
    m = len(times)
    dts = [float(times[k + 1]) - float(times[k]) for k in range(m - 1)]
    sdts = [math.sqrt(d) for d in dts]
    check_bracket = not math.isnan(bracket)
    for attempt in range(1, max_attempts + 1):
        vals = [(x1, x2)]
        y1, y2 = x1, x2
        alive = True
        for dt, s in zip(dts, sdts):
            if prog is not None:
                b1 = eval_scalar(prog, y1)
                b2 = eval_scalar(prog, y2)
                y1 = y1 + b1 * dt + s * normal()
                y2 = y2 + b2 * dt + s * normal()
            else:
                y1 = y1 + s * normal()
                y2 = y2 + s * normal()
            if not y1 < y2:
                alive = False
                break
            vals.append((y1, y2))
        if alive and check_bracket and not (y1 < bracket < y2):
            alive = False
        if alive:
            return np.array(vals), attempt, OK
    return None, max_attempts, EXHAUSTED


def coalesce(dt, n_steps, substeps, pos, labels, owner, gen, prog=None,
             record=False, stop_on_single=False):
    """Advance a coalescing particle system by ``n_steps`` steps of size ``dt``.

    ``pos``/``labels`` describe the live particles in order, ``owner`` maps each
    initial index to the label of its current survivor. Returns the updated
    state, the recorded trajectory (or None) and the number of steps taken.
    """
    normal = gen.standard_normal
    pos = [float(v) for v in pos]
    labels = [int(v) for v in labels]
    owner = np.array(owner, dtype=np.int64)
    n = len(owner)
    sub = dt / substeps
    ssub = math.sqrt(sub)
    traj = owners = None
    if record:
        traj = np.empty((n_steps + 1, n))
        owners = np.empty((n_steps + 1, n), dtype=np.int64)
        _record(traj, owners, 0, pos, labels, owner)
    steps = 0
    parent = np.arange(n, dtype=np.int64)
    for k in range(1, n_steps + 1):
        if stop_on_single and len(pos) == 1:
            break
        live = len(pos)
        start = list(pos)
        if prog is not None:
            drift = [eval_scalar(prog, v) * dt for v in start]
        else:
            drift = [0.0] * live
        noise = [0.0] * live
        for _ in range(substeps):
            for j in range(live):
                noise[j] = noise[j] + ssub * normal()
        for j in range(live):
            pos[j] = start[j] + drift[j] + noise[j]
        # merge sweep: a particle that reached or passed its left neighbour joins it
        sp_pos, sp_lab = [], []
        merged = False
        for j in range(live):
            x, lab = pos[j], labels[j]
            while sp_pos and sp_pos[-1] >= x:
                x = 0.5 * (sp_pos[-1] + x)
                parent[lab] = sp_lab[-1]
                lab = sp_lab[-1]
                sp_pos.pop()
                sp_lab.pop()
                merged = True
            sp_pos.append(x)
            sp_lab.append(lab)
        if merged:
            for j in range(n):
                o = owner[j]
                while parent[o] != o:
                    o = parent[o]
                owner[j] = o
        pos, labels = sp_pos, sp_lab
        steps = k
        if record:
            _record(traj, owners, k, pos, labels, owner)
    if record and steps < n_steps:
        traj = traj[:steps + 1]
        owners = owners[:steps + 1]
    return np.array(pos), np.array(labels, dtype=np.int64), owner, traj, owners, steps


def _record(traj, owners, k, pos, labels, owner):
    where = {lab: i for i, lab in enumerate(labels)}
    for j in range(len(owner)):
        traj[k, j] = pos[where[owner[j]]]
        owners[k, j] = owner[j]
