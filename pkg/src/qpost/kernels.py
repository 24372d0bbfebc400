"""Hot loops: trans-dimensional chain steps, Gibbs sweeps, oracle grid sums.

Every kernel takes its random numbers as pre-drawn arrays so that the jitted
and the plain-numpy paths (``QPOST_DISABLE_NUMBA=1``) walk the same chain.
The ``*_py`` names are always the undecorated functions; the benchmark uses
them to time both paths in one process.
"""
import math

import numpy as np
from scipy.special import erfc

from ._accel import USING_NUMBA, njit

# move-statistics layout: proposed/accepted for birth, death, random walk
BIRTH, DEATH, RW = 0, 1, 2
TARGET_ACCEPT = 0.3
LOG_SCALE_BOUNDS = (-12.0, 4.0)


def _log1pexp(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _loglik_py(y, eta):
    if eta.shape[0] == 0:
        return 0.0
    return float(np.dot(y, eta) - np.sum(np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))))


_loglik = njit(_loglik_py)


def _log_birth_ratio_py(t, rho, w, rho2):
    """log slab(t) - log q(t) for the birth mixture q = (1-w) slab + w Laplace(rho2)."""
    if w == 0.0:
        return 0.0
    a = abs(t)
    ls = math.log(0.5 * rho) - rho * a
    lw = math.log(0.5 * rho2) - rho2 * a
    m = max(ls, lw)
    lq = m + math.log((1.0 - w) * math.exp(ls - m) + w * math.exp(lw - m))
    return ls - lq


_log_birth_ratio = njit(_log_birth_ratio_py)


def chain_block_py(
    XT, y, theta, active, eta, block, block_size, size_logw, rho, p_flip, birth_w, birth_rho,
    state, u_move, u_coord, u_acc, u_birth, z,
    it0, burnin, thin, adapt,
    incl, size_hist, s_theta, s_sq, s_abs, moves, draws, draw_pos,
):
    """Advance the chain by len(u_move) iterations, updating state in place.

    ``state`` holds [loglik, log_scale, n_rw_adapt, l0]; ``draw_pos`` is a
    one-element counter into ``draws``. With ``birth_w > 0`` births draw from
    the Laplace(``birth_rho``) component with that probability, and both
    jump moves carry the slab/proposal density ratio.
    """
    d = theta.shape[0]
    loglik = state[0]
    log_scale = state[1]
    t_adapt = state[2]
    l0 = int(state[3])
    for b in range(u_move.shape[0]):
        it = it0 + b
        if u_move[b] < p_flip:
            j = min(int(u_coord[b] * d), d - 1)
            blk = block[j]
            s = block_size[blk]
            if active[j]:
                moves[DEATH, 0] += 1
                eta_new = eta - XT[j] * theta[j]
                ll_new = _loglik(y, eta_new)
                log_a = ll_new - loglik + size_logw[blk, s - 1] - size_logw[blk, s]
                log_a -= _log_birth_ratio(theta[j], rho, birth_w, birth_rho)
                if math.log(u_acc[b]) < log_a:
                    moves[DEATH, 1] += 1
                    theta[j] = 0.0
                    active[j] = False
                    block_size[blk] = s - 1
                    l0 -= 1
                    eta[:] = eta_new
                    loglik = ll_new
            else:
                moves[BIRTH, 0] += 1
                ub = u_birth[b]
                rate = rho
                if ub < birth_w:
                    ub = ub / birth_w
                    rate = birth_rho
                elif birth_w > 0.0:
                    ub = (ub - birth_w) / (1.0 - birth_w)
                v = ub - 0.5
                if v != 0.0 and abs(v) < 0.5:
                    t = -math.copysign(1.0, v) * math.log1p(-2.0 * abs(v)) / rate
                    if s + 1 < size_logw.shape[1] and t != 0.0:
                        eta_new = eta + XT[j] * t
                        ll_new = _loglik(y, eta_new)
                        log_a = ll_new - loglik + size_logw[blk, s + 1] - size_logw[blk, s]
                        log_a += _log_birth_ratio(t, rho, birth_w, birth_rho)
                        if math.log(u_acc[b]) < log_a:
                            moves[BIRTH, 1] += 1
                            theta[j] = t
                            active[j] = True
                            block_size[blk] = s + 1
                            l0 += 1
                            eta[:] = eta_new
                            loglik = ll_new
        elif l0 > 0:
            moves[RW, 0] += 1
            scale = math.exp(log_scale)
            eta_new = eta.copy()
            step = np.zeros(d)
            ok = True
            dl1 = 0.0
            for k in range(d):
                if active[k]:
                    dk = scale * z[b, k]
                    nk = theta[k] + dk
                    if nk == 0.0:
                        ok = False
                    step[k] = dk
                    dl1 += abs(nk) - abs(theta[k])
                    eta_new += XT[k] * dk
            acc_prob = 0.0
            if ok:
                ll_new = _loglik(y, eta_new)
                log_a = ll_new - loglik - rho * dl1
                acc_prob = 1.0 if log_a >= 0.0 else math.exp(log_a)
                if math.log(u_acc[b]) < log_a:
                    moves[RW, 1] += 1
                    theta += step
                    eta[:] = eta_new
                    loglik = ll_new
            if adapt:
                t_adapt += 1.0
                log_scale += (acc_prob - TARGET_ACCEPT) / math.sqrt(t_adapt)
                log_scale = min(max(log_scale, LOG_SCALE_BOUNDS[0]), LOG_SCALE_BOUNDS[1])
        if it >= burnin:
            size_hist[l0] += 1
            for k in range(d):
                if active[k]:
                    incl[k] += 1
                    s_theta[k] += theta[k]
                    s_sq[k] += theta[k] * theta[k]
                    s_abs[k] += abs(theta[k])
            if (it - burnin) % thin == 0 and draw_pos[0] < draws.shape[0]:
                draws[draw_pos[0]] = theta
                draw_pos[0] += 1
    state[0] = loglik
    state[1] = log_scale
    state[2] = t_adapt
    state[3] = l0


def gibbs_sweeps_py(theta, x, u, out, burnin, thin):
    """Systematic-scan heat-bath sweeps; u has one row of p uniforms per sweep.

    P(x_j = 1 | rest) = g'(theta_jj + sum_{k != j} theta_kj x_k).
    """
    p = x.shape[0]
    row = 0
    for sweep in range(u.shape[0]):
        for j in range(p):
            field = theta[j, j]
            for k in range(p):
                if k != j:
                    field += theta[k, j] * x[k]
            prob = 1.0 / (1.0 + math.exp(-field)) if field >= 0 else math.exp(field) / (1.0 + math.exp(field))
            x[j] = 1.0 if u[sweep, j] < prob else 0.0
        if sweep >= burnin and (sweep - burnin) % thin == thin - 1 and row < out.shape[0]:
            out[row] = x
            row += 1
    return row


def oracle_support_loop_py(xs, ysum, cnt, centers, cvar, lo, hi, logw, edge, tstar, off_sq, radii):
    """Weighted-midpoint sums over the m^k tensor grid of one support.

    ``cvar`` is the within-cell variance of theta. The radius indicator is
    smoothed by a normal approximation of ||theta - theta*||^2 inside the
    cell, which turns its O(h) quantization error into O(h^2); cells whose
    [lo, hi] box lies wholly inside or outside the ball count exactly.

    Returns (log_max, total, s_theta, s_abs, s_sq, s_radius, s_edge), all
    sums scaled by exp(-log_max).
    """
    n_u, k = xs.shape
    m = centers.shape[0]
    R = radii.shape[0]
    idx = np.zeros(k, dtype=np.int64)
    eta = np.zeros(n_u)
    lmax = -np.inf
    total = 0.0
    s_theta = np.zeros(k)
    s_abs = np.zeros(k)
    s_sq = np.zeros(k)
    s_rad = np.zeros(R)
    s_edge = 0.0
    npts = m**k
    for _ in range(npts):
        lw = 0.0
        dist = off_sq
        dvar = 0.0
        dmin = off_sq
        dmax = off_sq
        on_edge = False
        for a in range(k):
            lw += logw[idx[a]]
            c = centers[idx[a]]
            v = cvar[idx[a]]
            dist += (c - tstar[a]) ** 2 + v
            dvar += 4.0 * (c - tstar[a]) ** 2 * v + 2.0 * v * v
            e_lo = lo[idx[a]] - tstar[a]
            e_hi = hi[idx[a]] - tstar[a]
            dmax += max(e_lo * e_lo, e_hi * e_hi)
            if e_lo > 0.0:
                dmin += e_lo * e_lo
            elif e_hi < 0.0:
                dmin += e_hi * e_hi
            if edge[idx[a]]:
                on_edge = True
        for r in range(n_u):
            e = 0.0
            for a in range(k):
                e += xs[r, a] * centers[idx[a]]
            eta[r] = e
        ll = 0.0
        for r in range(n_u):
            e = eta[r]
            ll += ysum[r] * e - cnt[r] * (max(e, 0.0) + math.log1p(math.exp(-abs(e))))
        lv = lw + ll
        if lv > lmax:
            f = math.exp(lmax - lv) if lmax > -np.inf else 0.0
            total *= f
            s_theta *= f
            s_abs *= f
            s_sq *= f
            s_rad *= f
            s_edge *= f
            lmax = lv
        w = math.exp(lv - lmax)
        total += w
        for a in range(k):
            c = centers[idx[a]]
            s_theta[a] += w * c
            s_abs[a] += w * abs(c)
            s_sq[a] += w * (c * c + cvar[idx[a]])
        sd = math.sqrt(dvar)
        for r in range(R):
            r2 = radii[r] * radii[r]
            if dmin >= r2:
                s_rad[r] += w
            elif dmax > r2 and sd > 0.0:
                s_rad[r] += w * 0.5 * math.erfc((r2 - dist) / (sd * math.sqrt(2.0)))
        if on_edge:
            s_edge += w
        # odometer increment
        a = 0
        while a < k:
            idx[a] += 1
            if idx[a] < m:
                break
            idx[a] = 0
            a += 1
    return lmax, total, s_theta, s_abs, s_sq, s_rad, s_edge


def oracle_support_numpy(xs, ysum, cnt, centers, cvar, lo, hi, logw, edge, tstar, off_sq, radii, chunk=1 << 16):
    """Vectorized counterpart of :func:`oracle_support_loop_py`."""
    n_u, k = xs.shape
    m = centers.shape[0]
    npts = m**k
    lmax = -np.inf
    total = 0.0
    s_theta = np.zeros(k)
    s_abs = np.zeros(k)
    s_sq = np.zeros(k)
    s_rad = np.zeros(radii.shape[0])
    s_edge = 0.0
    for start in range(0, npts, chunk):
        flat = np.arange(start, min(start + chunk, npts))
        idx = np.empty((flat.size, k), dtype=np.int64)
        rem = flat
        for a in range(k):
            idx[:, a] = rem % m
            rem = rem // m
        pts = centers[idx]
        pv = cvar[idx]
        lv = logw[idx].sum(axis=1)
        if n_u:
            eta = pts @ xs.T
            lv = lv + eta @ ysum - _log1pexp(eta) @ cnt
        new_max = max(lmax, float(lv.max()))
        f = math.exp(lmax - new_max) if lmax > -np.inf else 0.0
        w = np.exp(lv - new_max)
        total = total * f + w.sum()
        s_theta = s_theta * f + w @ pts
        s_abs = s_abs * f + w @ np.abs(pts)
        s_sq = s_sq * f + w @ (pts * pts + pv)
        dev2 = (pts - tstar) ** 2
        dist = off_sq + (dev2 + pv).sum(axis=1)
        sd = np.sqrt((4.0 * dev2 * pv + 2.0 * pv * pv).sum(axis=1))
        e_lo = lo[idx] - tstar
        e_hi = hi[idx] - tstar
        dmax = off_sq + np.maximum(e_lo**2, e_hi**2).sum(axis=1)
        dmin = off_sq + np.where(e_lo > 0, e_lo**2, np.where(e_hi < 0, e_hi**2, 0.0)).sum(axis=1)
        hit = np.empty((radii.shape[0], flat.size))
        for i, r in enumerate(radii):
            with np.errstate(divide="ignore", invalid="ignore"):
                smooth = 0.5 * erfc((r * r - dist) / (sd * math.sqrt(2.0)))
            mid = np.where(sd > 0, smooth, 0.0)
            hit[i] = np.where(dmin >= r * r, 1.0, np.where(dmax > r * r, mid, 0.0))
        s_rad = s_rad * f + hit @ w
        s_edge = s_edge * f + w[edge[idx].any(axis=1)].sum()
        lmax = new_max
    return lmax, total, s_theta, s_abs, s_sq, s_rad, s_edge


chain_block = njit(chain_block_py)
gibbs_sweeps = njit(gibbs_sweeps_py)

if USING_NUMBA:
    oracle_support = njit(oracle_support_loop_py)
else:
    oracle_support = oracle_support_numpy
