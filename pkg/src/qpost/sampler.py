"""Trans-dimensional MCMC for spike-and-slab quasi-posteriors, and an exact oracle.

Moves
-----
flip (prob ``p_flip``): pick a coordinate uniformly. If inactive, propose a
birth with value drawn from the Laplace slab; if active, propose its death.
Because the birth proposal is the slab itself, the acceptance ratio is the
quasi-likelihood ratio times pi_delta'/pi_delta. With ``birth_scale`` set,
births draw from a mixture of the slab and a wider Laplace(1/birth_scale)
component, and births and deaths carry the slab/proposal density ratio. A
large rho otherwise makes slab births too small to ever reach a real signal.

random walk (otherwise): Gaussian step on all active coordinates jointly,
Metropolis-corrected against likelihood and Laplace slab. With ``adapt`` the
log step size follows a Robbins-Monro recursion toward 0.3 acceptance with
gain 1/sqrt(t).
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .core import SparseParam, SparsityPattern
from .logistic import CombinatorialGuardError, LogisticData
from .prior import PriorSpec

BLOCK = 4096


@dataclass(frozen=True)
class ChainConfig:
    iterations: int
    p_flip: float = 0.5
    rw_scale: float = 0.1
    adapt: bool = True
    seed: int = 0
    burnin: int | None = None
    thin: int = 1
    birth_scale: float | None = None
    birth_mix: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.p_flip < 1:
            raise ValueError("p_flip must lie in (0, 1)")
        if self.rw_scale <= 0:
            raise ValueError("rw_scale must be positive")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.burnin is not None and not 0 <= self.burnin < self.iterations:
            raise ValueError("burnin must lie in [0, iterations)")
        if self.birth_scale is not None and self.birth_scale <= 0:
            raise ValueError("birth_scale must be positive")
        if not 0 < self.birth_mix < 1:
            raise ValueError("birth_mix must lie in (0, 1)")

    @property
    def birth_params(self) -> tuple[float, float]:
        """(weight, rate) of the wide birth component; weight 0 means slab-only births."""
        if self.birth_scale is None:
            return 0.0, 1.0
        return float(self.birth_mix), 1.0 / float(self.birth_scale)

    @property
    def n_burnin(self) -> int:
        return self.iterations // 10 if self.burnin is None else self.burnin

    @property
    def n_kept(self) -> int:
        return self.iterations - self.n_burnin


@dataclass
class PosteriorSummary:
    inclusion_probs: np.ndarray
    support_size_histogram: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    mean_abs: np.ndarray
    acceptance: dict = field(default_factory=dict)
    event_estimates: dict = field(default_factory=dict)
    draws: np.ndarray | None = None
    draw_iterations: np.ndarray | None = None
    n_retained: int = 0
    final_scale: float | None = None
    support_probs: dict | None = None

    @property
    def dim(self) -> int:
        return self.inclusion_probs.size

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "n_retained": self.n_retained,
            "n_draws_stored": 0 if self.draws is None else int(self.draws.shape[0]),
            "inclusion_probs": self.inclusion_probs.tolist(),
            "support_size_histogram": self.support_size_histogram.tolist(),
            "mean": self.mean.tolist(),
            "second_moment": self.second_moment.tolist(),
            "mean_abs": self.mean_abs.tolist(),
            "acceptance": self.acceptance,
            "event_estimates": {k: list(v) for k, v in self.event_estimates.items()},
            "final_scale": self.final_scale,
        }
        if self.support_probs is not None:
            out["support_probs"] = {",".join(map(str, k)): v for k, v in self.support_probs.items()}
        return out


# events ----------------------------------------------------------------------

Event = Callable[[np.ndarray], np.ndarray]


def l0_at_least(k: float) -> Event:
    return lambda draws: np.count_nonzero(draws, axis=1) >= k


def l2_distance_exceeds(theta_star, r: float) -> Event:
    ts = np.asarray(theta_star.dense() if isinstance(theta_star, SparseParam) else theta_star, float).ravel()
    return lambda draws: np.sqrt(((draws - ts) ** 2).sum(axis=1)) > r


def frobenius_distance_exceeds(theta_star, r: float) -> Event:
    return l2_distance_exceeds(np.asarray(theta_star, float).ravel(order="F"), r)


def tnorm_distance_exceeds(theta_star, r: float) -> Event:
    ts = np.asarray(theta_star, float)
    p = ts.shape[0]

    def ev(draws):
        diff = draws.reshape(-1, p, p, order="F") - ts
        return np.sqrt((diff**2).sum(axis=1)).max(axis=1) > r

    return ev


def batch_means_se(x: np.ndarray, n_batches: int = 20) -> float:
    """Monte Carlo standard error of the mean of a correlated sequence."""
    x = np.asarray(x, float)
    n = x.size
    if n < 2 * n_batches:
        return float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    size = n // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def event_probability(summary: PosteriorSummary, event: Event) -> tuple[float, float]:
    """Monte Carlo estimate and batch-means standard error over retained draws."""
    if summary.draws is None or summary.draws.shape[0] == 0:
        raise ValueError("summary holds no retained draws")
    hits = np.asarray(event(summary.draws), dtype=float)
    return float(hits.mean()), batch_means_se(hits)


# chain -----------------------------------------------------------------------


def _init_state(init, d):
    if init is None:
        return np.zeros(d)
    x = init.dense() if isinstance(init, SparseParam) else np.asarray(init, float).ravel()
    if x.size != d:
        raise ValueError(f"init has dimension {x.size}, model has {d}")
    return x.copy()


def _run_kernel(X, y, prior_blocks, block, rho, config: ChainConfig, init: np.ndarray) -> PosteriorSummary:
    n, d = X.shape
    XT = np.ascontiguousarray(X.T)
    y = np.ascontiguousarray(y, dtype=float)
    theta = init.copy()
    active = theta != 0.0
    block = np.ascontiguousarray(block, dtype=np.int64)
    size_logw = np.ascontiguousarray(prior_blocks, dtype=float)
    block_size = np.bincount(block[active], minlength=size_logw.shape[0]).astype(np.int64)
    eta = XT.T @ theta if n else np.zeros(0)
    eta = np.ascontiguousarray(eta, dtype=float)
    loglik = kernels._loglik(y, eta)
    if not math.isfinite(loglik):
        raise ValueError("quasi-likelihood is not finite at the initial point")
    if any(size_logw[b, block_size[b]] == -np.inf for b in range(size_logw.shape[0])):
        raise ValueError("initial support has zero prior probability")

    burnin, thin = config.n_burnin, config.thin
    n_store = -(-config.n_kept // thin)
    draws = np.zeros((n_store, d))
    incl = np.zeros(d, dtype=np.int64)
    size_hist = np.zeros(d + 1, dtype=np.int64)
    s_theta = np.zeros(d)
    s_sq = np.zeros(d)
    s_abs = np.zeros(d)
    moves = np.zeros((3, 2), dtype=np.int64)
    draw_pos = np.zeros(1, dtype=np.int64)
    state = np.array([loglik, math.log(config.rw_scale), 0.0, float(active.sum())])

    bw, brho = config.birth_params
    rng = np.random.default_rng(config.seed)
    done = 0
    while done < config.iterations:
        b = min(BLOCK, config.iterations - done)
        u_move = rng.random(b)
        u_coord = rng.random(b)
        u_acc = 1.0 - rng.random(b)
        u_birth = rng.random(b)
        z = rng.standard_normal((b, d))
        kernels.chain_block(
            XT, y, theta, active, eta, block, block_size, size_logw, float(rho), float(config.p_flip),
            bw, brho,
            state, u_move, u_coord, u_acc, u_birth, z,
            done, burnin, thin, bool(config.adapt),
            incl, size_hist, s_theta, s_sq, s_abs, moves, draws, draw_pos,
        )
        done += b
        # refresh the running linear predictor against accumulated rounding
        if n:
            eta[:] = XT.T @ theta
            state[0] = kernels._loglik(y, eta)

    kept = config.n_kept
    names = ("birth", "death", "random_walk")
    acceptance = {
        nm: {"proposed": int(moves[i, 0]), "accepted": int(moves[i, 1]),
             "rate": float(moves[i, 1] / moves[i, 0]) if moves[i, 0] else None}
        for i, nm in enumerate(names)
    }
    return PosteriorSummary(
        inclusion_probs=incl / kept,
        support_size_histogram=size_hist,
        mean=s_theta / kept,
        second_moment=s_sq / kept,
        mean_abs=s_abs / kept,
        acceptance=acceptance,
        draws=draws[: draw_pos[0]],
        draw_iterations=burnin + thin * np.arange(draw_pos[0]),
        n_retained=kept,
        final_scale=math.exp(state[1]),
    )


def _run_generic(model, prior: PriorSpec, config: ChainConfig, init: np.ndarray) -> PosteriorSummary:
    """Same moves for any model with ``log_quasi_likelihood(theta)``; slow, pure Python."""
    d = init.size
    size_logw = prior.size_log_weights()
    theta = init.copy()
    loglik = float(model.log_quasi_likelihood(theta))
    if not math.isfinite(loglik):
        raise ValueError("quasi-likelihood is not finite at the initial point")
    rho = prior.rho
    burnin, thin = config.n_burnin, config.thin
    kept_draws = []
    incl = np.zeros(d)
    size_hist = np.zeros(d + 1, dtype=np.int64)
    s_theta, s_sq, s_abs = np.zeros(d), np.zeros(d), np.zeros(d)
    moves = np.zeros((3, 2), dtype=np.int64)
    log_scale, t_adapt = math.log(config.rw_scale), 0.0
    bw, brho = config.birth_params
    rng = np.random.default_rng(config.seed)
    done = 0
    while done < config.iterations:
        b = min(BLOCK, config.iterations - done)
        u_move, u_coord = rng.random(b), rng.random(b)
        u_acc, u_birth = 1.0 - rng.random(b), rng.random(b)
        z = rng.standard_normal((b, d))
        for i in range(b):
            it = done + i
            active = theta != 0.0
            s = int(active.sum())
            if u_move[i] < config.p_flip:
                j = min(int(u_coord[i] * d), d - 1)
                prop = theta.copy()
                if active[j]:
                    kind, prop[j], s_new = kernels.DEATH, 0.0, s - 1
                    corr = -kernels._log_birth_ratio_py(theta[j], rho, bw, brho)
                else:
                    ub, rate = u_birth[i], rho
                    if ub < bw:
                        ub, rate = ub / bw, brho
                    elif bw > 0.0:
                        ub = (ub - bw) / (1.0 - bw)
                    v = ub - 0.5
                    t = -math.copysign(1.0, v) * math.log1p(-2.0 * abs(v)) / rate if 0 < abs(v) < 0.5 else 0.0
                    kind, prop[j], s_new = kernels.BIRTH, t, s + 1
                    corr = kernels._log_birth_ratio_py(t, rho, bw, brho)
                moves[kind, 0] += 1
                if prop[j] != 0.0 or kind == kernels.DEATH:
                    ll = float(model.log_quasi_likelihood(prop))
                    log_a = ll - loglik + size_logw[s_new] - size_logw[s] + corr
                    if math.log(u_acc[i]) < log_a:
                        moves[kind, 1] += 1
                        theta, loglik = prop, ll
            elif s > 0:
                moves[kernels.RW, 0] += 1
                prop = theta + np.where(active, math.exp(log_scale) * z[i], 0.0)
                acc_prob = 0.0
                if np.all(prop[active] != 0.0):
                    ll = float(model.log_quasi_likelihood(prop))
                    log_a = ll - loglik - rho * (np.abs(prop).sum() - np.abs(theta).sum())
                    acc_prob = 1.0 if log_a >= 0 else math.exp(log_a)
                    if math.log(u_acc[i]) < log_a:
                        moves[kernels.RW, 1] += 1
                        theta, loglik = prop, ll
                if config.adapt:
                    t_adapt += 1.0
                    log_scale += (acc_prob - kernels.TARGET_ACCEPT) / math.sqrt(t_adapt)
                    log_scale = min(max(log_scale, kernels.LOG_SCALE_BOUNDS[0]), kernels.LOG_SCALE_BOUNDS[1])
            if it >= burnin:
                act = theta != 0.0
                size_hist[int(act.sum())] += 1
                incl += act
                s_theta += theta
                s_sq += theta * theta
                s_abs += np.abs(theta)
                if (it - burnin) % thin == 0:
                    kept_draws.append(theta.copy())
        done += b
    kept = config.n_kept
    names = ("birth", "death", "random_walk")
    acceptance = {
        nm: {"proposed": int(moves[i, 0]), "accepted": int(moves[i, 1]),
             "rate": float(moves[i, 1] / moves[i, 0]) if moves[i, 0] else None}
        for i, nm in enumerate(names)
    }
    draws = np.array(kept_draws).reshape(-1, d)
    return PosteriorSummary(
        inclusion_probs=incl / kept, support_size_histogram=size_hist, mean=s_theta / kept,
        second_moment=s_sq / kept, mean_abs=s_abs / kept, acceptance=acceptance, draws=draws,
        draw_iterations=burnin + thin * np.arange(draws.shape[0]), n_retained=kept,
        final_scale=math.exp(log_scale),
    )


def run_chain(
    model,
    prior: PriorSpec,
    config: ChainConfig,
    init=None,
    events: Mapping[str, Event] | None = None,
) -> PosteriorSummary:
    """Sample the quasi-posterior q(theta) x spike-and-slab prior.

    ``model`` is a :class:`LogisticData` (fast kernel) or any object with a
    ``dim`` attribute and ``log_quasi_likelihood(theta)``.
    """
    d = model.dim
    if prior.d != d:
        raise ValueError(f"prior dimension {prior.d} != model dimension {d}")
    x0 = _init_state(init, d)
    if isinstance(model, LogisticData):
        summary = _run_kernel(model.X, model.y, prior.size_log_weights()[None, :], np.zeros(d, np.int64),
                              prior.rho, config, x0)
    else:
        summary = _run_generic(model, prior, config, x0)
    for name, ev in (events or {}).items():
        summary.event_estimates[name] = event_probability(summary, ev)
    return summary


# exact oracle ------------------------------------------------------------------


class OracleTruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleGrid:
    half_width: float
    cells: int
    centers: np.ndarray
    variances: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    log_weights: np.ndarray
    edge: np.ndarray


def laplace_cell_grid(rho: float, half_width: float, cells: int) -> OracleGrid:
    """Cells on [-B, B] with 0 as a cell edge, weighted by the Laplace slab.

    Each cell carries the exact slab mass int_cell (rho/2) e^{-rho|t|} dt and is
    represented by its slab-weighted centroid, so integrals of functions that
    are linear on a cell (including |t|) against the slab are exact.
    """
    half = max(1, (cells + 1) // 2)
    edges = np.linspace(0.0, half_width, half + 1)
    a, b = edges[:-1], edges[1:]
    h = b - a
    x = rho * h
    log_mass = math.log(0.5) - rho * a + np.log(-np.expm1(-x))
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(x > 1e-8, 1.0 - x / np.expm1(x), 0.5 * x)
    cent = a + frac / rho
    # variance of an exponential(rho) truncated to [0, h]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        var = np.where(x > 1e-3, 1.0 / rho**2 - (h / (2.0 * np.sinh(x / 2.0))) ** 2,
                       h * h * (1.0 / 12.0 - x * x / 720.0))
    centers = np.concatenate([-cent[::-1], cent])
    variances = np.concatenate([var[::-1], var])
    lower = np.concatenate([-b[::-1], a])
    upper = np.concatenate([-a[::-1], b])
    log_w = np.concatenate([log_mass[::-1], log_mass])
    m = centers.size
    edge = np.zeros(m, dtype=bool)
    edge[:2] = True
    edge[-2:] = True
    return OracleGrid(half_width, m, centers, variances, lower, upper, log_w, edge)


def _default_half_width(model: LogisticData, rho: float) -> float:
    """Laplace-approximation box: mode + 10 sd, never below 16/rho (slab tail e^-16)."""
    if model.n == 0:
        return 30.0 / rho
    from scipy.optimize import minimize
    from .logistic import grad_log_quasi_likelihood, logistic_link, log_quasi_likelihood

    eps = 1e-6

    def f(t):
        sm = np.sqrt(t * t + eps * eps)
        val = -log_quasi_likelihood(t, model) + rho * sm.sum()
        grad = -grad_log_quasi_likelihood(t, model) + rho * t / sm
        return val, grad

    mode = minimize(f, np.zeros(model.dim), jac=True, method="L-BFGS-B").x
    _, _, w = logistic_link(model.X @ mode)
    H = (model.X.T * np.atleast_1d(w)) @ model.X
    sd = 1.0 / np.sqrt(np.maximum(np.diag(H), 1e-300))
    return float(max(16.0 / rho, np.abs(mode).max() + 10.0 * sd.max()))


def _oracle_once(model, prior, B, m, radii, ts, max_active):
    d, rho = model.dim, prior.rho
    g = laplace_cell_grid(rho, B, m)
    size_logw = prior.size_log_weights()
    X, y = model.X, model.y
    logmass, cond, edge_total = {}, {}, []
    for k in range(d + 1):
        if size_logw[k] == -np.inf:
            continue
        for S in itertools.combinations(range(d), k):
            lw = size_logw[k]
            cols = list(S)
            off = np.ones(d, dtype=bool)
            off[cols] = False
            off_sq = float((ts[off] ** 2).sum())
            if k == 0:
                logmass[S] = lw - math.log(2.0) * model.n
                dist = math.sqrt(off_sq)
                cond[S] = (np.zeros(0), np.zeros(0), np.zeros(0), (dist > radii).astype(float))
                continue
            if k > max_active:
                if model.n or radii.size:
                    raise CombinatorialGuardError(
                        f"support of size {k} exceeds the {max_active}-dimensional quadrature guard"
                    )
                # q == 1: the slab integrates to one, moments are the Laplace ones
                logmass[S] = lw
                cond[S] = (np.zeros(k), np.full(k, 1.0 / rho), np.full(k, 2.0 / rho**2), np.zeros(0))
                continue
            if model.n:
                uniq, inv = np.unique(X[:, cols], axis=0, return_inverse=True)
                inv = inv.ravel()
                ysum = np.bincount(inv, weights=y, minlength=uniq.shape[0])
                cnt = np.bincount(inv, minlength=uniq.shape[0]).astype(float)
            else:
                uniq, ysum, cnt = np.zeros((0, k)), np.zeros(0), np.zeros(0)
            lmax, tot, s_t, s_a, s_q, s_r, s_e = kernels.oracle_support(
                np.ascontiguousarray(uniq, float), ysum, cnt, g.centers, g.variances, g.lower, g.upper, g.log_weights, g.edge,
                np.ascontiguousarray(ts[cols]), off_sq, radii,
            )
            logmass[S] = lw + lmax + math.log(tot)
            cond[S] = (np.asarray(s_t) / tot, np.asarray(s_a) / tot, np.asarray(s_q) / tot, np.asarray(s_r) / tot)
            edge_total.append((logmass[S], s_e / tot))
    lz = logsumexp(list(logmass.values()))
    edge_frac = float(sum(math.exp(l - lz) * f for l, f in edge_total))
    return g, logmass, cond, lz, edge_frac


def exact_posterior_oracle(
    model: LogisticData,
    prior: PriorSpec,
    grid: tuple[float | None, int | None] = (None, None),
    radii=(),
    theta_star=None,
    max_points: float = 2e7,
    max_dim: int = 6,
    max_active: int = 4,
    edge_tol: float = 1e-6,
) -> PosteriorSummary:
    """Exact quasi-posterior by support enumeration and tensor-grid quadrature.

    ``grid`` is (half_width B, cells m per axis). With B unset it comes from a
    Laplace approximation and is doubled (up to four times) whenever the
    truncation diagnostic fires; an explicit B is never widened. With m unset,
    m = 201 capped so that m^k <= max_points for the largest support. Raises
    :class:`OracleTruncationError` when the mass within two cells of the
    boundary is at least ``edge_tol`` of the total.
    """
    d = model.dim
    if d > max_dim:
        raise CombinatorialGuardError(f"oracle supports d <= {max_dim}, got {d}")
    if prior.d != d:
        raise ValueError("prior and model dimensions differ")
    B, m = grid
    auto_b = B is None
    if auto_b:
        B = _default_half_width(model, prior.rho)
    kmax = min(d, max_active)
    if m is None:
        m = min(201, int(math.floor(max_points ** (1.0 / kmax))))
    if m**kmax > max_points:
        raise CombinatorialGuardError(f"{m}^{kmax} grid points exceed max_points={max_points:g}")

    ts = np.zeros(d)
    if theta_star is not None:
        ts = np.asarray(theta_star.dense() if isinstance(theta_star, SparseParam) else theta_star, float)
    elif model.theta_star is not None:
        ts = model.theta_star.dense()
    radii = np.asarray(radii, dtype=float).ravel()

    for _ in range(5 if auto_b else 1):
        g, logmass, cond, lz, edge_frac = _oracle_once(model, prior, B, m, radii, ts, max_active)
        if edge_frac < edge_tol:
            break
        B *= 2.0
    else:
        raise OracleTruncationError(
            f"{edge_frac:.3g} of the mass lies within two cells of +-{g.half_width:g}; widen the grid"
        )

    incl, mean, mabs, msq = np.zeros(d), np.zeros(d), np.zeros(d), np.zeros(d)
    rad = np.zeros(radii.size)
    hist = np.zeros(d + 1)
    support_probs = {}
    for S, lm in logmass.items():
        pS = math.exp(lm - lz)
        support_probs[S] = pS
        hist[len(S)] += pS
        et, ea, eq, er = cond[S]
        cols = list(S)
        incl[cols] += pS
        mean[cols] += pS * et
        mabs[cols] += pS * ea
        msq[cols] += pS * eq
        rad += pS * er
    events = {f"l2_dist>{r:g}": (float(v), 0.0) for r, v in zip(radii, rad)}
    return PosteriorSummary(
        inclusion_probs=incl, support_size_histogram=hist, mean=mean, second_moment=msq, mean_abs=mabs,
        acceptance={"grid": {"half_width": g.half_width, "cells": g.cells, "edge_mass_fraction": edge_frac}},
        event_estimates=events, draws=None, n_retained=0, support_probs=support_probs,
    )


# Ising columns -------------------------------------------------------------------


def column_seed(seed: int, j: int) -> int:
    """Seed for column j: SeedSequence(seed, spawn_key=(j,)) first 32-bit word."""
    return int(np.random.SeedSequence(seed, spawn_key=(j,)).generate_state(1)[0])


@dataclass
class IsingFit:
    columns: list[PosteriorSummary]
    inclusion: np.ndarray
    mean: np.ndarray
    event_estimates: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.columns)

    def joint_draws(self) -> np.ndarray:
        """Column-major flattened p x p draws; row i pairs the i-th draw of each column."""
        nd = min(c.draws.shape[0] for c in self.columns)
        return np.concatenate([c.draws[:nd] for c in self.columns], axis=1)


def run_ising_columns(data, prior: PriorSpec, config: ChainConfig, events: Mapping[str, Event] | None = None,
                      workers: int = 1) -> IsingFit:
    """One chain per column regression (column j of Z on Z^(j)); the product is the joint posterior."""
    from .ising import column_regression

    p = data.p
    if prior.d != p:
        raise ValueError("prior dimension must equal the node count p")
    cfgs = [replace(config, seed=column_seed(config.seed, j)) for j in range(p)]
    regs = [column_regression(data, j) for j in range(p)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            cols = list(ex.map(lambda a: run_chain(a[0], prior, a[1]), zip(regs, cfgs)))
    else:
        cols = [run_chain(r, prior, c) for r, c in zip(regs, cfgs)]
    inclusion = np.column_stack([c.inclusion_probs for c in cols])
    mean = np.column_stack([c.mean for c in cols])
    fit = IsingFit(cols, inclusion, mean)
    if events:
        draws = fit.joint_draws()
        for name, ev in events.items():
            hits = np.asarray(ev(draws), float)
            fit.event_estimates[name] = (float(hits.mean()), batch_means_se(hits))
    return fit


def run_ising_joint(data, prior: PriorSpec, config: ChainConfig) -> PosteriorSummary:
    """Single chain over all p^2 coordinates of the same product target.

    The design is block diagonal (one block of rows per column regression)
    and the support prior factorizes over columns. Used to cross-check the
    per-column implementation.
    """
    from .ising import column_regression

    p, n = data.p, data.n
    X = np.zeros((n * p, p * p))
    y = np.zeros(n * p)
    for j in range(p):
        reg = column_regression(data, j)
        X[j * n:(j + 1) * n, j * p:(j + 1) * p] = reg.X
        y[j * n:(j + 1) * n] = reg.y
    block = np.repeat(np.arange(p), p)
    blocks = np.tile(prior.size_log_weights(), (p, 1))
    return _run_kernel(X, y, blocks, block, prior.rho, config, np.zeros(p * p))


# persistence ---------------------------------------------------------------------


def write_draws(path, summary: PosteriorSummary) -> None:
    """Tab-delimited: iteration, l0, comma-joined active indices, comma-joined values."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["iteration", "l0", "active", "values"])
        its = summary.draw_iterations if summary.draw_iterations is not None else range(len(summary.draws))
        for it, th in zip(its, summary.draws):
            idx = np.flatnonzero(th)
            w.writerow([int(it), idx.size, ",".join(map(str, idx)), ",".join(f"{v:.17g}" for v in th[idx])])


def read_draws(path, d: int) -> tuple[np.ndarray, np.ndarray]:
    its, rows = [], []
    with Path(path).open() as fh:
        r = csv.reader(fh, delimiter="\t")
        next(r)
        for it, l0, act, vals in r:
            th = np.zeros(d)
            if int(l0):
                th[[int(i) for i in act.split(",")]] = [float(v) for v in vals.split(",")]
            its.append(int(it))
            rows.append(th)
    return np.array(its, dtype=np.int64), np.array(rows).reshape(-1, d)


def write_summary(path, summary: PosteriorSummary, extra: dict | None = None) -> None:
    out = summary.to_dict()
    if extra:
        out.update(extra)
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def chain_config_dict(config: ChainConfig) -> dict:
    return asdict(config)
