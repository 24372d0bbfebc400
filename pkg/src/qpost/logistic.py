"""Sparse logistic regression: quasi-likelihood, curvature and rate constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.special import comb, expit

from .core import ConeSpec, SparseParam, SparsityPattern, cone_contains

MAX_SUPPORTS = 10**6


class DegenerateDesignError(ValueError):
    """A restricted eigenvalue that must be positive is not."""


class CombinatorialGuardError(ValueError):
    pass


def _dense(theta) -> np.ndarray:
    if isinstance(theta, SparseParam):
        return theta.dense()
    return np.asarray(theta, dtype=float).reshape(-1)


def log1pexp(x):
    """g(x) = log(1 + e^x), stable for large |x|."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def logistic_link(x):
    """Return (g, g', g'') at x, where g(x) = log(1 + e^x)."""
    g = log1pexp(x)
    g1 = expit(x)
    g2 = g1 * expit(-np.asarray(x, dtype=float))
    if np.ndim(x) == 0:
        return float(g), float(g1), float(g2)
    return g, g1, g2


@dataclass(frozen=True)
class LogisticData:
    X: np.ndarray
    y: np.ndarray
    theta_star: SparseParam | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a matrix")
        y = np.array(self.y, dtype=float).reshape(-1)
        if y.size != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("responses must be 0 or 1")
        ts = self.theta_star
        if ts is not None:
            if not isinstance(ts, SparseParam):
                ts = SparseParam.from_dense(ts)
            if ts.d != X.shape[1]:
                raise ValueError("theta_star dimension does not match X")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "theta_star", ts)

    @classmethod
    def flat(cls, d: int) -> "LogisticData":
        """No observations: the quasi-likelihood is identically 1."""
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def x_inf(self) -> float:
        return float(np.abs(self.X).max()) if self.X.size else 0.0

    def log_quasi_likelihood(self, theta) -> float:
        return log_quasi_likelihood(theta, self)


def log_quasi_likelihood(theta, data: LogisticData) -> float:
    eta = data.X @ _dense(theta)
    return float(np.dot(data.y, eta) - log1pexp(eta).sum())


def grad_log_quasi_likelihood(theta, data: LogisticData) -> np.ndarray:
    eta = data.X @ _dense(theta)
    return data.X.T @ (data.y - expit(eta))


def bregman_divergence(theta, theta_star, data: LogisticData) -> float:
    """log q(theta) - log q(theta*) - <grad log q(theta*), theta - theta*>.

    For this model the response cancels, so the value depends on X only.
    """
    eta = data.X @ _dense(theta)
    eta0 = data.X @ _dense(theta_star)
    g0, g1, _ = logistic_link(eta0)
    return float(-(log1pexp(eta) - g0 - g1 * (eta - eta0)).sum())


@dataclass(frozen=True)
class CurvatureSummary:
    x_inf: float
    w_diag: np.ndarray
    fisher: np.ndarray
    gram: np.ndarray


def curvature_summary(data: LogisticData, theta_star=None) -> CurvatureSummary:
    ts = theta_star if theta_star is not None else data.theta_star
    if ts is None:
        raise ValueError("curvature_summary needs theta_star")
    _, _, w = logistic_link(data.X @ _dense(ts))
    w = np.atleast_1d(w)
    n = data.n
    fisher = (data.X.T * w) @ data.X / n
    gram = data.X.T @ data.X / n
    return CurvatureSummary(data.x_inf, w, 0.5 * (fisher + fisher.T), gram)


def restricted_eig_sparse(M, s: int, mode: str = "min", max_supports: int = MAX_SUPPORTS) -> float:
    """Extremal eigenvalue of M over principal submatrices of size s.

    ``min`` gives inf{u'Mu/||u||^2 : 1 <= ||u||_0 <= s}; ``max`` the sup.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    total = comb(d, s, exact=True)
    if total > max_supports:
        raise CombinatorialGuardError(
            f"C({d},{s}) = {total} supports exceeds the guard {max_supports}; "
            "use the certificate lambda_min(M) (restricted_eig_cone) instead"
        )
    best = math.inf if mode == "min" else -math.inf
    it = combinations(range(d), s)
    chunk = max(1, 200_000 // (s * s))
    while True:
        block = np.fromiter((i for c in _take(it, chunk) for i in c), dtype=np.intp)
        if block.size == 0:
            break
        idx = block.reshape(-1, s)
        sub = M[idx[:, :, None], idx[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        best = min(best, float(ev[:, 0].min())) if mode == "min" else max(best, float(ev[:, -1].max()))
    return best


def _take(it, k):
    for _ in range(k):
        try:
            yield next(it)
        except StopIteration:
            return


def _project_cone(v: np.ndarray, on: np.ndarray, sigma: np.ndarray, factor: float) -> np.ndarray:
    """Euclidean projection onto {w : ||w_off||_1 <= factor * <sigma, w_on>}.

    That set is a convex subset of the compatibility cone; the projection is
    a soft-threshold off the pattern and a shift along sigma on it.
    """
    off = ~on
    a = v[off]
    base = factor * float(np.dot(sigma, v[on]))
    k = int(on.sum())
    if np.abs(a).sum() <= base:
        return v.copy()

    def gap(mu):
        return np.maximum(np.abs(a) - mu, 0.0).sum() - base - factor * factor * k * mu

    lo, hi = 0.0, max(float(np.abs(a).max()), 1.0)
    while gap(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    w = v.copy()
    w[off] = np.sign(a) * np.maximum(np.abs(a) - mu, 0.0)
    w[on] = v[on] + factor * mu * sigma
    return w


def restricted_eig_cone(
    M,
    delta_star: SparsityPattern,
    factor: float = 7.0,
    restarts: int = 32,
    iters: int = 500,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Smallest Rayleigh quotient of M over the compatibility cone of delta_star.

    Returns (estimate, certificate). The certificate lambda_min(M) is always a
    valid lower bound; the estimate comes from projected gradient descent on
    the sphere with random restarts and is at least the certificate.
    An empty pattern gives the cone {0}, whose infimum is +inf.
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    d = M.shape[0]
    evals, evecs = np.linalg.eigh(M)
    cert = float(evals[0])
    on = delta_star.mask()
    if not on.any():
        return math.inf, cert
    if on.all():
        return cert, cert
    rng = rng if rng is not None else np.random.default_rng(0)
    cone = ConeSpec.n_cone(delta_star, factor)
    step = 1.0 / max(float(evals[-1] - evals[0]), 1e-12)
    best = math.inf

    starts = [evecs[:, i] for i in range(min(d, 4))]
    starts += [rng.standard_normal(d) for _ in range(max(restarts - len(starts), 0))]
    for u in starts:
        sigma = np.sign(u[on])
        sigma[sigma == 0] = 1.0
        u = _project_cone(u, on, sigma, factor)
        nrm = np.linalg.norm(u)
        if nrm == 0:
            continue
        u /= nrm
        val = float(u @ M @ u)
        eta = step
        for _ in range(iters):
            grad = M @ u - val * u
            improved = False
            while eta > step * 1e-8:
                cand = _project_cone(u - eta * grad, on, sigma, factor)
                nrm = np.linalg.norm(cand)
                if nrm > 0:
                    cand /= nrm
                    new = float(cand @ M @ cand)
                    if new < val - 1e-15:
                        improved = True
                        break
                eta *= 0.5
            if not improved:
                break
            converged = val - new < 1e-14
            u, val = cand, new
            eta = min(2.0 * eta, 64.0 * step)
            if converged:
                break
        if cone_contains(cone, u):
            best = min(best, val)
    return max(best, cert), cert


def zeta_logistic(s_star: int, c4: float, d: int, x_inf: float, kappa1_cone: float, kappa_bar_sstar: float):
    """Sparsity level zeta for the logistic posterior and s_bar = ceil(s_star + zeta)."""
    if kappa1_cone <= 0:
        raise DegenerateDesignError("the cone restricted eigenvalue must be positive")
    if d < 2:
        raise ValueError("d must be >= 2")
    ld = math.log(d)
    x2 = x_inf * x_inf
    inner = 1.0 + 64.0 * x2 / kappa1_cone + kappa_bar_sstar / (64.0 * x2 * ld * ld) + math.log(4.0 * math.e) / ld
    zeta = s_star + 2.0 / c4 + (2.0 / c4) * inner * s_star
    return zeta, int(math.ceil(s_star + zeta))


def contraction_radius_logistic(M0: float, x_inf: float, kappa_sbar: float, s_bar: int, d: int, n: int) -> float:
    if d < 2:
        raise ValueError("d must be >= 2")
    return M0 * x_inf / kappa_sbar * math.sqrt(s_bar * math.log(d) / n)


def lq_radius(q: float, l2_radius: float, s_bar: int) -> float:
    """l_q radius from the l_2 radius via ||v||_q <= ||v||_2 s_bar^(1/q - 1/2)."""
    if not 0 < q <= 2:
        raise ValueError("q must lie in (0, 2]")
    return l2_radius * float(s_bar) ** (1.0 / q - 0.5)


def make_design(n: int, d: int, rng: np.random.Generator, kind: str = "rademacher") -> np.ndarray:
    if kind == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(n, d))
    if kind == "gaussian":
        return rng.standard_normal((n, d))
    raise ValueError(f"unknown design kind {kind!r}")


def generate_logistic_data(theta_star, X, rng: np.random.Generator) -> LogisticData:
    ts = theta_star if isinstance(theta_star, SparseParam) else SparseParam.from_dense(theta_star)
    X = np.asarray(X, dtype=float)
    prob = expit(X @ ts.dense())
    y = (rng.random(X.shape[0]) < prob).astype(float)
    return LogisticData(X, y, ts)


# dataset text format ---------------------------------------------------------


def write_matrix(path, M: np.ndarray, kind: str, fmt: str = "%.17g") -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n, d = M.shape
    header = f"qpost-{kind} n={n} d={d}"
    np.savetxt(path, M, fmt=fmt, header=header, comments="# ")


def read_matrix(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing '# qpost-<kind> n=.. d=..' header")
    fields = first[1:].split()
    meta = {"kind": fields[0].removeprefix("qpost-")}
    for tok in fields[1:]:
        key, _, val = tok.partition("=")
        meta[key] = int(val)
    M = np.loadtxt(path, comments="#", ndmin=2)
    if M.size == 0:
        M = np.zeros((0, meta.get("d", 0)))
    if M.shape != (meta["n"], meta["d"]):
        raise ValueError(f"{path}: header says {meta['n']}x{meta['d']}, body is {M.shape[0]}x{M.shape[1]}")
    return M, meta


def write_logistic_data(path, data: LogisticData) -> None:
    """One row per observation: d covariates then the 0/1 response."""
    write_matrix(path, np.column_stack([data.X, data.y]), "logistic")


def read_logistic_data(path, theta_star=None) -> LogisticData:
    M, meta = read_matrix(path)
    if meta["kind"] != "logistic":
        raise ValueError(f"{path}: expected a logistic dataset, found {meta['kind']!r}")
    return LogisticData(M[:, :-1], M[:, -1], theta_star)


def write_vector(path, v) -> None:
    write_matrix(path, np.asarray(v, dtype=float).reshape(-1, 1), "vector")


def read_vector(path) -> np.ndarray:
    M, _ = read_matrix(path)
    return M[:, 0]
