"""Binary pairwise graphical model on {0,1}^p and its column-wise pseudo-likelihood.

f_theta(x) = exp(sum_j theta_jj x_j + sum_{i<j} theta_ij x_i x_j) / Z_theta.
The all-zeros state has energy 0, so theta carries no gauge freedom.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .core import MatrixParam, SparsityPattern
from .logistic import (
    CombinatorialGuardError,
    DegenerateDesignError,
    LogisticData,
    log1pexp,
    logistic_link,
    read_matrix,
    restricted_eig_cone,
    restricted_eig_sparse,
    write_matrix,
)

MAX_ENUM_P = 20
MAX_EXPECT_P = 12
_CHUNK = 1 << 16
SYMMETRIZATION_RULES = ("average", "min", "max")


@dataclass(frozen=True)
class IsingModel:
    theta: np.ndarray

    def __post_init__(self):
        t = np.array(self.theta, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("theta must be a square matrix")
        if not np.allclose(t, t.T, rtol=0, atol=1e-12):
            raise ValueError("a data-generating model needs a symmetric theta")
        t = 0.5 * (t + t.T)
        t.setflags(write=False)
        object.__setattr__(self, "theta", t)

    @property
    def p(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class IsingData:
    Z: np.ndarray
    theta_star: IsingModel | None = None

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float)
        if Z.ndim != 2:
            raise ValueError("Z must be a matrix")
        if np.any((Z != 0) & (Z != 1)):
            raise ValueError("entries of Z must be 0 or 1")
        if self.theta_star is not None and self.theta_star.p != Z.shape[1]:
            raise ValueError("theta_star size does not match the number of columns")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]


def _guard(p: int, cap: int, what: str) -> None:
    if p > cap:
        raise CombinatorialGuardError(f"{what} enumerates 2^p states and is capped at p={cap}; use sample_ising_gibbs")


def _states(start: int, stop: int, p: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(p)) & 1).astype(float)


def _energy(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    upper = np.triu(theta, 1)
    return X @ np.diag(theta) + ((X @ upper) * X).sum(axis=1)


def _log_weights(m: IsingModel) -> np.ndarray:
    """Unnormalized log weights of all 2^p states; state index bits give x."""
    p = m.p
    total = 1 << p
    out = np.empty(total)
    for a in range(0, total, _CHUNK):
        b = min(a + _CHUNK, total)
        out[a:b] = _energy(m.theta, _states(a, b, p))
    return out


def partition_function(m: IsingModel) -> float:
    """log Z_theta by enumeration (p <= 20)."""
    _guard(m.p, MAX_ENUM_P, "partition_function")
    return float(logsumexp(_log_weights(m)))


def ising_log_pmf(m: IsingModel, x, log_z: float | None = None) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.p:
        raise ValueError(f"states must have {m.p} entries")
    lz = partition_function(m) if log_z is None else log_z
    e = _energy(m.theta, np.atleast_2d(x)) - lz
    return float(e[0]) if x.ndim == 1 else e


def conditional_prob(m_theta: np.ndarray, x: np.ndarray, j: int) -> float:
    """P(x_j = 1 | x_-j) = g'(theta_jj + sum_{k != j} theta_kj x_k)."""
    field = m_theta[j, j] + sum(m_theta[k, j] * x[k] for k in range(len(x)) if k != j)
    return float(logistic_link(field)[1])


def sample_ising_exact(m: IsingModel, n: int, rng: np.random.Generator) -> IsingData:
    """Inverse-CDF draws from the enumerated table (p <= 20)."""
    _guard(m.p, MAX_ENUM_P, "sample_ising_exact")
    lw = _log_weights(m)
    cdf = np.cumsum(np.exp(lw - lw.max()))
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    idx = np.minimum(idx, cdf.size - 1)
    Z = ((idx[:, None] >> np.arange(m.p)) & 1).astype(float)
    return IsingData(Z, m)


def sample_ising_gibbs(m: IsingModel, n: int, rng: np.random.Generator, burnin: int = 1000, thin: int = 5) -> IsingData:
    """Systematic-scan heat-bath sampler; keeps every ``thin``-th sweep after ``burnin``."""
    if burnin < 0 or thin < 1:
        raise ValueError("need burnin >= 0 and thin >= 1")
    p = m.p
    theta = np.ascontiguousarray(m.theta)
    x = (rng.random(p) < 0.5).astype(float)
    out = np.zeros((n, p))
    if burnin:
        kernels.gibbs_sweeps(theta, x, rng.random((burnin, p)), np.zeros((0, p)), burnin, 1)
    rows_per_block = max(1, 8192 // thin)
    done = 0
    while done < n:
        r = min(rows_per_block, n - done)
        done += kernels.gibbs_sweeps(theta, x, rng.random((r * thin, p)), out[done:done + r], 0, thin)
    return IsingData(out, m)


def _as_matrix(theta) -> np.ndarray:
    if isinstance(theta, MatrixParam):
        return theta.dense()
    if isinstance(theta, IsingModel):
        return np.asarray(theta.theta)
    return np.asarray(theta, dtype=float)


def column_design(Z: np.ndarray, j: int) -> np.ndarray:
    """Z^(j): Z with column j replaced by ones (theta_jj plays the intercept)."""
    X = np.array(Z, dtype=float)
    X[:, j] = 1.0
    return X


def column_regression(data: IsingData, j: int) -> LogisticData:
    """Logistic regression of column j of Z on Z^(j), coefficient vector theta_.j."""
    ts = None if data.theta_star is None else data.theta_star.theta[:, j]
    return LogisticData(column_design(data.Z, j), data.Z[:, j], ts)


def pseudo_log_likelihood(theta, data: IsingData) -> tuple[float, np.ndarray]:
    """Total and per-column log pseudo-likelihood; column j uses theta_.j only."""
    t = _as_matrix(theta)
    if t.shape != (data.p, data.p):
        raise ValueError(f"theta must be {data.p}x{data.p}")
    Z = data.Z
    # eta[:, j] = theta_jj + sum_{k != j} Z_k theta_kj
    eta = Z @ t - Z * np.diag(t) + np.diag(t)
    cols = (Z * eta - log1pexp(eta)).sum(axis=0)
    return float(cols.sum()), cols


def population_fisher(m: IsingModel, j: int) -> np.ndarray:
    """E[g''(<theta_.j, X_(j)>) X_(j) X_(j)'] under f_theta, by enumeration (p <= 12)."""
    _guard(m.p, MAX_EXPECT_P, "population_fisher")
    if not 0 <= j < m.p:
        raise IndexError(f"column {j} out of range for p={m.p}")
    X = _states(0, 1 << m.p, m.p)
    lw = _energy(m.theta, X)
    prob = np.exp(lw - logsumexp(lw))
    X[:, j] = 1.0
    _, _, w = logistic_link(X @ m.theta[:, j])
    H = (X.T * (prob * w)) @ X
    return 0.5 * (H + H.T)


@dataclass
class Kappa2:
    s: int
    sparse_per_column: np.ndarray
    cone_per_column: np.ndarray
    cone_certificate_per_column: np.ndarray

    @property
    def kappa2_sparse(self) -> float:
        return float(self.sparse_per_column.min())

    @property
    def kappa2_cone(self) -> float:
        return float(self.cone_per_column.min())

    @property
    def kappa2_cone_certificate(self) -> float:
        return float(self.cone_certificate_per_column.min())


def kappa2_quantities(m: IsingModel, s: int, factor: float = 7.0, rng: np.random.Generator | None = None) -> Kappa2:
    """Restricted smallest eigenvalues of the population Fisher matrices, per column and minimized.

    The cone for column j is built on the support of theta_.j (diagonal included).
    """
    p = m.p
    sparse = np.empty(p)
    cone = np.empty(p)
    cert = np.empty(p)
    for j in range(p):
        H = population_fisher(m, j)
        sparse[j] = restricted_eig_sparse(H, s, "min")
        pattern = SparsityPattern.from_mask(m.theta[:, j] != 0.0)
        cone[j], cert[j] = restricted_eig_cone(H, pattern, factor, rng=rng)
    return Kappa2(s, sparse, cone, cert)


def zeta_ising(s_star_j: int, c4: float, p: int, kappa2_cone: float) -> tuple[float, int]:
    """Column sparsity level zeta_j and s_bar_j = ceil(s_star_j + zeta_j)."""
    if kappa2_cone <= 0:
        raise DegenerateDesignError("kappa2 must be positive")
    if p < 2:
        raise ValueError("p must be >= 2")
    lp = math.log(p)
    inner = 1.0 + 128.0 / kappa2_cone + s_star_j / (64.0 * lp * lp) + math.log(4.0 * math.e) / lp
    zeta = s_star_j + 4.0 / c4 + (2.0 / c4) * inner * s_star_j
    return zeta, int(math.ceil(s_star_j + zeta))


def zeta_ising_columns(s_star, c4: float, p: int, kappa2_cone: float):
    """Per-column (zeta_j, s_bar_j) and s_bar = max_j s_bar_j."""
    pairs = [zeta_ising(int(s), c4, p, kappa2_cone) for s in s_star]
    zetas = np.array([z for z, _ in pairs])
    s_bars = np.array([b for _, b in pairs], dtype=int)
    return zetas, s_bars, int(s_bars.max())


def contraction_radii_ising(M0: float, kappa_sbar: float, s_bar_vector, p: int, n: int) -> tuple[float, float]:
    """(Frobenius radius, largest-column-norm radius)."""
    if kappa_sbar <= 0 or M0 <= 0 or n < 1:
        raise ValueError("need M0 > 0, kappa > 0 and n >= 1")
    if p < 2:
        raise ValueError("p must be >= 2")
    sb = np.asarray(s_bar_vector, dtype=float)
    lp = math.log(p)
    frob = M0 / kappa_sbar * math.sqrt(sb.sum() * lp / n)
    tn = M0 / kappa_sbar * math.sqrt(sb.max() * lp / n)
    return frob, tn


def symmetrize(theta, rule: str = "average") -> np.ndarray:
    """Symmetric point estimate from an unconstrained p x p estimate.

    ``min``/``max`` keep whichever of theta_ij, theta_ji has smaller/larger magnitude.
    """
    t = _as_matrix(theta)
    tt = t.T
    if rule == "average":
        return 0.5 * (t + tt)
    if rule == "min":
        return np.where(np.abs(t) <= np.abs(tt), t, tt)
    if rule == "max":
        return np.where(np.abs(t) >= np.abs(tt), t, tt)
    raise ValueError(f"rule must be one of {SYMMETRIZATION_RULES}")


def edge_list(weights, pips, rule: str = "average") -> list[tuple[int, int, float, float]]:
    w = symmetrize(weights, rule)
    q = symmetrize(pips, rule)
    p = w.shape[0]
    return [(i, j, float(w[i, j]), float(q[i, j])) for i in range(p) for j in range(i + 1, p)]


def write_edge_list(path, edges) -> None:
    """Tab-delimited (i, j, weight, pip) with 0-based node indices, i < j."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["i", "j", "weight", "pip"])
        for i, j, wt, pip in edges:
            w.writerow([i, j, f"{wt:.17g}", f"{pip:.17g}"])


def read_edge_list(path) -> list[tuple[int, int, float, float]]:
    with Path(path).open() as fh:
        r = csv.reader(fh, delimiter="\t")
        next(r)
        return [(int(i), int(j), float(w), float(q)) for i, j, w, q in r]


def write_ising_data(path, data: IsingData) -> None:
    write_matrix(path, data.Z, "ising", fmt="%d")


def read_ising_data(path, theta_star: IsingModel | None = None) -> IsingData:
    Z, meta = read_matrix(path)
    if meta["kind"] != "ising":
        raise ValueError(f"{path}: expected an ising dataset, found {meta['kind']!r}")
    return IsingData(Z, theta_star)
