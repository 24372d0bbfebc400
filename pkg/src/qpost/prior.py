"""Spike-and-slab prior with a Laplace slab.

A pattern delta with ||delta||_0 = s has weight pi_delta = g_s / C(d, s);
given delta, active coordinates are i.i.d. Laplace(rho) with density
(rho/2) exp(-rho |t|) and inactive ones are exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

from .core import SparseParam, SparsityPattern, sparsity_pattern

SUPPORT_LAWS = ("beta_binomial", "explicit")


def log_binom(d: int, s) -> np.ndarray | float:
    return gammaln(d + 1) - gammaln(np.asarray(s) + 1) - gammaln(d - np.asarray(s) + 1)


def beta_binomial_log_g(d: int, u: float) -> np.ndarray:
    """log g_s, s = 0..d, when q ~ Beta(1, d^u) and delta_j | q ~ Ber(q)."""
    s = np.arange(d + 1)
    big = float(d) ** u
    return log_binom(d, s) + betaln(1.0 + s, big + d - s) - betaln(1.0, big)


@dataclass(frozen=True)
class PriorSpec:
    d: int
    rho: float
    support_law: str = "beta_binomial"
    u: float = 2.0
    g: tuple[float, ...] | None = None
    h2_constants: tuple[float, float, float, float] | None = None
    log_g: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("rho must be a positive finite number")
        if self.support_law == "beta_binomial":
            if self.u <= 1:
                raise ValueError("beta-binomial support law needs u > 1")
            log_g = beta_binomial_log_g(self.d, self.u)
            consts = self.h2_constants or (0.5, 1.0, float(self.u), float(self.u) - 1.0)
        elif self.support_law == "explicit":
            if self.g is None or len(self.g) != self.d + 1:
                raise ValueError(f"explicit support law needs d+1 = {self.d + 1} weights")
            g = np.asarray(self.g, dtype=float)
            if np.any(g < 0) or not math.isclose(g.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
                raise ValueError("explicit support law must be nonnegative and sum to 1")
            with np.errstate(divide="ignore"):
                log_g = np.log(g)
            consts = self.h2_constants
        else:
            raise ValueError(f"support_law must be one of {SUPPORT_LAWS}")
        if consts is not None:
            c1, c2, c3, c4 = consts
            if not (c1 > 0 and c2 > 0 and c3 >= c4 > 0):
                raise ValueError("H2 constants need c1, c2 > 0 and c3 >= c4 > 0")
            consts = tuple(float(c) for c in consts)
        log_g.setflags(write=False)
        object.__setattr__(self, "log_g", log_g)
        object.__setattr__(self, "h2_constants", consts)

    @classmethod
    def explicit(cls, g, rho: float, h2_constants=None) -> "PriorSpec":
        g = tuple(float(x) for x in g)
        return cls(len(g) - 1, rho, "explicit", g=g, h2_constants=h2_constants)

    def with_rho(self, rho: float) -> "PriorSpec":
        return PriorSpec(self.d, rho, self.support_law, self.u, self.g, self.h2_constants)

    def with_dim(self, d: int) -> "PriorSpec":
        if self.support_law == "explicit":
            if d != self.d:
                raise ValueError("an explicit support law fixes the dimension")
            return self
        return PriorSpec(d, self.rho, self.support_law, self.u, None, self.h2_constants)

    def size_log_weights(self) -> np.ndarray:
        """log pi_delta as a function of s = ||delta||_0, s = 0..d."""
        return self.log_g - log_binom(self.d, np.arange(self.d + 1))

    def g_probs(self) -> np.ndarray:
        return np.exp(self.log_g)


def support_log_weight(spec: PriorSpec, delta: SparsityPattern) -> float:
    """log pi_delta; -inf marks a support the law makes impossible."""
    if delta.d != spec.d:
        raise ValueError(f"pattern dimension {delta.d} != prior dimension {spec.d}")
    s = delta.size
    return float(spec.log_g[s] - log_binom(spec.d, s))


@dataclass
class H2Report:
    constants: tuple[float, float, float, float]
    lower: float
    upper: float
    passed: np.ndarray
    ratios: np.ndarray
    min_ratio: float
    max_ratio: float

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed))


def check_h2(spec: PriorSpec, constants=None, rtol: float = 1e-12) -> H2Report:
    """Check c1 d^-c3 g_{s-1} <= g_s <= c2 d^-c4 g_{s-1} for s = 1..d."""
    consts = tuple(constants) if constants is not None else spec.h2_constants
    if consts is None:
        raise ValueError("no H2 constants given or attached to the prior")
    c1, c2, c3, c4 = consts
    d = spec.d
    lower = c1 * float(d) ** (-c3)
    upper = c2 * float(d) ** (-c4)
    g = spec.g_probs()
    prev, cur = g[:-1], g[1:]
    passed = (lower * prev <= cur * (1 + rtol)) & (cur <= upper * prev * (1 + rtol))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(prev > 0, cur / np.where(prev > 0, prev, 1.0), np.nan)
    finite = ratios[np.isfinite(ratios)]
    return H2Report(
        constants=consts,
        lower=lower,
        upper=upper,
        passed=passed,
        ratios=ratios,
        min_ratio=float(finite.min()) if finite.size else float("nan"),
        max_ratio=float(finite.max()) if finite.size else float("nan"),
    )


def log_prior_density(spec: PriorSpec, theta) -> float:
    """Log density of theta's own mixture component relative to mu_{d,delta}."""
    x = theta.dense() if isinstance(theta, SparseParam) else np.asarray(theta, dtype=float)
    delta = sparsity_pattern(x)
    lw = support_log_weight(spec, delta)
    if lw == -np.inf:
        return -np.inf
    return lw + delta.size * math.log(spec.rho / 2.0) - spec.rho * float(np.abs(x).sum())


def select_rho_logistic(x_inf: float, n: int, d: int) -> float:
    """rho = 4 ||X||_inf sqrt(n log d)."""
    if d < 2:
        raise ValueError("d must be >= 2 so that log d > 0")
    if n < 1 or x_inf <= 0:
        raise ValueError("need n >= 1 and ||X||_inf > 0")
    return 4.0 * x_inf * math.sqrt(n * math.log(d))


def select_rho_ising(n: int, p: int) -> float:
    """rho = 24 sqrt(n log p)."""
    if p < 2:
        raise ValueError("p must be >= 2 so that log p > 0")
    if n < 1:
        raise ValueError("need n >= 1")
    return 24.0 * math.sqrt(n * math.log(p))


def sample_prior(spec: PriorSpec, rng: np.random.Generator) -> SparseParam:
    s = int(rng.choice(spec.d + 1, p=spec.g_probs() / spec.g_probs().sum()))
    active = np.sort(rng.choice(spec.d, size=s, replace=False)) if s else np.zeros(0, int)
    values = rng.laplace(0.0, 1.0 / spec.rho, size=s)
    while np.any(values == 0.0):
        zero = values == 0.0
        values[zero] = rng.laplace(0.0, 1.0 / spec.rho, size=int(zero.sum()))
    return SparseParam(SparsityPattern(spec.d, tuple(active.tolist())), values)
