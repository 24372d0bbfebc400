"""Fast invariant suite behind ``qpost verify``.

Each check returns (passed, detail). The suite is deterministic and finishes in
well under a minute; the heavier statistical checks live in the test suite.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import brentq

from .core import ConeSpec, SparseParam, cone_contains, norms, sparsity_pattern, tnorm
from .ising import IsingModel, column_regression, ising_log_pmf, population_fisher, pseudo_log_likelihood, sample_ising_exact
from .logistic import LogisticData, bregman_divergence, grad_log_quasi_likelihood, log_quasi_likelihood, make_design
from .prior import PriorSpec, check_h2
from .sampler import exact_posterior_oracle
from .theory import (
    RateFunction,
    e0_margin,
    e0_margin_bruteforce,
    h_lower_bound,
    laplace_gauss_integral,
    mills_ratio,
    phi_r,
    rate_shift_infimum,
    self_concordance_bounds,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _pmf_sums_to_one():
    rng = np.random.default_rng(1)
    worst = 0.0
    for p in (1, 3, 6, 10):
        a = rng.normal(0, 0.7, (p, p))
        m = IsingModel(0.5 * (a + a.T))
        X = np.array(list(itertools.product([0.0, 1.0], repeat=p)))
        worst = max(worst, abs(np.exp(ising_log_pmf(m, X)).sum() - 1.0))
    return worst <= 1e-10, f"max |sum pmf - 1| = {worst:.2e}"


def _mills_chain():
    z = np.round(np.arange(0, 1001) * 0.01, 10)
    worst = math.inf
    for zz in z:
        m = mills_ratio(float(zz))
        worst = min(worst, m.lower2 - m.lower1, m.value - m.lower2, m.upper - m.value)
    return worst >= -1e-12, f"min slack {worst:.2e}"


def _self_concordance():
    rng = np.random.default_rng(2)
    x0 = rng.normal(0, 4, 10**4)
    u = rng.normal(0, 3, 10**4)
    lo, mid, hi = self_concordance_bounds(x0, u)
    slack = min(float((mid - lo).min()), float((hi - mid).min()))
    return slack >= -1e-12, f"min slack {slack:.2e}"


def _h_bound():
    x = np.linspace(0.0, 50.0, 5001)[1:]
    H, b = h_lower_bound(x)
    slack = float((H - b).min())
    return slack >= -1e-12, f"min slack {slack:.2e}"


def _laplace_gauss():
    worst = 0.0
    for a in (0.1, 1.0, 10.0):
        for b in (0.1, 1.0, 10.0):
            ref = 2.0 * integrate.quad(lambda u: math.exp(-0.5 * a * u * u - b * u), 0, 40, epsabs=0, epsrel=1e-13, limit=200)[0]
            worst = max(worst, abs(laplace_gauss_integral(a, b) / ref - 1.0))
    return worst <= 1e-8, f"max rel err {worst:.2e}"


def _phi_r():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        tau, b = rng.uniform(0.1, 5), rng.uniform(0, 3)
        a = rng.uniform(0, 0.99 * tau / b) if b > 0 else rng.uniform(0, 5)
        closed = phi_r(RateFunction(tau, b), a)
        # r(z) >= a z on z >= x  <=>  tau z/(1+bz) >= a; root of the monotone map
        hi = 1.0
        while tau * hi / (1 + b * hi) < a:
            hi *= 2
        ref = brentq(lambda z: tau * z / (1 + b * z) - a, 0.0, hi, xtol=1e-14, rtol=1e-15) if a > 0 else 0.0
        worst = max(worst, abs(closed - ref))
    inf_ok = phi_r(RateFunction(1.0, 1.0), 1.0) == math.inf
    return worst <= 1e-9 and inf_ok, f"max abs err {worst:.2e}; boundary gives inf: {inf_ok}"


def _shift_infimum():
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(200):
        tau, b, c = rng.uniform(0.1, 5), rng.uniform(0, 2), rng.uniform(0, 3)
        res = rate_shift_infimum(RateFunction(tau, b), c)
        if res.bound_valid and res.exact_inf < res.reference_bound - 1e-12:
            bad += 1
    return bad == 0, f"{bad} violations of the reference lower bound"


def _gradient_fd():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(5, 40)), int(rng.integers(1, 8))
        X = rng.normal(size=(n, d))
        data = LogisticData(X, (rng.random(n) < 0.5).astype(float))
        th = rng.normal(size=d)
        g = grad_log_quasi_likelihood(th, data)
        fd = np.empty(d)
        for j in range(d):
            e = np.zeros(d)
            h = 1e-5 * max(1.0, abs(th[j]))
            e[j] = h
            fd[j] = (log_quasi_likelihood(th + e, data) - log_quasi_likelihood(th - e, data)) / (2 * h)
        worst = max(worst, float(np.abs(g - fd).max() / max(1.0, np.abs(g).max())))
    return worst <= 1e-6, f"max rel err {worst:.2e}"


def _bregman_concave():
    rng = np.random.default_rng(6)
    data = LogisticData(rng.normal(size=(30, 5)), (rng.random(30) < 0.5).astype(float))
    ts = rng.normal(size=5)
    worst = max(bregman_divergence(rng.normal(scale=3, size=5), ts, data) for _ in range(1000))
    return worst <= 1e-12, f"max value {worst:.2e}"


def _e0_bruteforce():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 13))
        s = int(rng.integers(0, d + 1))
        g = rng.normal(size=d)
        worst = max(worst, abs(e0_margin(g, ConeSpec.sparse(d, s), "l2") - e0_margin_bruteforce(g, s)))
    return worst <= 1e-12, f"max abs diff {worst:.2e}"


def _cone_closure():
    rng = np.random.default_rng(8)
    from .core import SparsityPattern

    pat = SparsityPattern(6, (0, 2))
    cones = [ConeSpec.full(6), ConeSpec.sparse(6, 3), ConeSpec.pattern_cone(pat), ConeSpec.n_cone(pat),
             ConeSpec.column_sparse([1, 2])]
    bad = 0
    for c in cones:
        for _ in range(300):
            v = rng.normal(size=c.d) * (rng.random(c.d) < 0.5)
            if c.kind == "N":
                v[~pat.mask()] *= 0.1
            if not cone_contains(c, v):
                continue
            lam = rng.uniform(0.01, 10)
            u = rng.choice([-1.0, 1.0], size=c.d)
            if not (cone_contains(c, lam * v) and cone_contains(c, u * v)):
                bad += 1
    return bad == 0, f"{bad} closure failures"


def _norm_sandwich():
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(200):
        p = int(rng.integers(1, 7))
        m = rng.normal(size=(p, p))
        t, f = tnorm(m), float(np.linalg.norm(m))
        bad += not (t <= f + 1e-12 and f <= math.sqrt(p) * t + 1e-12)
    v = SparseParam.from_dense([0.0, 1.5, 0.0, -2.0])
    same = sparsity_pattern(SparseParam.from_dense(v.dense())) == v.pattern and norms(v)[0] == 2
    return bad == 0 and same, f"{bad} sandwich failures; pattern round trip ok: {same}"


def _fisher_example():
    H = population_fisher(IsingModel(np.zeros((2, 2))), 0)
    ref = 0.25 * np.array([[1.0, 0.5], [0.5, 0.5]])
    err = float(np.abs(H - ref).max())
    return err <= 1e-12, f"max abs err {err:.2e}"


def _pseudo_likelihood_columns():
    rng = np.random.default_rng(10)
    a = rng.normal(0, 0.5, (5, 5))
    m = IsingModel(0.5 * (a + a.T))
    data = sample_ising_exact(m, 300, rng)
    total, cols = pseudo_log_likelihood(m.theta, data)
    ref = [column_regression(data, j).log_quasi_likelihood(m.theta[:, j]) for j in range(5)]
    err = max(abs(total - sum(ref)), float(np.abs(cols - ref).max()))
    return err <= 1e-9, f"max abs diff {err:.2e}"


def _h2_beta_binomial():
    ok = all(check_h2(PriorSpec(d, 1.0, u=u)).all_pass for d in (2, 5, 20, 100) for u in (1.5, 2.0, 3.0))
    return ok, "beta-binomial prior satisfies its H2 constants"


def _oracle_flat():
    d = 3
    prior = PriorSpec(d, 1.5)
    o = exact_posterior_oracle(LogisticData.flat(d), prior, grid=(None, 101))
    lw = prior.size_log_weights()
    worst = max(abs(p - math.exp(lw[len(S)])) for S, p in o.support_probs.items())
    return worst <= 1e-8, f"max |P(delta) - pi_delta| = {worst:.2e}"


CHECKS = {
    "ising_pmf_normalized": _pmf_sums_to_one,
    "mills_ratio_chain": _mills_chain,
    "self_concordance_sandwich": _self_concordance,
    "h_lower_bound": _h_bound,
    "laplace_gauss_integral": _laplace_gauss,
    "phi_r_closed_form": _phi_r,
    "rate_shift_reference_bound": _shift_infimum,
    "gradient_finite_differences": _gradient_fd,
    "bregman_nonpositive": _bregman_concave,
    "e0_sparse_margin": _e0_bruteforce,
    "split_cone_closure": _cone_closure,
    "norm_sandwich_and_patterns": _norm_sandwich,
    "population_fisher_null_p2": _fisher_example,
    "pseudo_likelihood_columns": _pseudo_likelihood_columns,
    "h2_beta_binomial": _h2_beta_binomial,
    "oracle_flat_likelihood": _oracle_flat,
}


def run_suite(names=None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        if names and name not in names:
            continue
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t))
    return out
