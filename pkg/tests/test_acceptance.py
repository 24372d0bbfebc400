"""Acceptance criteria, one test each.

Every test records a ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line, printed together at the end of the pytest run (and to stdout when this
file is executed directly).
"""
import itertools
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, special
from scipy.optimize import brentq

from conftest import ACCEPTANCE_LINES
from qpost.core import ConeSpec, SparsityPattern, cone_contains
from qpost.ising import (
    IsingModel,
    column_regression,
    ising_log_pmf,
    population_fisher,
    sample_ising_exact,
    sample_ising_gibbs,
)
from qpost.logistic import (
    LogisticData,
    bregman_divergence,
    contraction_radius_logistic,
    curvature_summary,
    generate_logistic_data,
    grad_log_quasi_likelihood,
    log_quasi_likelihood,
    make_design,
    restricted_eig_sparse,
    zeta_logistic,
)
from qpost.prior import PriorSpec, select_rho_logistic
from qpost.sampler import ChainConfig, column_seed, exact_posterior_oracle, l2_distance_exceeds, run_chain, run_ising_columns
from qpost.theory import (
    RateFunction,
    event_margin_E0,
    h_lower_bound,
    laplace_gauss_integral,
    logistic_bound_report,
    logistic_rate_function,
    mills_ratio,
    phi_r,
    self_concordance_bounds,
    thm2_part1_rhs,
    thm2_part2_terms,
)


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    ts = np.array([1.5, 0.0, 0.0, 0.0])
    data = generate_logistic_data(ts, make_design(30, 4, rng), rng)
    prior = PriorSpec(4, 2.0)
    radii = (0.25, 0.5, 1.0)
    oracle = exact_posterior_oracle(data, prior, radii=radii, theta_star=ts)
    chain = run_chain(data, prior, ChainConfig(500_000, seed=1),
                      events={r: l2_distance_exceeds(ts, r) for r in radii})
    incl = float(np.abs(chain.inclusion_probs - oracle.inclusion_probs).max())
    rad = max(abs(chain.event_estimates[r][0] - oracle.event_estimates[f"l2_dist>{r:g}"][0]) for r in radii)
    secs = time.perf_counter() - t0
    record(1, incl <= 0.03 and rad <= 0.03 and secs <= 120,
           f"max inclusion gap {incl:.4f}, max radius-event gap {rad:.4f} (tol 0.03), {secs:.1f}s")


def test_criterion_02_prior_recovery():
    d, u = 6, 2.0
    prior = PriorSpec(d, 1.0, u=u)
    lw = prior.size_log_weights()
    # per-support weights; coordinate 0 is active in C(d-1, k-1) supports of size k
    target = sum(math.comb(d - 1, k - 1) * math.exp(lw[k]) for k in range(1, d + 1))
    s = run_chain(LogisticData.flat(d), prior, ChainConfig(300_000, seed=3))
    gap = float(np.abs(s.inclusion_probs - target).max())
    record(2, gap <= 0.02, f"enumerated inclusion {target:.4f}, max sampler gap {gap:.4f} (tol 0.02)")


def test_criterion_03_gradient():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(5, 60)), int(rng.integers(1, 10))
        data = LogisticData(rng.normal(size=(n, d)), (rng.random(n) < 0.5).astype(float))
        th = rng.normal(scale=2, size=d)
        g = grad_log_quasi_likelihood(th, data)
        fd = np.empty(d)
        for j in range(d):
            h = 1e-5 * max(1.0, abs(th[j]))
            e = np.zeros(d)
            e[j] = h
            fd[j] = (log_quasi_likelihood(th + e, data) - log_quasi_likelihood(th - e, data)) / (2 * h)
        worst = max(worst, float(np.abs(g - fd).max() / max(1.0, np.abs(g).max())))
    record(3, worst <= 1e-6, f"max relative error {worst:.2e} over 100 points (tol 1e-6)")


def test_criterion_04_analytic_inequalities():
    slack = math.inf
    for z in np.round(np.arange(0, 1001) * 0.01, 10):
        m = mills_ratio(float(z))
        slack = min(slack, m.lower2 - m.lower1, m.value - m.lower2, m.upper - m.value)
    rng = np.random.default_rng(4)
    lo, mid, hi = self_concordance_bounds(rng.normal(0, 4, 10**4), rng.normal(0, 3, 10**4))
    slack = min(slack, float((mid - lo).min()), float((hi - mid).min()))
    H, b = h_lower_bound(np.linspace(0.0, 50.0, 50_001)[1:])
    slack = min(slack, float((H - b).min()))
    rel = 0.0
    for a, bb in itertools.product((0.01, 0.5, 3.0, 40.0), (1e-3, 0.2, 2.0, 15.0)):
        ref = 2.0 * integrate.quad(lambda x: math.exp(-0.5 * a * x * x - bb * x), 0, np.inf,
                                   epsabs=0, epsrel=1e-13, limit=400)[0]
        rel = max(rel, abs(laplace_gauss_integral(a, bb) / ref - 1.0))
    record(4, slack >= -1e-12 and rel <= 1e-8,
           f"min slack {slack:.2e} (tol -1e-12), Laplace-Gauss max rel err {rel:.2e} (tol 1e-8)")


def test_criterion_05_phi_r():
    rng = np.random.default_rng(5)
    worst, drawn = 0.0, 0
    while drawn < 100:
        tau, b, a = rng.uniform(0.05, 10), rng.uniform(0, 4), rng.uniform(0, 10)
        if not tau > a * b:
            continue
        drawn += 1
        # smallest x with r(z) >= a z for all z >= x; r(z)/z is increasing, so bisect r(x) - a x
        f = lambda x: tau * x * x / (1 + b * x) - a * x
        hi = 1.0
        while f(hi) < 0:
            hi *= 2
        lo, x = 0.0, hi
        if a > 0:
            lo = hi / 2 if hi > 1 else 1e-300
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
            x = hi
        else:
            x = 0.0
        worst = max(worst, abs(phi_r(RateFunction(tau, b), a) - x))
    boundary = all(phi_r(RateFunction(t, b), a) == math.inf for t, b, a in [(1, 1, 1), (2, 1, 3), (0.5, 0.25, 4)])
    record(5, worst <= 1e-9 and boundary, f"max abs error {worst:.2e} (tol 1e-9); +inf at tau <= ab: {boundary}")


def test_criterion_06_curvature_sandwich():
    rng = np.random.default_rng(6)
    bad, checked, worst = 0, 0, math.inf
    for trial in range(20):
        d = int(rng.integers(3, 11))
        s = int(rng.integers(1, min(3, d - 1) + 1))
        n = int(rng.integers(30, 200))
        pat = SparsityPattern(d, tuple(sorted(rng.choice(d, s, replace=False))))
        ts = np.zeros(d)
        ts[list(pat.active)] = rng.normal(0, 1, s)
        data = generate_logistic_data(ts, rng.normal(size=(n, d)), rng)
        cs = curvature_summary(data, ts)
        kappa_bar = restricted_eig_sparse(cs.gram, s, "max")
        kappa = float(np.linalg.eigvalsh(cs.fisher)[0])  # certified: lambda_min bounds every cone
        r = logistic_rate_function(n, kappa, s, cs.x_inf)
        on = pat.mask()
        for _ in range(10):
            scale = 10 ** rng.uniform(-3, 1)
            lower_dir = np.where(on, rng.normal(size=d), 0.0)
            upper_dir = np.where(on, rng.normal(size=d), 0.0)
            off = rng.normal(size=d) * ~on
            if off.any():
                off *= rng.uniform(0, 7) * np.abs(upper_dir).sum() / np.abs(off).sum()
            upper_dir = upper_dir + off
            assert cone_contains(ConeSpec.pattern_cone(pat), lower_dir)
            assert cone_contains(ConeSpec.n_cone(pat), upper_dir)
            for v in (lower_dir, upper_dir):
                delta = scale * v / np.linalg.norm(v)
                L = bregman_divergence(ts + delta, ts, data)
                t = float(np.linalg.norm(delta))
                if v is lower_dir:
                    gap = L + n / 8 * kappa_bar * t * t
                else:
                    gap = -0.5 * r(t) - L
                worst = min(worst, gap / max(1.0, abs(L)))
                bad += gap < -1e-10 * max(1.0, abs(L))
                checked += 1
    record(6, bad == 0 and checked == 400,
           f"{checked // 2} random theta, {bad} violations, min relative slack {worst:.2e}")


def test_criterion_07_ising_exactness():
    rng = np.random.default_rng(7)
    pmf_err = 0.0
    for p in (1, 2, 5, 8, 12):
        a = rng.normal(0, 0.5, (p, p))
        m = IsingModel(0.5 * (a + a.T))
        X = np.array(list(itertools.product([0.0, 1.0], repeat=p)))
        pmf_err = max(pmf_err, abs(math.fsum(np.exp(ising_log_pmf(m, X))) - 1.0))
    a = rng.normal(0, 0.6, (8, 8))
    m = IsingModel(0.5 * (a + a.T))
    ex = sample_ising_exact(m, 100_000, rng).Z
    gb = sample_ising_gibbs(m, 100_000, rng).Z
    freq_gap = float(np.abs(ex.T @ ex - gb.T @ gb).max() / 100_000)
    H = population_fisher(IsingModel(np.zeros((2, 2))), 0)
    fisher_err = float(np.abs(H - 0.25 * np.array([[1.0, 0.5], [0.5, 0.5]])).max())
    record(7, pmf_err <= 1e-10 and freq_gap <= 0.02 and fisher_err <= 1e-12,
           f"pmf sum error {pmf_err:.1e}, Gibbs vs exact pairwise gap {freq_gap:.4f}, Fisher error {fisher_err:.1e}")


def test_criterion_08_column_factorization():
    rng = np.random.default_rng(8)
    theta = np.zeros((5, 5))
    theta[0, 1] = theta[1, 0] = 1.5
    theta[2, 3] = theta[3, 2] = -1.0
    data = sample_ising_exact(IsingModel(theta), 400, rng)
    prior = PriorSpec(5, 3.0)
    cfg = ChainConfig(4000, seed=99)
    same = True
    for workers in (1, 3):
        fit = run_ising_columns(data, prior, cfg, workers=workers)
        for j in range(5):
            alone = run_chain(column_regression(data, j), prior, replace(cfg, seed=column_seed(99, j)))
            same &= np.array_equal(fit.columns[j].draws, alone.draws)
            same &= np.array_equal(fit.inclusion[:, j], alone.inclusion_probs)
        nd = fit.columns[0].draws.shape[0]
        same &= np.array_equal(fit.joint_draws(), np.hstack([c.draws[:nd] for c in fit.columns]))
    record(8, bool(same), f"column assembly bit-identical to standalone chains (1 and 3 workers): {bool(same)}")


def test_criterion_09_e0_event():
    d, n, reps = 50, 400, 500
    rng = np.random.default_rng(9)
    ts = np.zeros(d)
    ts[:3] = 1.0
    misses = 0
    for _ in range(reps):
        data = generate_logistic_data(ts, make_design(n, d, rng), rng)
        rho = select_rho_logistic(data.x_inf, n, d)
        z = grad_log_quasi_likelihood(ts, data)
        misses += not event_margin_E0(z, ConeSpec.full(d), "l1", rho).member
    frac = misses / reps
    p0 = 2.0 / d
    limit = p0 + 3.0 * math.sqrt(p0 * (1 - p0) / reps)
    record(9, frac <= limit, f"fraction outside the event {frac:.4f} <= {limit:.4f} (2/d + 3 s.e.)")


def test_criterion_10_rate():
    from qpost.config import resolve
    from qpost.study import rate_study

    t0 = time.perf_counter()
    cfg = resolve({"task": "rate-study", "seed": 2024,
                   "study": {"d": 32, "s_star": 3, "n_grid": [200, 400, 800, 1600], "replications": 20},
                   "prior": {"rho_scale": 0.25}, "sampler": {"iterations": 20_000, "birth_scale": 1.0}})
    res = rate_study(cfg)
    fit = res.slopes["32"]
    secs = time.perf_counter() - t0
    med = ", ".join(f"{c['median_error']:.3f}" for c in res.cells)
    record(10, -0.65 <= fit["slope"] <= -0.35 and secs <= 1800,
           f"slope {fit['slope']:.3f} (95% CI {fit['ci'][0]:.3f}..{fit['ci'][1]:.3f}, target [-0.65, -0.35]); "
           f"median errors {med}; {secs:.0f}s")


def _inf_shift(tau, b, c):
    """inf_{x>0} tau x^2/(1+bx) - c x from the root of the derivative."""
    if tau <= c * b:
        return -math.inf
    g = lambda x: tau * x * (2 + b * x) / (1 + b * x) ** 2 - c
    hi = 1.0
    while g(hi) < 0:
        hi *= 2
    x = brentq(g, 0.0, hi, xtol=1e-300, rtol=1e-15)
    return tau * x * x / (1 + b * x) - c * x


def _lbinom(d, s):
    return special.gammaln(d + 1) - special.gammaln(s + 1) - special.gammaln(d - s + 1)


def test_criterion_11_bound_evaluators():
    # worked sparsity level: s*=3, c4=1, d=1000, ||X||inf=1, kappa_cone=0.5, kappa_bar=1
    ld = math.log(1000)
    inner = 1 + 64 / 0.5 + 1 / (64 * ld * ld) + math.log(4 * math.e) / ld
    zeta_ref = 3 + 2 + 2 * inner * 3
    zeta, _ = zeta_logistic(3, 1.0, 1000, 1.0, 0.5, 1.0)
    rep = logistic_bound_report(10_000, 1000, 3, 1.0, 0.5, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0).to_dict()
    # worked radius: M0=3, ||X||inf=1, kappa=0.5, s_bar=10, d=100, n=1e4
    radius_ref = 3 * 1 / 0.5 * math.sqrt(10 * math.log(100) / 1e4)
    radius = contraction_radius_logistic(3.0, 1.0, 0.5, 10, 100, 10_000)
    sig6 = lambda a, b: abs(a - b) <= 5e-7 * abs(b)
    ok = sig6(zeta, zeta_ref) and sig6(rep["values"]["zeta"], zeta_ref) and sig6(radius, radius_ref)
    # at those inputs tau <= c b, so both concentration bounds are vacuous
    tau, b = 1e4 * 0.5, 4 * math.sqrt(3)
    rho = 4 * math.sqrt(1e4 * ld)
    ok &= tau <= 4 * rho * math.sqrt(3) * b and rep["values"]["part1_log_rhs"]["0"] == math.inf
    ok &= tau <= 2 * rho * b and rep["flags"].get("eps_bar_infinite", False)

    # finite regime: both evaluators against a direct re-derivation
    n, d, s, x_inf, kap, kbar, c = 10**6, 100, 2, 1.0, 0.5, 1.0, 1.0
    rho = 4 * x_inf * math.sqrt(n * math.log(d))
    tau, b = n * kap, 4 * math.sqrt(s) * x_inf
    L_bar = n * kbar / 4
    r = RateFunction(tau, b)
    gap1 = 0.0
    for k in (0, 1, 3):
        a = -0.5 * _inf_shift(tau, b, 4 * rho * math.sqrt(s))
        ref = math.log(2) + a + s * math.log(4 + 4 * L_bar / rho**2) + _lbinom(d, s) + k * (math.log(4 * c) - math.log(d))
        gap1 = max(gap1, abs(thm2_part1_rhs(k, s, d, rho, L_bar, r, c, c).log_value / ref - 1))
    eps = 2 * rho / (tau - 2 * rho * b)
    M0, s_bar, j_max = 3.0, 7, 2000
    c0 = math.sqrt(s_bar)
    rates = [tau * x * x / (1 + b * x) for x in (j * M0 * eps / 2 for j in range(1, j_max + 1))]
    lp = _lbinom(d, s_bar) + s_bar * math.log(24)
    t1 = [lp - rr / 8 for rr in rates]
    pref = math.log(2) + _lbinom(d, s) + s * math.log(d) + s * math.log(1 + L_bar / rho**2)
    t2 = [-rr / 8 + 3 * rho * c0 * j * M0 * eps for j, rr in enumerate(rates, 1)]
    ref1 = max(t1) + math.log(math.fsum(math.exp(t - max(t1)) for t in t1))
    ref2 = pref + max(t2) + math.log(math.fsum(math.exp(t - max(t2)) for t in t2))
    terms = thm2_part2_terms(M0, phi_r(r, 2 * rho), r, rho, c0, s, d, c, c, L_bar, s_bar, j_max)
    gap2 = max(abs(terms.log_series1 / ref1 - 1), abs(terms.log_series2 / ref2 - 1))
    ok &= gap1 <= 5e-7 and gap2 <= 5e-7
    record(11, bool(ok),
           f"zeta {zeta:.6g} vs re-derived {zeta_ref:.6g}; radius {radius:.6g} vs re-derived {radius_ref:.6g} "
           f"(documented 0.40723 differs by {abs(radius - 0.40723):.1e}, an arithmetic slip); "
           f"desk-scale bounds +inf as expected; finite-regime rel gaps part1 {gap1:.1e}, part2 {gap2:.1e}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
