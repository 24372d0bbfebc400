import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import ndtr

from qpost.core import ConeSpec
from qpost.theory import (
    BoundReport,
    RateFunction,
    c0_sparse_upper,
    e0_margin,
    e0_margin_bruteforce,
    event_margin_E0,
    h_lower_bound,
    hellinger_transform,
    hoeffding_e0_bound,
    laplace_gauss_integral,
    laplace_gauss_lower_bound,
    logistic_bound_report,
    logistic_rate_function,
    mills_ratio,
    packing_bound,
    phi_r,
    rate_eval,
    rate_shift_infimum,
    self_concordance_bounds,
    thm2_part1_rhs,
    thm2_part2_terms,
)


def test_rate_eval():
    assert rate_eval(RateFunction(3.0, 2.0), 0.0) == 0.0
    assert rate_eval(RateFunction(2.0, 0.0), 3.0) == 18.0
    assert RateFunction(1.0, 1.0)(1.0) == 0.5
    with pytest.raises(ValueError):
        RateFunction(0.0, 1.0)
    with pytest.raises(ValueError):
        rate_eval(RateFunction(1.0), -1.0)
    r = logistic_rate_function(400, 0.5, 4, 1.0)
    assert (r.tau, r.b) == (200.0, 8.0)


def test_phi_r_examples():
    assert phi_r(RateFunction(2.0, 0.0), 1.0) == pytest.approx(0.5)
    assert phi_r(RateFunction(1.0, 1.0), 0.25) == pytest.approx(1 / 3, abs=1e-12)
    assert phi_r(RateFunction(1.0, 1.0), 1.0) == math.inf
    assert phi_r(RateFunction(1.0, 1.0), 0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 10), st.one_of(st.just(0.0), st.floats(1e-6, 5)), st.floats(0.01, 0.99))
def test_phi_r_definition(tau, b, frac):
    a = frac * tau / b if b > 0 else frac * 10
    r = RateFunction(tau, b)
    x = phi_r(r, a)
    z = np.linspace(x, 50 * x + 10, 2001)
    assert math.isfinite(x)
    assert np.all(r(z) >= a * z * (1 - 1e-12))
    if x > 0:
        assert r(0.99 * x) < a * 0.99 * x


def test_rate_shift_examples():
    res = rate_shift_infimum(RateFunction(2.0, 0.0), 1.0)
    assert res.exact_inf == pytest.approx(-1 / 8, abs=1e-12) and res.exact_inf >= res.reference_bound
    res = rate_shift_infimum(RateFunction(2.0, 1.0), 1.0)
    grid = np.linspace(0, 10, 1_000_001)
    assert res.bound_valid and res.exact_inf >= -0.25
    assert res.exact_inf == pytest.approx(float(np.min(2 * grid**2 / (1 + grid) - grid)), abs=1e-9)
    assert rate_shift_infimum(RateFunction(2.0, 1.0), 0.0).exact_inf == 0.0
    assert rate_shift_infimum(RateFunction(1.0, 1.0), 2.0).exact_inf == -math.inf


def test_mills_examples():
    m = mills_ratio(0.0)
    assert m.value == pytest.approx(math.sqrt(math.pi / 2), rel=1e-14)
    assert (m.lower2, m.upper) == pytest.approx((1.0, 4 / math.sqrt(8)))
    m = mills_ratio(10.0)
    assert m.value == pytest.approx(0.09903, abs=5e-6)
    assert m.lower1 <= m.lower2 <= m.value <= m.upper


def test_mills_ordering_grid():
    for z in np.arange(1001) * 0.01:
        m = mills_ratio(float(z))
        assert m.lower1 <= m.lower2 + 1e-12 and m.lower2 <= m.value + 1e-12 and m.value <= m.upper + 1e-12


def test_laplace_gauss():
    assert laplace_gauss_integral(0.0, 1.0) == 2.0
    ref = 2 * (1 - ndtr(1.0)) / (math.exp(-0.5) / math.sqrt(2 * math.pi))
    assert laplace_gauss_integral(1.0, 1.0) == pytest.approx(ref, rel=1e-13)
    assert laplace_gauss_integral(1.0, 1.0) == pytest.approx(1.31136, abs=5e-6)
    for a, b in itertools.product([0.1, 1.0, 10.0], repeat=2):
        quad = 2 * integrate.quad(lambda u: math.exp(-0.5 * a * u * u - b * u), 0, 40, epsabs=0, epsrel=1e-13)[0]
        assert laplace_gauss_integral(a, b) == pytest.approx(quad, rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 100), st.floats(0, 1e4))
def test_laplace_gauss_lower_bound(rho, L):
    assert laplace_gauss_integral(L, rho) >= laplace_gauss_lower_bound(rho, L) * (1 - 1e-12)


def test_self_concordance_examples():
    assert self_concordance_bounds(0.0, 0.0) == (0.0, 0.0, 0.0)
    lo, mid, hi = self_concordance_bounds(0.0, 1.0)
    assert lo == pytest.approx(0.25 * math.exp(-1), abs=1e-12)
    assert mid == pytest.approx(math.log1p(math.e) - math.log(2) - 0.5, abs=1e-14)
    assert hi == pytest.approx(0.25 * (math.e - 2), abs=1e-12)


def test_self_concordance_sweep():
    rng = np.random.default_rng(0)
    lo, mid, hi = self_concordance_bounds(rng.normal(0, 5, 10**4), rng.normal(0, 3, 10**4))
    assert np.all(mid - lo >= -1e-12) and np.all(hi - mid >= -1e-12)


def test_h_lower_bound():
    assert h_lower_bound(0.0) == (0.0, 0.0)
    assert h_lower_bound(1.0) == pytest.approx((math.exp(-1), 1 / 3))
    H, b = h_lower_bound(np.linspace(0, 50, 5001)[1:])
    assert np.all(H - b >= -1e-12)


def test_hellinger():
    p = np.array([0.2, 0.3, 0.5])
    assert hellinger_transform(p, p) == pytest.approx(1.0)
    assert hellinger_transform([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert hellinger_transform([0.5, 0.5], [0.9, 0.1]) == pytest.approx(math.sqrt(0.45) + math.sqrt(0.05))
    rng = np.random.default_rng(1)
    for _ in range(100):
        q1, q2 = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
        assert hellinger_transform(q1, q2) <= 1 + 1e-12


def test_e0_examples():
    g = [3.0, -4.0, 0.0]
    assert e0_margin(g, ConeSpec.sparse(3, 1), "l2") == pytest.approx(4.0)
    assert e0_margin(g, ConeSpec.sparse(3, 2), "l2") == pytest.approx(5.0)
    assert e0_margin(g, ConeSpec.full(3), "l1") == pytest.approx(4.0)
    ev = event_margin_E0(np.zeros(3), ConeSpec.full(3), "l2", 1e-9)
    assert ev.member and ev.margin == 0.0
    with pytest.raises(ValueError):
        e0_margin(g, ConeSpec.n_cone(__import__("qpost.core", fromlist=["x"]).SparsityPattern(3, (0,))), "l2")
    # column-sparse: column 0 = (1, 2), column 1 = (3, 0)
    assert e0_margin([1.0, 2.0, 3.0, 0.0], ConeSpec.column_sparse([1, 1]), "l2") == pytest.approx(math.sqrt(13))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12).flatmap(lambda d: st.tuples(st.just(d), st.integers(0, d), st.integers(0, 10**6))))
def test_e0_bruteforce(args):
    d, s, seed = args
    g = np.random.default_rng(seed).normal(size=d)
    assert e0_margin(g, ConeSpec.sparse(d, s), "l2") == pytest.approx(e0_margin_bruteforce(g, s), abs=1e-12)


def test_packing_bound():
    assert packing_bound(10, 0) == 0.0
    assert math.exp(packing_bound(10, 2)) == pytest.approx(45 * 576)
    vals = [packing_bound(10, s) for s in range(6)]
    assert np.all(np.diff(vals) > 0)
    assert hoeffding_e0_bound(50) == 0.04
    assert c0_sparse_upper(9) == 3.0


def test_part1_examples():
    r = RateFunction(10.0, 1.0)
    for k in range(4):
        b = thm2_part1_rhs(k, 0, 100, 5.0, 3.0, r, 1.0, 1.0, N_empty=True)
        assert math.exp(b.log_value) == pytest.approx(2 * (4 / 100) ** k, rel=1e-12)
    vals = [thm2_part1_rhs(k, 2, 100, 5.0, 3.0, RateFunction(1e6, 1.0), 1.0, 1.0).log_value for k in range(5)]
    np.testing.assert_allclose(np.diff(vals), math.log(4 / 100), rtol=1e-12)
    assert not thm2_part1_rhs(1, 1, 4, 1.0, 1.0, r, 1.0, 1.0).in_regime


def test_part1_desk_scale_is_infinite():
    # n = 400, d = 100, s* = 2: the rate function cannot dominate the linear term
    r = logistic_rate_function(400, 0.5, 2, 1.0)
    b = thm2_part1_rhs(0, 2, 100, 79.1, 400 / 4, r, 1.0, 1.0)
    assert b.log_value == math.inf and b.a == math.inf


def test_part2_examples():
    r = RateFunction(1e9, 0.0)
    t = thm2_part2_terms(3.0, 0.01, r, 1.0, 1.0, 1, 10, 0.5, 2.0, 4.0, 3, j_max=50)
    first1 = packing_bound(10, 3) - 1e9 * (1.5 * 0.01) ** 2 / 8
    assert t.log_series1 == pytest.approx(first1, rel=1e-12)
    # hand evaluation of consecutive terms for a fixed set
    r = RateFunction(50.0, 2.0)
    M0, eps, rho, c0 = 3.0, 0.2, 1.5, 2.0
    t = thm2_part2_terms(M0, eps, r, rho, c0, 1, 10, 0.5, 2.0, 4.0, 3, j_max=2)

    def term(j):
        x = j * M0 * eps / 2
        return -50 * x * x / (1 + 2 * x) / 8 + 3 * rho * c0 * j * M0 * eps

    pref = math.log(2 * 10 * (10**2 / 0.5) * (1 + 4.0 / rho**2))
    assert t.log_series2 == pytest.approx(pref + math.log(math.exp(term(1)) + math.exp(term(2))), rel=1e-12)
    with pytest.raises(ValueError):
        thm2_part2_terms(2.0, 0.1, r, 1.0, 1.0, 1, 10, 0.5, 2.0, 4.0, 3)


def test_part2_normalizer_forms_and_tail_flag():
    r = RateFunction(5.0, 0.0)
    derived = thm2_part2_terms(3.0, 0.5, r, 2.0, 1.0, 2, 10, 0.5, 2.0, 8.0, 3, j_max=100)
    stated = thm2_part2_terms(3.0, 0.5, r, 2.0, 1.0, 2, 10, 0.5, 2.0, 8.0, 3, j_max=100, normalizer_form="stated")
    assert stated.log_series2 - derived.log_series2 == pytest.approx(2 * (math.log(1 + 4 / 8) - math.log(1 + 8 / 4)))
    growing = thm2_part2_terms(3.0, 0.5, RateFunction(1.0, 10.0), 5.0, 3.0, 1, 10, 0.5, 2.0, 8.0, 3, j_max=20)
    assert growing.tail_unreliable2


def test_bound_report_echoes_inputs():
    rep = logistic_bound_report(10_000, 1000, 3, 1.0, 0.5, 1.0, 0.5, 1.0, 1.0, 0.5, 2.0)
    assert isinstance(rep, BoundReport)
    assert rep.values["zeta"] == pytest.approx(781.0747, abs=1e-4)
    assert rep.inputs["n"] == 10_000 and rep.inputs["kappa1_cone"] == 0.5
    assert rep.flags["c0_is_upper_bound"]
    assert '"zeta"' in rep.to_json()
