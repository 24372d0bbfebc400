"""Computable pieces of the contraction theory: rate functions, analytic
inequalities, event margins and log-scale evaluation of the concentration bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfcx, logsumexp

from .core import ConeSpec
from .logistic import log1pexp, logistic_link
from .prior import log_binom


@dataclass(frozen=True)
class RateFunction:
    """r(x) = tau x^2 / (1 + b x)."""

    tau: float
    b: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.b < 0:
            raise ValueError("b must be nonnegative")

    def __call__(self, x):
        return rate_eval(self, x)


def rate_eval(r: RateFunction, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("rate functions are defined on [0, inf)")
    out = r.tau * x * x / (1.0 + r.b * x)
    return float(out) if out.ndim == 0 else out


def logistic_rate_function(n: int, kappa1: float, s_star: int, x_inf: float) -> RateFunction:
    """r(x) = n kappa1 x^2 / (1 + 4 sqrt(s_star) ||X||_inf x)."""
    return RateFunction(n * kappa1, 4.0 * math.sqrt(s_star) * x_inf)


def phi_r(r: RateFunction, a: float) -> float:
    """inf{x > 0 : r(z) >= a z for all z >= x}; +inf when the set is empty.

    r(z)/z = tau z/(1 + b z) increases to tau/b, hence the closed form.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0:
        return 0.0
    if r.tau > a * r.b:
        return a / (r.tau - a * r.b)
    return math.inf


@dataclass(frozen=True)
class ShiftInfimum:
    exact_inf: float
    reference_bound: float
    bound_valid: bool
    argmin: float


def rate_shift_infimum(r: RateFunction, c: float) -> ShiftInfimum:
    """inf_{x>0} [r(x) - c x] by bounded 1-d minimization of the convex objective.

    The reference lower bound -c^2/(2 tau) is claimed when tau >= (4/3) b c.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    tau, b = r.tau, r.b
    ref = -c * c / (2.0 * tau)
    valid = tau >= (4.0 / 3.0) * b * c
    if c == 0:
        return ShiftInfimum(0.0, ref, valid, 0.0)
    if tau < c * b:
        return ShiftInfimum(-math.inf, ref, valid, math.inf)
    if tau == c * b:
        # r(x) - c x = -c x/(1 + b x) decreases to -c/b, never attained
        return ShiftInfimum(-c / b, ref, valid, math.inf)
    # stationary point: (1 + b x)^2 = tau / (tau - c b)
    x_star = c / (2.0 * tau) if b == 0 else (math.sqrt(tau / (tau - c * b)) - 1.0) / b
    x_hi = 2.0 * x_star + 1.0

    def f(x):
        return tau * x * x / (1.0 + b * x) - c * x

    res = minimize_scalar(f, bounds=(0.0, x_hi), method="bounded", options={"xatol": 1e-12 * x_hi})
    val = min(float(res.fun), f(x_star))
    return ShiftInfimum(val, ref, valid, float(res.x))


@dataclass(frozen=True)
class MillsRatio:
    value: float
    lower1: float
    lower2: float
    upper: float


def mills_ratio(z: float) -> MillsRatio:
    """(1 - Phi(z))/phi(z) with the chain z/(1+z^2) <= 2/(z+sqrt(z^2+4)) <= . <= 4/(3z+sqrt(z^2+8))."""
    if z < 0:
        raise ValueError("z must be nonnegative")
    value = math.sqrt(math.pi / 2.0) * float(erfcx(z / math.sqrt(2.0)))
    return MillsRatio(
        value,
        z / (1.0 + z * z),
        2.0 / (z + math.sqrt(z * z + 4.0)),
        4.0 / (3.0 * z + math.sqrt(z * z + 8.0)),
    )


def laplace_gauss_integral(a: float, b: float) -> float:
    """int exp(-(a/2) u^2 - b |u|) du over the real line."""
    if b <= 0:
        raise ValueError("b must be positive")
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0:
        return 2.0 / b
    sa = math.sqrt(a)
    return 2.0 / sa * mills_ratio(b / sa).value


def laplace_gauss_lower_bound(rho: float, L: float) -> float:
    """2 rho / (L + rho^2) <= int exp(-(L/2) u^2 - rho |u|) du, with equality at L = 0."""
    return 2.0 * rho / (L + rho * rho)


def self_concordance_bounds(x0, u):
    """g''(x0)(e^-|u| + |u| - 1) <= g(x0+u) - g(x0) - g'(x0) u <= g''(x0)(e^|u| - |u| - 1)."""
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    g0, g1, g2 = logistic_link(x0)
    au = np.abs(u)
    lower = g2 * (np.expm1(-au) + au)
    upper = g2 * (np.expm1(au) - au)
    mid = log1pexp(x0 + u) - g0 - g1 * u
    if lower.ndim == 0:
        return float(lower), float(mid), float(upper)
    return lower, mid, upper


def h_lower_bound(x):
    """(H(x), x^2/(2+x)) with H(x) = e^-x + x - 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    H = np.expm1(-x) + x
    bound = x * x / (2.0 + x)
    if H.ndim == 0:
        return float(H), float(bound)
    return H, bound


def hellinger_transform(q1, q2, alpha: float = 0.5) -> float:
    """sum q1^alpha q2^(1-alpha) over a finite space."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != q2.shape:
        raise ValueError("masses must live on the same space")
    if np.any(q1 < 0) or np.any(q2 < 0):
        raise ValueError("masses must be nonnegative")
    return float(np.sum(q1**alpha * q2 ** (1.0 - alpha)))


# event margins ---------------------------------------------------------------

E0_SUPPORTED = (
    ("full", "l1"),
    ("full", "l2"),
    ("s-sparse", "l1"),
    ("s-sparse", "l2"),
    ("column-sparse", "l1"),
    ("column-sparse", "l2"),
)


@dataclass(frozen=True)
class EventMargin:
    kind: str
    cone: ConeSpec
    normalization: str
    margin: float
    threshold: float
    member: bool


def _top_s_norm(g: np.ndarray, s: int) -> float:
    if s <= 0 or g.size == 0:
        return 0.0
    sq = np.sort(g * g)[::-1]
    return float(math.sqrt(sq[:s].sum()))


def e0_margin(grad, cone: ConeSpec, normalization: str) -> float:
    """sup over unit-norm directions u of the cone of |<grad, u>|.

    ``l1`` normalization pairs with the sup-norm; ``l2`` with the Euclidean
    norm of the best-aligned admissible support.
    """
    g = np.asarray(grad, dtype=float).ravel()
    if g.size != cone.d:
        raise ValueError(f"gradient has dimension {g.size}, cone has {cone.d}")
    pair = (cone.kind, normalization)
    if pair not in E0_SUPPORTED:
        raise ValueError(f"unsupported cone/normalization {pair}; supported: {E0_SUPPORTED}")
    if normalization == "l1":
        if cone.kind == "s-sparse" and cone.s == 0:
            return 0.0
        if cone.kind == "column-sparse":
            p = len(cone.column_s)
            G = np.abs(g.reshape(p, p, order="F"))
            cols = [G[:, j].max() for j in range(p) if cone.column_s[j] > 0]
            return float(max(cols)) if cols else 0.0
        return float(np.abs(g).max()) if g.size else 0.0
    if cone.kind == "full":
        return float(np.linalg.norm(g))
    if cone.kind == "s-sparse":
        return _top_s_norm(g, min(cone.s, g.size))
    p = len(cone.column_s)
    G = g.reshape(p, p, order="F")
    return float(math.sqrt(sum(_top_s_norm(G[:, j], min(s, p)) ** 2 for j, s in enumerate(cone.column_s))))


def e0_margin_bruteforce(grad, s: int) -> float:
    """max over supports of size s of ||grad_S||_2 (reference for small d)."""
    g = np.asarray(grad, dtype=float)
    if s == 0:
        return 0.0
    return max(float(np.linalg.norm(g[list(S)])) for S in combinations(range(g.size), s))


def event_margin_E0(grad, cone: ConeSpec, normalization: str, lam: float) -> EventMargin:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    m = e0_margin(grad, cone, normalization)
    return EventMargin("E0", cone, normalization, m, lam / 2.0, m <= lam / 2.0)


def hoeffding_e0_bound(d: int) -> float:
    """Union-bound probability of leaving the l_inf gradient event at rho = 4||X||_inf sqrt(n log d)."""
    return 2.0 / d


# bound evaluators ------------------------------------------------------------


def packing_bound(d: int, s: int) -> float:
    """log of C(d, s) 24^s."""
    if not 0 <= s <= d:
        raise ValueError("need 0 <= s <= d")
    return float(log_binom(d, s)) + s * math.log(24.0)


@dataclass(frozen=True)
class Part1Bound:
    log_value: float
    a: float
    in_regime: bool
    k: int


def thm2_part1_rhs(k: int, s_star: int, d: int, rho: float, L_bar: float, r: RateFunction,
                   c2: float, c4: float, N_empty: bool = False) -> Part1Bound:
    """log of 2 e^a (4 + 4 L_bar/rho^2)^s* C(d, s*) (4 c2 / d^c4)^k.

    a = -inf_x [r(x) - 4 rho sqrt(s*) x] / 2, or 0 when the N cone is empty.
    ``in_regime`` reports the hypothesis d^c4 >= 8 c2; the value is returned regardless.
    """
    if k < 0 or s_star < 0:
        raise ValueError("k and s_star must be nonnegative")
    if N_empty or s_star == 0:
        a = 0.0 if N_empty else -0.5 * rate_shift_infimum(r, 0.0).exact_inf
    else:
        a = -0.5 * rate_shift_infimum(r, 4.0 * rho * math.sqrt(s_star)).exact_inf
    log_val = (
        math.log(2.0)
        + a
        + s_star * math.log(4.0 + 4.0 * L_bar / rho**2)
        + float(log_binom(d, s_star))
        + k * (math.log(4.0 * c2) - c4 * math.log(d))
    )
    return Part1Bound(log_val, a, float(d) ** c4 >= 8.0 * c2, k)


@dataclass(frozen=True)
class Part2Terms:
    log_series1: float
    log_series2: float
    tail_unreliable1: bool
    tail_unreliable2: bool
    j_max: int
    log_packing: float
    log_prefactor2: float

    def __iter__(self):
        return iter((self.log_series1, self.log_series2))


def _tail_unreliable(log_terms: np.ndarray, log_sum: float) -> bool:
    if log_terms.size < 2:
        return False
    increasing = log_terms[-1] >= log_terms[-2]
    return bool(increasing or log_terms[-1] - log_sum > math.log(1e-12))


def thm2_part2_terms(M0: float, eps_bar: float, r: RateFunction, rho: float, c0: float, s_star: int, d: int,
                     c1: float, c3: float, L_bar: float, s_bar: int, j_max: int = 10**4,
                     normalizer_form: str = "derived") -> Part2Terms:
    """Log partial sums (j = 1..j_max) of the two series bounding the deviation probability.

    series1 = sum_j D_j exp(-r(j M0 eps/2)/8), with D_j capped by the packing bound at s_bar.
    series2 = 2 C(d,s*) (d^c3/c1)^s* F^s* sum_j exp(-r(j M0 eps/2)/8 + 3 rho c0 j M0 eps),
    where F = 1 + L_bar/rho^2 (``normalizer_form="derived"``) or 1 + rho^2/L_bar (``"stated"``).
    A series is flagged when its terms still grow at j_max or the last term is not negligible.
    """
    if M0 <= 2:
        raise ValueError("M0 must exceed 2")
    if not (eps_bar > 0 and math.isfinite(eps_bar)):
        raise ValueError("eps_bar must be positive and finite")
    if normalizer_form == "derived":
        F = 1.0 + L_bar / rho**2
    elif normalizer_form == "stated":
        if L_bar <= 0:
            raise ValueError("the stated normalizer needs L_bar > 0")
        F = 1.0 + rho**2 / L_bar
    else:
        raise ValueError("normalizer_form must be 'derived' or 'stated'")
    j = np.arange(1, j_max + 1, dtype=float)
    decay = -rate_eval(r, j * M0 * eps_bar / 2.0) / 8.0
    log_pack = packing_bound(d, min(s_bar, d))
    t1 = log_pack + decay
    s1 = float(logsumexp(t1))
    pref = math.log(2.0) + float(log_binom(d, s_star)) + s_star * (c3 * math.log(d) - math.log(c1)) + s_star * math.log(F)
    t2 = decay + 3.0 * rho * c0 * j * M0 * eps_bar
    s2 = pref + float(logsumexp(t2))
    return Part2Terms(s1, s2, _tail_unreliable(t1, s1), _tail_unreliable(t2 + pref, s2), j_max, log_pack, pref)


def c0_sparse_upper(s_bar: int) -> float:
    """Hoelder bound sqrt(s_bar) on sup |<sign(u), v>| over unit v in an s_bar-sparse cone."""
    return math.sqrt(s_bar)


# reports ---------------------------------------------------------------------


@dataclass
class BoundReport:
    inputs: dict
    values: dict
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"inputs": self.inputs, "values": self.values, "flags": self.flags}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "__dataclass_fields__"):
        return asdict(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def logistic_bound_report(n: int, d: int, s_star: int, x_inf: float, kappa1_cone: float, kappa_bar_sstar: float,
                          kappa_sbar: float, c2: float, c4: float, c1: float, c3: float, M0: float = 3.0,
                          rho: float | None = None, ks=(0, 1, 2, 5, 10), j_max: int = 10**4,
                          normalizer_form: str = "derived") -> BoundReport:
    """Sparsity level, radius and both concentration bounds for logistic regression, with inputs echoed.

    Uses rho = 4||X||_inf sqrt(n log d) unless given, r from the cone curvature,
    L_bar = n kappa_bar(s*)/4, lambda_bar = rho, eps_bar = phi_r(2 rho) and c0 = sqrt(s_bar).
    """
    from .logistic import contraction_radius_logistic, zeta_logistic
    from .prior import select_rho_logistic

    inputs = dict(n=n, d=d, s_star=s_star, x_inf=x_inf, kappa1_cone=kappa1_cone, kappa_bar_sstar=kappa_bar_sstar,
                  kappa_sbar=kappa_sbar, c1=c1, c2=c2, c3=c3, c4=c4, M0=M0, rho=rho, ks=list(ks), j_max=j_max,
                  normalizer_form=normalizer_form)
    rho_v = select_rho_logistic(x_inf, n, d) if rho is None else float(rho)
    zeta, s_bar = zeta_logistic(s_star, c4, d, x_inf, kappa1_cone, kappa_bar_sstar)
    radius = contraction_radius_logistic(M0, x_inf, kappa_sbar, s_bar, d, n)
    r = logistic_rate_function(n, kappa1_cone, s_star, x_inf)
    L_bar = n * kappa_bar_sstar / 4.0
    part1 = [thm2_part1_rhs(k, s_star, d, rho_v, L_bar, r, c2, c4) for k in ks]
    eps = phi_r(r, 2.0 * rho_v)
    values = dict(rho=rho_v, zeta=zeta, s_bar=s_bar, radius_l2=radius, rate_tau=r.tau, rate_b=r.b, L_bar=L_bar,
                  eps_bar=eps, part1_log_rhs={str(p.k): p.log_value for p in part1}, part1_a=part1[0].a if part1 else None)
    flags = dict(part1_in_regime=all(p.in_regime for p in part1), c0_is_upper_bound=True)
    if math.isfinite(eps):
        c0 = c0_sparse_upper(s_bar)
        t = thm2_part2_terms(M0, eps, r, rho_v, c0, s_star, d, c1, c3, L_bar, s_bar, j_max, normalizer_form)
        values.update(c0=c0, part2_log_series1=t.log_series1, part2_log_series2=t.log_series2)
        flags.update(part2_tail_unreliable1=t.tail_unreliable1, part2_tail_unreliable2=t.tail_unreliable2)
    else:
        flags["eps_bar_infinite"] = True
    return BoundReport(inputs, values, flags)
