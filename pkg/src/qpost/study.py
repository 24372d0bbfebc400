"""Replicated contraction-rate simulation for sparse logistic regression."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .logistic import generate_logistic_data, make_design
from .prior import PriorSpec, select_rho_logistic
from .sampler import ChainConfig, run_chain


def worker_cap(requested: int) -> int:
    """Requested workers, capped by QPOST_WORKERS when set."""
    env = os.environ.get("QPOST_WORKERS")
    if env:
        try:
            return max(1, min(requested, int(env)))
        except ValueError:
            raise ValueError(f"QPOST_WORKERS must be an integer, got {env!r}") from None
    return max(1, requested)


def rep_seeds(seed: int, cell: int, rep: int) -> tuple[np.random.SeedSequence, int]:
    """Data stream and chain seed for replication ``rep`` of grid cell ``cell``.

    Both derive from SeedSequence(seed, spawn_key=(cell, rep, stream)), so the
    result does not depend on which worker runs the replication.
    """
    data = np.random.SeedSequence(seed, spawn_key=(cell, rep, 0))
    chain = int(np.random.SeedSequence(seed, spawn_key=(cell, rep, 1)).generate_state(1)[0])
    return data, chain


def make_prior(block: dict, d: int, x_inf: float, n: int) -> PriorSpec:
    if block["rho"] == "auto":
        rho = select_rho_logistic(x_inf, n, d)
    else:
        rho = float(block["rho"])
    rho *= block["rho_scale"]
    if block["support_law"] == "explicit":
        return PriorSpec.explicit(block["g"], rho)
    return PriorSpec(d, rho, "beta_binomial", u=block["u"])


def chain_config(block: dict, seed: int) -> ChainConfig:
    return ChainConfig(
        iterations=block["iterations"], p_flip=block["p_flip"], rw_scale=block["rw_scale"],
        adapt=block["adapt"], seed=seed, burnin=block["burnin"], thin=block["thin"],
        birth_scale=block["birth_scale"], birth_mix=block["birth_mix"],
    )


def run_replication(task: tuple) -> dict:
    seed, cell, rep, d, n, study, prior_block, sampler_block = task
    data_ss, chain_seed = rep_seeds(seed, cell, rep)
    rng = np.random.default_rng(data_ss)
    s_star = study["s_star"]
    theta_star = np.zeros(d)
    if s_star:
        idx = rng.choice(d, size=s_star, replace=False)
        theta_star[idx] = study["signal"] * rng.choice([-1.0, 1.0], size=s_star)
    X = make_design(n, d, rng, study["design"])
    data = generate_logistic_data(theta_star, X, rng)
    prior = make_prior(prior_block, d, data.x_inf, n)
    summary = run_chain(data, prior, chain_config(sampler_block, chain_seed))
    err = np.sqrt(((summary.draws - theta_star) ** 2).sum(axis=1))
    l0 = np.count_nonzero(summary.draws, axis=1)
    base = s_star + math.ceil(2.0 / study["c4"])
    return {
        "cell": cell, "rep": rep, "d": d, "n": n, "rho": prior.rho,
        "median_error": float(np.median(err)),
        "p_l0": {str(k): float(np.mean(l0 >= base + k)) for k in study["k_values"]},
        "mean_l0": float(l0.mean()),
        "rw_acceptance": summary.acceptance["random_walk"]["rate"],
    }


@dataclass
class RateStudyResult:
    cells: list[dict]
    slopes: dict
    replications: list[dict] = field(default_factory=list)
    d_ratio: dict | None = None

    def to_dict(self) -> dict:
        return {"cells": self.cells, "slopes": self.slopes, "d_ratio": self.d_ratio,
                "replications": self.replications}


def fit_slope(ns, medians, level: float = 0.95) -> dict:
    """Least-squares slope of log(median error) on log n with a t confidence interval."""
    ns = np.asarray(ns, float)
    med = np.asarray(medians, float)
    if ns.size < 3:
        raise ValueError("a slope needs at least 3 sample sizes")
    if np.any(med <= 0):
        return {"slope": float("nan"), "intercept": float("nan"), "stderr": float("nan"),
                "ci": [float("nan"), float("nan")], "note": "non-positive median error"}
    res = stats.linregress(np.log(ns), np.log(med))
    q = stats.t.ppf(0.5 + level / 2.0, ns.size - 2)
    return {"slope": float(res.slope), "intercept": float(res.intercept), "stderr": float(res.stderr),
            "ci": [float(res.slope - q * res.stderr), float(res.slope + q * res.stderr)], "level": level}


def rate_study(cfg: dict, workers: int = 1) -> RateStudyResult:
    """Run every (d, n) cell for the configured number of replications.

    Cells are the product of ``d_grid`` (or ``d``) and ``n_grid``, enumerated
    d-major; the cell index enters the seed-splitting rule. With
    ``scale_n_with_log_d`` the n grid for dimension d is multiplied by
    log d / log d_0 (d_0 the first dimension), keeping n / log d matched.
    """
    study, prior_block, sampler_block = cfg["study"], cfg["prior"], cfg["sampler"]
    ds = study["d_grid"] or [study["d"]]
    scale = {d: (math.log(d) / math.log(ds[0]) if study["scale_n_with_log_d"] else 1.0) for d in ds}
    grid = [(d, int(round(n * scale[d]))) for d in ds for n in study["n_grid"]]
    if len(study["n_grid"]) < 3:
        raise ValueError("rate study needs at least 3 sample sizes")
    if any(study["s_star"] > d for d in ds):
        raise ValueError("s_star exceeds the dimension")
    tasks = [(cfg["seed"], c, r, d, n, study, prior_block, sampler_block)
             for c, (d, n) in enumerate(grid) for r in range(study["replications"])]
    nw = worker_cap(workers)
    if nw > 1:
        with ProcessPoolExecutor(nw) as ex:
            reps = list(ex.map(run_replication, tasks, chunksize=1))
    else:
        reps = [run_replication(t) for t in tasks]

    cells = []
    for c, (d, n) in enumerate(grid):
        rs = [r for r in reps if r["cell"] == c]
        med = float(np.median([r["median_error"] for r in rs]))
        cells.append({
            "cell": c, "d": d, "n": n, "replications": len(rs),
            "median_error": med,
            "theory_scale": math.sqrt(max(study["s_star"], 1) * math.log(d) / n),
            "p_l0": {k: float(np.mean([r["p_l0"][k] for r in rs])) for k in rs[0]["p_l0"]},
            "mean_rho": float(np.mean([r["rho"] for r in rs])),
        })
    slopes = {}
    for d in ds:
        cs = [c for c in cells if c["d"] == d]
        slopes[str(d)] = fit_slope([c["n"] for c in cs], [c["median_error"] for c in cs])
    d_ratio = None
    if len(ds) > 1:
        # ratio of median errors across d at each position of the n grid
        k = len(study["n_grid"])
        ratios = []
        for i in range(k):
            vals = np.array([cells[j * k + i]["median_error"] for j in range(len(ds))])
            ratios.append(float(vals.max() / vals.min()) if vals.min() > 0 else float("inf"))
        d_ratio = {"n_matched_on_log_d": study["scale_n_with_log_d"], "max_over_min_by_n_index": ratios,
                   "max_over_min": max(ratios)}
    return RateStudyResult(cells, slopes, reps, d_ratio)
