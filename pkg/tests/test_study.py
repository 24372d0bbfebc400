import math

import numpy as np
import pytest

from qpost.config import resolve
from qpost.study import fit_slope, rate_study, rep_seeds, run_replication, worker_cap


def _cfg(**study):
    base = {"d": 8, "s_star": 1, "n_grid": [100, 200, 400], "replications": 2}
    base.update(study)
    return resolve({"task": "rate-study", "seed": 5, "study": base,
                    "prior": {"rho_scale": 0.25}, "sampler": {"iterations": 2000, "birth_scale": 1.0}})


def test_fit_slope_recovers_power_law():
    ns = np.array([100, 200, 400, 800])
    res = fit_slope(ns, 3.0 * ns**-0.5)
    assert res["slope"] == pytest.approx(-0.5, abs=1e-12)
    assert res["ci"][0] - 1e-12 <= -0.5 <= res["ci"][1] + 1e-12
    with pytest.raises(ValueError):
        fit_slope([1, 2], [1, 2])
    assert math.isnan(fit_slope([1, 2, 3], [1.0, 0.0, 1.0])["slope"])


def test_rep_seeds_distinct_and_stable():
    seen = {int(rep_seeds(0, c, r)[0].generate_state(1)[0]) for c in range(4) for r in range(5)}
    assert len(seen) == 20
    assert rep_seeds(1, 2, 3)[1] == rep_seeds(1, 2, 3)[1]


def test_worker_cap(monkeypatch):
    monkeypatch.delenv("QPOST_WORKERS", raising=False)
    assert worker_cap(4) == 4
    monkeypatch.setenv("QPOST_WORKERS", "2")
    assert worker_cap(4) == 2 and worker_cap(1) == 1
    monkeypatch.setenv("QPOST_WORKERS", "x")
    with pytest.raises(ValueError):
        worker_cap(2)


def test_concurrency_does_not_change_results(monkeypatch):
    monkeypatch.delenv("QPOST_WORKERS", raising=False)
    cfg = _cfg()
    a = rate_study(cfg, workers=1)
    b = rate_study(cfg, workers=2)
    assert a.cells == b.cells and a.replications == b.replications


def test_replication_is_self_contained():
    cfg = _cfg()
    task = (cfg["seed"], 1, 0, 8, 200, cfg["study"], cfg["prior"], cfg["sampler"])
    assert run_replication(task) == run_replication(task)


def test_zero_signal():
    res = rate_study(_cfg(s_star=0, replications=4, k_values=[0, 1, 2]))
    for c in res.cells:
        assert c["median_error"] <= 0.05
        p = [c["p_l0"][k] for k in ("0", "1", "2")]
        assert p[0] >= p[1] >= p[2]


def test_d_grid_layout():
    res = rate_study(_cfg(d_grid=[8, 16], scale_n_with_log_d=True))
    assert [c["d"] for c in res.cells] == [8, 8, 8, 16, 16, 16]
    assert [c["n"] for c in res.cells[3:]] == [round(n * math.log(16) / math.log(8)) for n in (100, 200, 400)]
    assert set(res.slopes) == {"8", "16"} and len(res.d_ratio["max_over_min_by_n_index"]) == 3
