"""``qpost <task> --config PATH [--seed N] [--out DIR] [--workers K]``.

Exit codes: 0 success, 1 invalid config, 2 runtime failure, 3 verify failure.
Outputs are written to a staging directory and moved into place only when the
task finishes, so a failed run leaves nothing half-written behind.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import TASKS, ConfigError, emit, load, resolve

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _write_tsv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])


def _report(cfg: dict, **body) -> dict:
    return {"config": cfg, "qpost_version": __version__, **body}


# task handlers: each takes (cfg, staging dir) and returns an exit code ----------


def _gen_logistic(cfg, out: Path) -> int:
    from .core import SparseParam
    from .logistic import generate_logistic_data, make_design, write_logistic_data, write_vector

    m = cfg["model"]
    rng = np.random.default_rng(cfg["seed"])
    d = m["d"]
    if m["theta_star"] is not None:
        ts = np.asarray(m["theta_star"], float)
        if ts.size != d:
            raise ConfigError(f"model.theta_star: expected {d} entries, got {ts.size}")
    else:
        if m["s_star"] > d:
            raise ConfigError("model.s_star: exceeds model.d")
        ts = np.zeros(d)
        idx = np.sort(rng.choice(d, size=m["s_star"], replace=False))
        sig = np.broadcast_to(np.asarray(m["signal"], float), idx.shape) if np.ndim(m["signal"]) == 0 \
            else np.asarray(m["signal"], float)
        if sig.size != idx.size:
            raise ConfigError("model.signal: list length must equal model.s_star")
        ts[idx] = sig * rng.choice([-1.0, 1.0], size=idx.size)
    X = make_design(m["n"], d, rng, m["design"])
    data = generate_logistic_data(SparseParam.from_dense(ts), X, rng)
    write_logistic_data(out / "data.txt", data)
    write_vector(out / "theta_star.txt", ts)
    _write_json(out / "report.json", _report(cfg, n=data.n, d=d, support=list(np.flatnonzero(ts)),
                                             x_inf=data.x_inf, mean_response=float(data.y.mean()) if data.n else None))
    return EXIT_OK


def _ising_theta(m) -> np.ndarray:
    p = m["p"]
    if m["theta"] is not None:
        th = np.asarray(m["theta"], float)
        if th.shape != (p, p):
            raise ConfigError(f"model.theta: expected a {p}x{p} matrix")
        return th
    th = np.zeros((p, p))
    for k, (i, j, w) in enumerate(m["edges"]):
        if i != int(i) or j != int(j) or not (0 <= i < p and 0 <= j < p):
            raise ConfigError(f"model.edges[{k}]: node indices must be integers in [0, {p})")
        th[int(i), int(j)] = th[int(j), int(i)] = w
    return th


def _gen_ising(cfg, out: Path) -> int:
    from .ising import IsingModel, sample_ising_exact, sample_ising_gibbs, write_ising_data
    from .logistic import write_matrix

    m = cfg["model"]
    rng = np.random.default_rng(cfg["seed"])
    model = IsingModel(_ising_theta(m))
    if m["method"] == "exact":
        data = sample_ising_exact(model, m["n"], rng)
    else:
        data = sample_ising_gibbs(model, m["n"], rng, burnin=m["burnin"], thin=m["thin"])
    write_ising_data(out / "data.txt", data)
    write_matrix(out / "theta_star.txt", model.theta, "ising-theta")
    _write_json(out / "report.json", _report(cfg, n=data.n, p=data.p,
                                             node_means=data.Z.mean(axis=0) if data.n else None))
    return EXIT_OK


def _make_prior(block, d, n, x_inf, kind="logistic"):
    from .prior import PriorSpec, select_rho_ising, select_rho_logistic

    if block["rho"] == "auto":
        rho = select_rho_logistic(x_inf, n, d) if kind == "logistic" else select_rho_ising(n, d)
    else:
        rho = float(block["rho"])
    rho *= block["rho_scale"]
    if block["support_law"] == "explicit":
        return PriorSpec.explicit(block["g"], rho)
    return PriorSpec(d, rho, u=block["u"])


def _read_theta_star(path, kind):
    from .logistic import read_matrix

    if path is None:
        return None
    M, _ = read_matrix(path)
    return M[:, 0] if kind == "logistic" else M


def _events(cfg, theta_star, kind):
    from .sampler import frobenius_distance_exceeds, l0_at_least, l2_distance_exceeds

    ev = {}
    base = 0 if theta_star is None else int(np.count_nonzero(theta_star))
    for k in cfg["events"]["l0_offsets"]:
        ev[f"l0>={base + k}"] = l0_at_least(base + k)
    if theta_star is not None:
        for r in cfg["events"]["radii"]:
            if kind == "logistic":
                ev[f"l2_dist>{r:g}"] = l2_distance_exceeds(theta_star, r)
            else:
                ev[f"frob_dist>{r:g}"] = frobenius_distance_exceeds(theta_star, r)
    elif cfg["events"]["radii"]:
        raise ConfigError("events.radii: distance events need model.theta_star")
    return ev


def _fit(cfg, out: Path) -> int:
    from .ising import edge_list, read_ising_data, write_edge_list
    from .logistic import read_logistic_data
    from .sampler import run_chain, run_ising_columns, write_draws, write_summary
    from .study import chain_config, worker_cap

    m = cfg["model"]
    ts = _read_theta_star(m["theta_star"], m["type"])
    cc = chain_config(cfg["sampler"], cfg["seed"])
    if m["type"] == "logistic":
        data = read_logistic_data(m["data"])
        if ts is not None and ts.size != data.dim:
            raise ConfigError("model.theta_star: dimension does not match the data")
        prior = _make_prior(cfg["prior"], data.dim, data.n, data.x_inf)
        summary = run_chain(data, prior, cc, events=_events(cfg, ts, "logistic"))
        write_draws(out / "draws.tsv", summary)
        write_summary(out / "summary.json", summary, {"config": cfg, "rho": prior.rho})
        _write_tsv(out / "inclusion.tsv", ["coordinate", "inclusion_prob", "mean"],
                   [(j, float(summary.inclusion_probs[j]), float(summary.mean[j])) for j in range(data.dim)])
        return EXIT_OK

    data = read_ising_data(m["data"])
    if ts is not None and ts.shape != (data.p, data.p):
        raise ConfigError("model.theta_star: shape does not match the data")
    prior = _make_prior(cfg["prior"], data.p, data.n, 1.0, kind="ising")
    events = _events(cfg, None if ts is None else ts.ravel(order="F"), "ising")
    fit = run_ising_columns(data, prior, cc, events=events, workers=worker_cap(cfg["workers"]))
    for j, col in enumerate(fit.columns):
        write_draws(out / f"draws_col{j}.tsv", col)
    edges = edge_list(fit.mean, fit.inclusion, m["symmetrize"])
    write_edge_list(out / "edges.tsv", edges)
    _write_json(out / "summary.json", _report(
        cfg, rho=prior.rho, inclusion=fit.inclusion, mean=fit.mean,
        event_estimates={k: list(v) for k, v in fit.event_estimates.items()},
        columns=[c.to_dict() for c in fit.columns]))
    return EXIT_OK


def _oracle(cfg, out: Path) -> int:
    from .logistic import read_logistic_data
    from .sampler import exact_posterior_oracle

    m = cfg["model"]
    data = read_logistic_data(m["data"])
    ts = _read_theta_star(m["theta_star"], "logistic")
    if cfg["events"]["radii"] and ts is None:
        raise ConfigError("events.radii: distance events need model.theta_star")
    prior = _make_prior(cfg["prior"], data.dim, data.n, data.x_inf)
    g = cfg["grid"]
    res = exact_posterior_oracle(data, prior, grid=(g["half_width"], g["cells"]), radii=cfg["events"]["radii"],
                                 theta_star=ts, max_points=g["max_points"])
    body = res.to_dict()
    body["rho"] = prior.rho
    _write_json(out / "oracle.json", _report(cfg, **body))
    _write_tsv(out / "inclusion.tsv", ["coordinate", "inclusion_prob", "mean"],
               [(j, float(res.inclusion_probs[j]), float(res.mean[j])) for j in range(data.dim)])
    return EXIT_OK


def _bounds(cfg, out: Path) -> int:
    from .prior import select_rho_ising

    b = cfg["bounds"]
    rho = None if b["rho"] == "auto" else b["rho"]
    if b["kind"] == "logistic":
        from .theory import logistic_bound_report

        rep = logistic_bound_report(
            b["n"], b["d"], b["s_star"], b["x_inf"], b["kappa_cone"], b["kappa_bar"], b["kappa_sbar"],
            b["c2"], b["c4"], b["c1"], b["c3"], M0=b["M0"], rho=rho, ks=b["ks"], j_max=b["j_max"],
            normalizer_form=b["normalizer_form"]).to_dict()
    else:
        from .ising import contraction_radii_ising, zeta_ising_columns

        p = b["d"]
        cols = b["s_star_columns"] or [b["s_star"]] * p
        if len(cols) != p:
            raise ConfigError(f"bounds.s_star_columns: expected {p} entries")
        zetas, s_bars, s_bar = zeta_ising_columns(cols, b["c4"], p, b["kappa_cone"])
        frob, tn = contraction_radii_ising(b["M0"], b["kappa_sbar"], s_bars, p, b["n"])
        rep = {"values": {"rho": select_rho_ising(b["n"], p) if rho is None else rho, "zeta": zetas,
                          "s_bar_columns": s_bars, "s_bar": s_bar, "radius_frobenius": frob, "radius_tnorm": tn},
               "flags": {}}
    _write_json(out / "bounds.json", _report(cfg, **rep))
    flat = [(k, v) for k, v in rep["values"].items() if np.ndim(v) == 0 and not isinstance(v, dict)]
    for k, v in rep["values"].items():
        if isinstance(v, dict):
            flat += [(f"{k}[{kk}]", vv) for kk, vv in v.items()]
    _write_tsv(out / "bounds.tsv", ["quantity", "value"], [(k, float(v) if v is not None else "") for k, v in flat])
    return EXIT_OK


def _verify(cfg, out: Path) -> int:
    from .verify import run_suite

    res = run_suite()
    _write_json(out / "verify.json", _report(cfg, checks=[r.__dict__ for r in res],
                                             all_passed=all(r.passed for r in res)))
    _write_tsv(out / "verify.tsv", ["check", "passed", "seconds", "detail"],
               [(r.name, r.passed, round(r.seconds, 4), r.detail) for r in res])
    for r in res:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in res) else EXIT_VERIFY


def _rate_study(cfg, out: Path) -> int:
    from .study import rate_study

    res = rate_study(cfg, workers=cfg["workers"])
    _write_json(out / "rate_study.json", _report(cfg, **res.to_dict()))
    ks = list(res.cells[0]["p_l0"]) if res.cells else []
    _write_tsv(out / "cells.tsv", ["d", "n", "replications", "median_error", "theory_scale", "mean_rho"]
               + [f"p_l0_k{k}" for k in ks],
               [(c["d"], c["n"], c["replications"], c["median_error"], c["theory_scale"], c["mean_rho"])
                + tuple(c["p_l0"][k] for k in ks) for c in res.cells])
    for d, s in res.slopes.items():
        print(f"d={d}: slope {s['slope']:.3f}  CI [{s['ci'][0]:.3f}, {s['ci'][1]:.3f}]")
    return EXIT_OK


HANDLERS = {
    "gen-logistic": _gen_logistic, "gen-ising": _gen_ising, "fit": _fit, "oracle": _oracle,
    "bounds": _bounds, "verify": _verify, "rate-study": _rate_study,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpost", description="Sparse quasi-posterior experiments.")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", help="YAML or JSON experiment config (optional for verify)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", help="output directory; overrides output.dir")
    ap.add_argument("--workers", type=int, help="worker cap; QPOST_WORKERS lowers it further")
    ap.add_argument("--version", action="version", version=f"qpost {__version__}")
    return ap


def _resolve_args(args) -> dict:
    if args.config:
        raw = load(args.config)
    elif args.task == "verify":
        raw = {"task": "verify", "seed": 0}
    else:
        raise ConfigError("--config: required for this task")
    raw.setdefault("task", args.task)
    if raw["task"] != args.task:
        raise ConfigError(f"task: config says {raw['task']!r} but the command is {args.task!r}")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.out is not None:
        raw.setdefault("output", {})
        if not isinstance(raw["output"], dict):
            raise ConfigError("output: expected a mapping")
        raw["output"]["dir"] = args.out
    return resolve(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_args(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{args.task}-", dir=out))
    try:
        (staging / "config.resolved.yaml").write_text(emit(cfg))
        code = HANDLERS[args.task](cfg, staging)
        for f in staging.iterdir():
            f.replace(out / f.name)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return code


if __name__ == "__main__":
    sys.exit(main())
