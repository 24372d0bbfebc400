"""Experiment configuration: declarative schema, validation and round-tripping.

A config is a mapping with ``task`` and ``seed`` plus task-specific blocks.
Resolution fills every default so the resolved form is self-describing;
``parse(emit(c)) == c`` for any resolved config.
"""
from __future__ import annotations

import copy
import json
import re
from pathlib import Path

import yaml

TASKS = ("gen-logistic", "gen-ising", "fit", "oracle", "bounds", "verify", "rate-study")


class ConfigError(ValueError):
    """Validation failure; the message names the offending field."""


_REQUIRED = object()


def _int(lo=None):
    def check(v, where):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}: expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"{where}: must be >= {lo}, got {v}")
        return v
    return check


def _num(lo=None, strict=False, hi=None):
    def check(v, where):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {v!r}")
        v = float(v)
        if lo is not None and (v <= lo if strict else v < lo):
            raise ConfigError(f"{where}: must be {'>' if strict else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(f"{where}: must be <= {hi}, got {v}")
        return v
    return check


def _opt(check):
    def wrapped(v, where):
        return None if v is None else check(v, where)
    return wrapped


def _choice(*options):
    def check(v, where):
        if v not in options:
            raise ConfigError(f"{where}: expected one of {list(options)}, got {v!r}")
        return v
    return check


def _bool(v, where):
    if not isinstance(v, bool):
        raise ConfigError(f"{where}: expected true/false, got {v!r}")
    return v


def _str(v, where):
    if not isinstance(v, str) or not v:
        raise ConfigError(f"{where}: expected a non-empty string, got {v!r}")
    return v


def _list_of(check, min_len=0):
    def wrapped(v, where):
        if not isinstance(v, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {v!r}")
        if len(v) < min_len:
            raise ConfigError(f"{where}: needs at least {min_len} entries")
        return [check(x, f"{where}[{i}]") for i, x in enumerate(v)]
    return wrapped


def _rho(v, where):
    if v == "auto":
        return v
    return _num(0, strict=True)(v, where)


def _matrix(v, where):
    rows = _list_of(_list_of(_num()))(v, where)
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"{where}: expected a square matrix")
    return rows


def _signal(v, where):
    if isinstance(v, (list, tuple)):
        return _list_of(_num())(v, where)
    return _num()(v, where)


PRIOR = {
    "rho": ("auto", _rho),
    "rho_scale": (1.0, _num(0, strict=True)),
    "support_law": ("beta_binomial", _choice("beta_binomial", "explicit")),
    "u": (2.0, _num(1, strict=True)),
    "g": (None, _opt(_list_of(_num(0)))),
}
SAMPLER = {
    "iterations": (_REQUIRED, _int(1)),
    "p_flip": (0.5, _num(0, strict=True, hi=1.0)),
    "rw_scale": (0.1, _num(0, strict=True)),
    "adapt": (True, _bool),
    "burnin": (None, _opt(_int(0))),
    "thin": (1, _int(1)),
    "birth_scale": (None, _opt(_num(0, strict=True))),
    "birth_mix": (0.5, _num(0, strict=True, hi=1.0)),
}
EVENTS = {
    "radii": ([], _list_of(_num(0))),
    "l0_offsets": ([0, 1, 2], _list_of(_int(0))),
}
OUTPUT = {
    "dir": ("out", _str),
}

SCHEMAS = {
    "gen-logistic": {
        "model": {
            "n": (_REQUIRED, _int(0)),
            "d": (_REQUIRED, _int(1)),
            "s_star": (1, _int(0)),
            "signal": (1.0, _signal),
            "design": ("rademacher", _choice("rademacher", "gaussian")),
            "theta_star": (None, _opt(_list_of(_num()))),
        },
    },
    "gen-ising": {
        "model": {
            "p": (_REQUIRED, _int(1)),
            "n": (_REQUIRED, _int(0)),
            "theta": (None, _opt(_matrix)),
            "edges": ([], _list_of(_list_of(_num(), 3))),
            "method": ("exact", _choice("exact", "gibbs")),
            "burnin": (1000, _int(0)),
            "thin": (5, _int(1)),
        },
    },
    "fit": {
        "model": {
            "type": ("logistic", _choice("logistic", "ising")),
            "data": (_REQUIRED, _str),
            "theta_star": (None, _opt(_str)),
            "symmetrize": ("average", _choice("average", "min", "max")),
        },
        "prior": PRIOR,
        "sampler": SAMPLER,
        "events": EVENTS,
    },
    "oracle": {
        "model": {
            "data": (_REQUIRED, _str),
            "theta_star": (None, _opt(_str)),
        },
        "prior": PRIOR,
        "grid": {
            "half_width": (None, _opt(_num(0, strict=True))),
            "cells": (None, _opt(_int(2))),
            "max_points": (2e7, _num(1)),
        },
        "events": EVENTS,
    },
    "bounds": {
        "bounds": {
            "kind": ("logistic", _choice("logistic", "ising")),
            "n": (_REQUIRED, _int(1)),
            "d": (_REQUIRED, _int(2)),
            "s_star": (_REQUIRED, _int(0)),
            "x_inf": (1.0, _num(0, strict=True)),
            "kappa_cone": (_REQUIRED, _num(0, strict=True)),
            "kappa_bar": (1.0, _num(0, strict=True)),
            "kappa_sbar": (_REQUIRED, _num(0, strict=True)),
            "M0": (3.0, _num(2, strict=True)),
            "c1": (0.5, _num(0, strict=True)),
            "c2": (1.0, _num(0, strict=True)),
            "c3": (2.0, _num(0, strict=True)),
            "c4": (1.0, _num(0, strict=True)),
            "rho": ("auto", _rho),
            "ks": ([0, 1, 2, 5, 10], _list_of(_int(0))),
            "j_max": (10**4, _int(1)),
            "normalizer_form": ("derived", _choice("derived", "stated")),
            "s_star_columns": (None, _opt(_list_of(_int(0)))),
        },
    },
    "verify": {},
    "rate-study": {
        "study": {
            "d": (32, _int(2)),
            "d_grid": (None, _opt(_list_of(_int(2)))),
            "scale_n_with_log_d": (False, _bool),
            "s_star": (3, _int(0)),
            "signal": (1.0, _num()),
            "n_grid": ([200, 400, 800, 1600], _list_of(_int(1))),
            "replications": (20, _int(1)),
            "design": ("rademacher", _choice("rademacher", "gaussian")),
            "c4": (1.0, _num(0, strict=True)),
            "k_values": ([0, 1, 2], _list_of(_int(0))),
        },
        "prior": PRIOR,
        "sampler": SAMPLER,
    },
}

TOP = {
    "task": (_REQUIRED, _choice(*TASKS)),
    "seed": (_REQUIRED, _int(0)),
    "workers": (1, _int(1)),
    "output": OUTPUT,
}


def _resolve_block(raw, schema: dict, where: str) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}; allowed {sorted(schema)}")
    out = {}
    for key, spec in schema.items():
        path = f"{where}.{key}" if where else key
        if isinstance(spec, dict):
            out[key] = _resolve_block(raw.get(key), spec, path)
            continue
        default, check = spec
        if key not in raw:
            if default is _REQUIRED:
                raise ConfigError(f"{path}: required field is missing")
            out[key] = copy.deepcopy(default)
        else:
            out[key] = check(raw[key], path)
    return out


def resolve(raw: dict) -> dict:
    """Validate a raw mapping and fill defaults; raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a mapping at top level")
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task: expected one of {list(TASKS)}, got {task!r}")
    schema = dict(TOP)
    schema.update(SCHEMAS[task])
    cfg = _resolve_block(raw, schema, "")
    if task in ("fit", "oracle", "rate-study"):
        pr = cfg["prior"]
        if pr["support_law"] == "explicit" and pr["g"] is None:
            raise ConfigError("prior.g: required when support_law is 'explicit'")
    if task == "rate-study" and len(cfg["study"]["n_grid"]) < 3:
        raise ConfigError("study.n_grid: needs at least 3 sample sizes to fit a slope")
    if task == "fit" or task == "rate-study":
        s = cfg["sampler"]
        if s["burnin"] is not None and s["burnin"] >= s["iterations"]:
            raise ConfigError("sampler.burnin: must be smaller than sampler.iterations")
    return cfg


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot, e.g. ``1e-12``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def _safe_load(text):
    return yaml.load(text, Loader=_Loader)


def load(path) -> dict:
    """Parse a YAML or JSON file (JSON is valid YAML) into a raw mapping."""
    text = Path(path).read_text()
    try:
        data = _safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def emit(cfg: dict, fmt: str = "yaml") -> str:
    if fmt == "json":
        return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
    return yaml.safe_dump(cfg, sort_keys=True)


def parse(text: str) -> dict:
    return resolve(_safe_load(text))
