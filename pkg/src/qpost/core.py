"""Sparse parameters, support patterns and the split cones used by the theory.

Indices are 0-based throughout. Support is defined by exact zeros: a
coordinate is active iff its value is nonzero, with no tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when a parameter and a cone (or pattern) disagree on dimension."""


@dataclass(frozen=True)
class SparsityPattern:
    d: int
    active: tuple[int, ...] = ()

    def __post_init__(self):
        act = tuple(int(i) for i in self.active)
        if any(b <= a for a, b in zip(act, act[1:])):
            raise ValueError("active indices must be strictly increasing")
        if act and (act[0] < 0 or act[-1] >= self.d):
            raise ValueError(f"active indices must lie in [0, {self.d})")
        object.__setattr__(self, "active", act)

    @classmethod
    def from_mask(cls, mask) -> "SparsityPattern":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.size, tuple(np.flatnonzero(mask).tolist()))

    @property
    def size(self) -> int:
        return len(self.active)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.d, dtype=bool)
        m[list(self.active)] = True
        return m

    def complement(self) -> "SparsityPattern":
        return SparsityPattern.from_mask(~self.mask())


@dataclass(frozen=True)
class SparseParam:
    """A vector in R^d stored as (pattern, values on the pattern)."""

    pattern: SparsityPattern
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != self.pattern.size:
            raise ValueError("one value per active index is required")
        if np.any(vals == 0.0):
            raise ValueError("active values must be nonzero; use from_dense to drop zeros")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_dense(cls, x) -> "SparseParam":
        x = np.asarray(x, dtype=float).reshape(-1)
        idx = np.flatnonzero(x != 0.0)
        return cls(SparsityPattern(x.size, tuple(idx.tolist())), x[idx])

    @classmethod
    def zeros(cls, d: int) -> "SparseParam":
        return cls(SparsityPattern(d))

    @property
    def d(self) -> int:
        return self.pattern.d

    def dense(self) -> np.ndarray:
        out = np.zeros(self.d)
        out[list(self.pattern.active)] = self.values
        return out


@dataclass(frozen=True)
class MatrixParam:
    """A p x p parameter stored column by column."""

    columns: tuple[SparseParam, ...]

    def __post_init__(self):
        cols = tuple(self.columns)
        p = len(cols)
        if any(c.d != p for c in cols):
            raise DimensionError("every column must have dimension p")
        object.__setattr__(self, "columns", cols)

    @classmethod
    def from_dense(cls, theta) -> "MatrixParam":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise DimensionError("expected a square matrix")
        return cls(tuple(SparseParam.from_dense(theta[:, j]) for j in range(theta.shape[1])))

    @property
    def p(self) -> int:
        return len(self.columns)

    def dense(self) -> np.ndarray:
        if not self.columns:
            return np.zeros((0, 0))
        return np.column_stack([c.dense() for c in self.columns])


def _as_dense(v) -> np.ndarray:
    if isinstance(v, SparseParam):
        return v.dense()
    return np.asarray(v, dtype=float).reshape(-1)


def norms(v) -> tuple[int, float, float, float]:
    """Return (l0, l1, l2, linf) of a vector."""
    x = _as_dense(v)
    if x.size == 0:
        return 0, 0.0, 0.0, 0.0
    a = np.abs(x)
    return int(np.count_nonzero(a)), float(a.sum()), float(np.sqrt(np.dot(x, x))), float(a.max())


def sparsity_pattern(v) -> SparsityPattern:
    if isinstance(v, SparseParam):
        return v.pattern
    return SparsityPattern.from_mask(_as_dense(v) != 0.0)


CONE_KINDS = ("full", "s-sparse", "pattern", "N", "column-sparse")


@dataclass(frozen=True)
class ConeSpec:
    """One of the five split cones.

    kind:
      ``full``          all of R^d
      ``s-sparse``      {||v||_0 <= s}
      ``pattern``       vectors vanishing off ``pattern`` (Theta_star)
      ``N``             nonzero v with ||v off pattern||_1 <= factor * ||v on pattern||_1
      ``column-sparse`` p x p matrices (flattened column-major) with ||v_.j||_0 <= s_j
    """

    kind: str
    d: int
    s: int | None = None
    pattern: SparsityPattern | None = None
    factor: float = 7.0
    column_s: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}; expected one of {CONE_KINDS}")
        if self.kind == "s-sparse" and (self.s is None or self.s < 0):
            raise ValueError("s-sparse cone needs s >= 0")
        if self.kind in ("pattern", "N"):
            if self.pattern is None or self.pattern.d != self.d:
                raise DimensionError("pattern cone needs a pattern of matching dimension")
        if self.kind == "column-sparse":
            if self.column_s is None or len(self.column_s) ** 2 != self.d:
                raise DimensionError("column-sparse cone needs p sparsity levels with d = p^2")

    @classmethod
    def full(cls, d: int) -> "ConeSpec":
        return cls("full", d)

    @classmethod
    def sparse(cls, d: int, s: int) -> "ConeSpec":
        return cls("s-sparse", d, s=s)

    @classmethod
    def pattern_cone(cls, delta: SparsityPattern) -> "ConeSpec":
        return cls("pattern", delta.d, pattern=delta)

    @classmethod
    def n_cone(cls, delta: SparsityPattern, factor: float = 7.0) -> "ConeSpec":
        return cls("N", delta.d, pattern=delta, factor=factor)

    @classmethod
    def column_sparse(cls, column_s: Sequence[int]) -> "ConeSpec":
        cs = tuple(int(s) for s in column_s)
        return cls("column-sparse", len(cs) ** 2, column_s=cs)


def cone_contains(c: ConeSpec, v) -> bool:
    x = _as_dense(v)
    if x.size != c.d:
        raise DimensionError(f"vector has dimension {x.size}, cone has {c.d}")
    if c.kind == "full":
        return True
    if c.kind == "s-sparse":
        return int(np.count_nonzero(x)) <= c.s
    if c.kind == "pattern":
        return not np.any(x[~c.pattern.mask()])
    if c.kind == "N":
        if not np.any(x):
            return False
        m = c.pattern.mask()
        return float(np.abs(x[~m]).sum()) <= c.factor * float(np.abs(x[m]).sum())
    p = len(c.column_s)
    counts = np.count_nonzero(x.reshape(p, p, order="F"), axis=0)
    return bool(np.all(counts <= np.asarray(c.column_s)))


def tnorm(m) -> float:
    """Largest column Euclidean norm of a square matrix."""
    theta = m.dense() if isinstance(m, MatrixParam) else np.asarray(m, dtype=float)
    if theta.size == 0:
        return 0.0
    return float(np.sqrt((theta**2).sum(axis=0)).max())
