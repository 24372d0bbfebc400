import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qpost.core import (
    ConeSpec,
    DimensionError,
    MatrixParam,
    SparseParam,
    SparsityPattern,
    cone_contains,
    norms,
    sparsity_pattern,
    tnorm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "v, expected",
    [(np.zeros(5), (0, 0, 0, 0)), ([3.0, -4.0, 0.0], (2, 7, 5, 4)), ([0, 0, 1.0, 0], (1, 1, 1, 1))],
)
def test_norms(v, expected):
    assert norms(SparseParam.from_dense(v)) == pytest.approx(expected)


def test_sparsity_pattern_examples():
    assert sparsity_pattern([0, 2.5, 0]).active == (1,)
    assert sparsity_pattern(np.zeros(3)).active == ()
    assert sparsity_pattern([1.0, -2.0, 3.0]).active == (0, 1, 2)


def test_exact_zero_semantics():
    # tiny but nonzero values are structural nonzeros
    assert sparsity_pattern([1e-300, 0.0]).active == (0,)
    with pytest.raises(ValueError):
        SparseParam(SparsityPattern(2, (0,)), [0.0])


def test_pattern_validation():
    with pytest.raises(ValueError):
        SparsityPattern(3, (2, 1))
    with pytest.raises(ValueError):
        SparsityPattern(3, (3,))


def test_cone_examples():
    d1 = SparsityPattern(2, (0,))
    assert cone_contains(ConeSpec.pattern_cone(d1), [5.0, 0.0])
    assert cone_contains(ConeSpec.n_cone(d1), [1.0, 7.0])
    assert not cone_contains(ConeSpec.n_cone(d1), [1.0, 7.01])
    assert not cone_contains(ConeSpec.sparse(4, 2), [1.0, 1.0, 1.0, 0.0])
    with pytest.raises(DimensionError):
        cone_contains(ConeSpec.full(3), [1.0, 2.0])


def test_column_sparse_is_column_major():
    c = ConeSpec.column_sparse([1, 0])
    m = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert cone_contains(c, m.ravel(order="F"))
    assert not cone_contains(c, m.T.ravel(order="F") + np.array([0, 0, 1.0, 0]))


def test_tnorm_examples():
    assert tnorm(np.eye(3)) == 1.0
    assert tnorm(np.zeros((3, 3))) == 0.0
    m = np.zeros((3, 3))
    m[:, 0] = [3, 4, 0]
    assert tnorm(MatrixParam.from_dense(m)) == 5.0


@settings(max_examples=200, deadline=None)
@given(
    v=arrays(float, 6, elements=finite),
    lam=st.floats(0, 1e3),
    signs=arrays(float, 6, elements=st.sampled_from([-1.0, 1.0])),
    kind=st.sampled_from(["full", "s-sparse", "pattern", "N", "column-sparse"]),
)
def test_split_cone_closure(v, lam, signs, kind):
    pat = SparsityPattern(6, (1, 4))
    if kind == "column-sparse":
        v, signs = np.resize(v, 9), np.resize(signs, 9)
        c = ConeSpec.column_sparse([2, 1, 3])
    else:
        c = {"full": ConeSpec.full(6), "s-sparse": ConeSpec.sparse(6, 3), "pattern": ConeSpec.pattern_cone(pat),
             "N": ConeSpec.n_cone(pat)}[kind]
    if not cone_contains(c, v):
        return
    assert cone_contains(c, signs * v)
    if lam > 0 or c.kind != "N":
        # the N cone excludes the origin by definition, so only positive scalings apply to it
        assert cone_contains(c, lam * v)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 7).flatmap(lambda p: arrays(float, (p, p), elements=finite)))
def test_tnorm_frobenius_sandwich(m):
    p = m.shape[0]
    t, f = tnorm(m), float(np.linalg.norm(m))
    assert t <= f * (1 + 1e-12) + 1e-300
    assert f <= math.sqrt(p) * t * (1 + 1e-12) + 1e-300


@settings(max_examples=200, deadline=None)
@given(arrays(float, st.integers(1, 10), elements=finite))
def test_pattern_round_trip(x):
    v = SparseParam.from_dense(x)
    assert sparsity_pattern(SparseParam.from_dense(v.dense())) == v.pattern
    np.testing.assert_array_equal(v.dense(), x)
