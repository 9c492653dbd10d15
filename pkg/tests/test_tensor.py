import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dannkit.tensor import Rng, ShapeError, SparseVec, add_outer, axpy, matvec, outer, sigm, softmax

finite = st.floats(-50, 50, allow_nan=False)


def test_sigm_examples():
    assert sigm([0.0])[0] == 0.5
    s = sigm([0.0, 1e9])
    assert s[0] == 0.5 and 0.0 < s[1] < 1.0
    np.testing.assert_allclose(sigm([-0.3, 0.7]), [1 / (1 + math.exp(0.3)), 1 / (1 + math.exp(-0.7))], rtol=0, atol=1e-15)
    assert 0.0 < sigm([-1e9])[0] < 1e-300


@given(st.lists(finite, min_size=1, max_size=20))
def test_sigm_symmetry(a):
    a = np.array(a)
    np.testing.assert_allclose(sigm(a) + sigm(-a), 1.0, atol=1e-12)


@given(finite, finite)
def test_sigm_monotone(a, b):
    lo, hi = sorted((a, b))
    assert sigm([lo])[0] <= sigm([hi])[0]


def test_softmax_examples():
    np.testing.assert_array_equal(softmax([0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(softmax([123.4] * 3), [1 / 3] * 3, atol=1e-15)
    e = np.exp([1.0, 2.0, 3.0])
    np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]), e / e.sum(), rtol=1e-14)
    with pytest.raises(ValueError):
        softmax([])


def test_softmax_sums_to_one_random():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a = rng.normal(0, 30, rng.integers(1, 21))
        f = softmax(a)
        assert np.all(f > 0) or np.all(f >= 0)
        assert abs(f.sum() - 1.0) <= 1e-12


@given(st.lists(finite, min_size=1, max_size=10), finite)
def test_softmax_shift_invariant(a, c):
    np.testing.assert_allclose(softmax(np.array(a) + c), softmax(a), atol=1e-12)


def test_matvec_examples():
    np.testing.assert_array_equal(matvec(np.eye(2), np.array([1.0, 2.0])), [1.0, 2.0])
    np.testing.assert_array_equal(matvec(np.zeros((3, 4)), SparseVec.from_dense([0, 2.0, 0, 1.0])), np.zeros(3))
    rng = np.random.default_rng(0)
    M, x = rng.normal(size=(3, 4)), rng.normal(size=4)
    oracle = [sum(M[i, j] * x[j] for j in range(4)) for i in range(3)]
    np.testing.assert_allclose(matvec(M, x), oracle, atol=1e-12)
    with pytest.raises(ShapeError, match=r"\(3, 4\).*5"):
        matvec(M, np.ones(5))


def test_sparse_matvec_matches_dense():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        M = rng.normal(size=(int(rng.integers(1, 6)), n))
        x = rng.normal(size=n) * (rng.random(n) < 0.3)
        assert np.max(np.abs(matvec(M, SparseVec.from_dense(x)) - M @ x), initial=0.0) <= 1e-12


def test_outer_and_accumulators():
    u, x = np.array([1.0, -2.0]), SparseVec.from_pairs(3, [(2, 4.0)])
    np.testing.assert_array_equal(outer(u, x), [[0, 0, 4.0], [0, 0, -8.0]])
    M = np.ones((2, 3))
    add_outer(M, 0.5, u, x)
    np.testing.assert_array_equal(M, [[1, 1, 3.0], [1, 1, -3.0]])
    y = np.array([1.0, 1.0])
    axpy(2.0, np.array([1.0, -1.0]), y)
    np.testing.assert_array_equal(y, [3.0, -1.0])


def test_sparsevec_invariants():
    with pytest.raises(ValueError):
        SparseVec(3, [1, 1], [1.0, 2.0])
    with pytest.raises(ValueError):
        SparseVec(3, [2, 1], [1.0, 2.0])
    with pytest.raises(ValueError):
        SparseVec(3, [3], [1.0])
    with pytest.raises(ValueError):
        SparseVec(3, [0], [0.0])
    with pytest.raises(ValueError):
        SparseVec(3, [0], [math.nan])
    v = SparseVec.from_dense([0.0, 2.5, 0.0, -1.0])
    assert v.pairs() == [(1, 2.5), (3, -1.0)] and v.nnz == 2 and v.dim == 4
    np.testing.assert_array_equal(v.to_dense(), [0.0, 2.5, 0.0, -1.0])


def test_rng_golden_values():
    r = Rng(42)
    assert [r.uniform_int(1, 6) for _ in range(3)] == [1, 5, 4]


def test_rng_behaviour():
    assert Rng(7).uniform_int(5, 5) == 5
    a, b = Rng(9), Rng(9)
    assert [a.uniform_int(0, 10**6) for _ in range(1000)] == [b.uniform_int(0, 10**6) for _ in range(1000)]
    with pytest.raises(ValueError):
        Rng(1).uniform_int(3, 2)
    with pytest.raises(ValueError):
        Rng(-1)
    draws = {Rng(3).uniform_int(1, 3) for _ in range(1)} | {x for x in (Rng(3).derive(k).uniform_int(1, 3) for k in range(200))}
    assert draws == {1, 2, 3}


def test_rng_derive_independent_of_parent_draws():
    r = Rng(11)
    child_before = r.derive(4).uniform(0, 1)
    for _ in range(10):
        r.gauss()
    assert r.derive(4).uniform(0, 1) == child_before
    assert Rng(11).derive(4).uniform(0, 1) != Rng(11).derive(5).uniform(0, 1)
