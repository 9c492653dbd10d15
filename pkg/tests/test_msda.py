import numpy as np
import pytest
import scipy.sparse as sp

from dannkit.datasets import LabeledSet, UnlabeledSet
from dannkit.msda import MsdaModel, mda_layer, msda_fit, msda_transform, msda_transform_batch, transform_set
from dannkit.tensor import ShapeError, SparseVec


def _low_rank(rng, n=10, d=3, rank=1):
    return rng.normal(size=(n, rank)) @ rng.normal(size=(rank, d)) + 0.05 * rng.normal(size=(n, d))


def test_small_p_gives_identity():
    X = np.random.default_rng(0).normal(size=(50, 4))
    W = mda_layer(X, 1e-8, 1e-5)
    np.testing.assert_allclose(W[:, :4], np.eye(4), atol=1e-3)
    np.testing.assert_allclose(W[:, 4], 0.0, atol=1e-3)


def mc_errors(X, W, p, rng, trials=1000):
    """Mean squared reconstruction error of corrupted inputs through W and through the identity."""
    N, d = X.shape
    learned = ident = 0.0
    for _ in range(trials):
        Xc = X * (rng.random(X.shape) >= p)
        rec = np.hstack([Xc, np.ones((N, 1))]) @ W.T
        learned += np.sum((rec - X) ** 2)
        ident += np.sum((Xc - X) ** 2)
    return learned / trials, ident / trials


def test_denoising_beats_identity_ten_points():
    rng = np.random.default_rng(1)
    X = _low_rank(rng)
    W = mda_layer(X, 0.5, 1e-5)
    learned, ident = mc_errors(X, W, 0.5, rng)
    assert learned < ident


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_denoising_property_low_rank(p):
    rng = np.random.default_rng(int(p * 10))
    wins = 0
    for _ in range(10):
        X = _low_rank(rng, n=30, d=6, rank=2)
        learned, ident = mc_errors(X, mda_layer(X, p, 1e-5), p, rng, trials=200)
        wins += learned < ident
    assert wins == 10


def test_lowrank_solver_matches_direct():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(6, 15)) * (rng.random((6, 15)) < 0.5)
    W = mda_layer(X, 0.5, 1e-3)  # N < d+1 path
    Xb = np.hstack([X, np.ones((6, 1))])
    q = np.r_[np.full(15, 0.5), 1.0]
    S = Xb.T @ Xb
    Q = S * np.outer(q, q)
    np.fill_diagonal(Q, q * np.diag(S))
    ref = np.linalg.solve(Q + 1e-3 * np.eye(16), (S[:15] * q).T).T
    np.testing.assert_allclose(W, ref, atol=1e-9)


def test_singular_without_ridge():
    X = np.zeros((5, 3))
    X[:, 0] = 1.0
    with pytest.raises(np.linalg.LinAlgError, match="ridge"):
        msda_fit(X, 0.5, 1, ridge=0.0)


@pytest.mark.parametrize("d,L", [(1, 1), (3, 2), (4, 3), (6, 1), (2, 5)])
def test_output_length_law(d, L):
    X = np.random.default_rng(d + L).normal(size=(8, d))
    m = msda_fit(X, 0.5, L)
    out = msda_transform(m, X[0])
    assert out.shape == (d * (L + 1),) and m.output_dim == d * (L + 1)
    np.testing.assert_array_equal(out[:d], X[0])
    assert np.all(np.abs(out[d:]) < 1.0)


def test_pure_and_deterministic():
    X = np.random.default_rng(3).normal(size=(12, 4))
    a, b = msda_fit(X, 0.5, 3), msda_fit(X, 0.5, 3)
    assert all(np.array_equal(u, v) for u, v in zip(a.layers, b.layers))
    x = SparseVec.from_dense(X[2])
    np.testing.assert_array_equal(msda_transform(a, x), msda_transform(a, x))
    np.testing.assert_allclose(msda_transform_batch(a, X)[2], msda_transform(a, X[2]), atol=1e-12)
    with pytest.raises(ShapeError):
        msda_transform(a, np.ones(5))


def test_json_roundtrip_and_transform_set():
    X = np.random.default_rng(4).normal(size=(12, 4))
    m = msda_fit(X, 0.5, 2)
    back = MsdaModel.from_json(m.to_json())
    assert all(np.array_equal(u, v) for u, v in zip(m.layers, back.layers))
    data = LabeledSet.from_dense(X, [0, 1] * 6)
    z = transform_set(m, data)
    assert isinstance(z, LabeledSet) and z.dim == 12 and np.array_equal(z.y, data.y)
    assert isinstance(transform_set(m, UnlabeledSet.from_dense(X)), UnlabeledSet)


def test_truncation_to_frequent_features():
    rng = np.random.default_rng(5)
    X = sp.csr_matrix(rng.random((20, 10)) * (rng.random((20, 10)) < np.linspace(0.1, 0.9, 10)))
    m = msda_fit(X, 0.5, 2, top_features=4)
    assert m.layer_dim == 4 and m.output_dim == 10 + 2 * 4
    assert m.meta["truncated_to"] == 4


def test_fit_argument_checks():
    X = np.ones((3, 2))
    for kw in (dict(p=0.0), dict(p=1.0), dict(layers=0), dict(ridge=-1.0)):
        with pytest.raises(ValueError):
            msda_fit(X, **kw)
