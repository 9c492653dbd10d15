import numpy as np
import pytest

from dannkit.datasets import DataError, LabeledSet
from dannkit.svm import SvmModel, objective, svm_error, svm_predict, svm_predict_batch, svm_train
from dannkit.tensor import ShapeError, SparseVec


def _separable(seed=0, n=10):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.uniform(1, 3, (n // 2, 2)), -rng.uniform(1, 3, (n // 2, 2))])
    return LabeledSet.from_dense(X, [1] * (n // 2) + [0] * (n // 2))


def test_separable_large_C():
    data = _separable()
    m = svm_train(data, C=100.0)
    assert svm_error(m, data) == 0.0


def test_identical_labels():
    rng = np.random.default_rng(1)
    for lab in (0, 1):
        data = LabeledSet.from_dense(rng.normal(size=(12, 3)), [lab] * 12)
        m = svm_train(data, 1.0)
        assert np.all(svm_predict_batch(m, data) == lab)


def test_deterministic():
    data = _separable(2, 20)
    a, b = svm_train(data, 0.5, seed=3), svm_train(data, 0.5, seed=3)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_prediction_rules():
    m = SvmModel(np.zeros(3), 0.5, 1.0)
    data = LabeledSet.from_dense(np.random.default_rng(0).normal(size=(5, 3)), [0, 1, 0, 1, 1])
    assert np.all(svm_predict_batch(m, data) == 1)
    assert svm_predict(SvmModel(np.zeros(2), 0.0, 1.0), [3.0, 4.0]) == 1  # zero margin
    hand = SvmModel(np.array([1.0, 0.0]), 0.0, 1.0)
    four = LabeledSet.from_dense(np.array([[1.0, 0], [2.0, 0], [-1.0, 0], [-2.0, 0]]), [1, 1, 0, 1])
    assert svm_error(hand, four) == 0.25
    with pytest.raises(ShapeError):
        svm_predict(hand, [1.0, 2.0, 3.0])


def test_label_flip_negates_decisions():
    rng = np.random.default_rng(4)
    for _ in range(10):
        X = rng.normal(size=(30, 4))
        y = rng.integers(0, 2, 30)
        held = LabeledSet.from_dense(rng.normal(size=(15, 4)), rng.integers(0, 2, 15))
        a = svm_train(LabeledSet.from_dense(X, y), 0.3, seed=7)
        b = svm_train(LabeledSet.from_dense(X, 1 - y), 0.3, seed=7)
        np.testing.assert_array_equal(b.weights, -a.weights)
        assert b.bias == -a.bias
        flipped = LabeledSet(held.X, 1 - held.y)
        da = a.decision_batch(held)
        if np.all(da != 0):
            assert svm_error(a, held) == svm_error(b, flipped)


def test_objective_decreases():
    rng = np.random.default_rng(8)
    for _ in range(20):
        X = rng.normal(size=(40, 5))
        y = (X @ rng.normal(size=5) + 0.5 * rng.normal(size=40) > 0).astype(int)
        data = LabeledSet.from_dense(X, y)
        objs = []
        svm_train(data, 1.0, epochs=50, seed=1, checkpoint=lambda e, m: objs.append(objective(m, data)))
        assert len(objs) == 50 and objs[-1] <= objs[0]


def test_errors_and_json():
    data = _separable()
    with pytest.raises(ValueError):
        svm_train(data, 0.0)
    with pytest.raises(DataError):
        svm_train(LabeledSet.from_dense(np.zeros((0, 2)), []), 1.0)
    m = svm_train(data, 2.0)
    back = SvmModel.from_json(m.to_json())
    assert np.array_equal(back.weights, m.weights) and back.bias == m.bias and back.c_param == 2.0
    assert set(m.to_dict()) >= {"n", "weights", "bias", "C"}


def test_sparse_decision_matches_dense():
    m = SvmModel(np.array([0.5, -1.0, 2.0]), 0.25, 1.0)
    assert m.decision(SparseVec.from_pairs(3, [(2, 1.0)])) == m.decision([0.0, 0.0, 1.0]) == 2.25
