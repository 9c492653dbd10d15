"""Linear SVM trained by Pegasos-style projected subgradient descent.

Labels {0, 1} map to {-1, +1}.  The bias is a constant trailing feature, so
it is regularized together with the weights; zero initialization makes a
run on flipped labels the exact negation of the original run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .datasets import DataError, LabeledSet
from .tensor import Rng, ShapeError, SparseVec


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    c_param: float
    epochs: int = 50
    seed: int = 0

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def decision(self, x) -> float:
        if not isinstance(x, SparseVec):
            x = SparseVec.from_dense(x)
        if x.dim != self.n:
            raise ShapeError(f"input of dim {x.dim} fed to an SVM expecting {self.n}")
        return float(self.weights[x.indices] @ x.values + self.bias)

    def decision_batch(self, data) -> np.ndarray:
        if data.dim != self.n:
            raise ShapeError(f"data of dim {data.dim} fed to an SVM expecting {self.n}")
        return data.X @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"n": self.n, "weights": self.weights.tolist(), "bias": self.bias, "C": self.c_param,
                "epochs": self.epochs, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        w = np.asarray(d["weights"], dtype=np.float64)
        if w.shape != (d["n"],):
            raise ShapeError(f"weights of length {w.size}, declared n={d['n']}")
        return cls(w, float(d["bias"]), float(d["C"]), d.get("epochs", 50), d.get("seed", 0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        return cls.from_dict(json.loads(text))


def objective(model: SvmModel, data: LabeledSet) -> float:
    """Primal objective lam_reg/2 ||(w, b)||^2 + mean hinge, with lam_reg = 1/(C m)."""
    m = len(data)
    lam_reg = 1.0 / (model.c_param * m)
    ysgn = 2.0 * data.y - 1.0
    hinge = np.maximum(0.0, 1.0 - ysgn * model.decision_batch(data))
    return 0.5 * lam_reg * (model.weights @ model.weights + model.bias ** 2) + hinge.mean()


def svm_train(data: LabeledSet, C: float, epochs: int = 50, seed: int = 0, checkpoint=None) -> SvmModel:
    """Train with step 1/(lam_reg t).  ``checkpoint(epoch, model)`` is called after each epoch."""
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    if len(data) == 0:
        raise DataError("cannot train an SVM on an empty set")
    if epochs < 1:
        raise ValueError("epochs must be positive")
    m, n = len(data), data.dim
    lam_reg = 1.0 / (C * m)
    radius = 1.0 / math.sqrt(lam_reg)
    ptr, idx, val = data.csr()
    ysgn = 2.0 * data.y.astype(np.float64) - 1.0
    v = np.zeros(n + 1)
    scale_norm = np.array([1.0, 0.0])
    rng = Rng(seed)
    t = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(m)
        t = K.hinge_epoch(v, scale_norm, ptr, idx, val, ysgn, order, lam_reg, t, radius)
        if checkpoint is not None:
            checkpoint(epoch, _model(v, scale_norm, C, epochs, seed))
    return _model(v, scale_norm, C, epochs, seed)


def _model(v, scale_norm, C, epochs, seed) -> SvmModel:
    w = scale_norm[0] * v
    return SvmModel(w[:-1].copy(), float(w[-1]), float(C), epochs, seed)


def svm_predict(model: SvmModel, x) -> int:
    """Label 1 when the decision value is >= 0."""
    return 1 if model.decision(x) >= 0.0 else 0


def svm_predict_batch(model: SvmModel, data) -> np.ndarray:
    return (model.decision_batch(data) >= 0.0).astype(np.int64)


def svm_error(model: SvmModel, data: LabeledSet) -> float:
    if len(data) == 0:
        raise DataError("error on an empty set")
    return float(np.mean(svm_predict_batch(model, data) != data.y))
