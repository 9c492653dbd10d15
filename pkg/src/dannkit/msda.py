"""Marginalized stacked denoising autoencoder (closed form).

Each layer maps the bias-augmented input to a reconstruction of the clean
input, solving for the weights that minimise the expected squared error
under feature dropout with probability ``p`` (the bias coordinate is never
dropped).  Layers are stacked with tanh in between; the representation is
the raw input followed by every layer's output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .datasets import DataError, LabeledSet, UnlabeledSet
from .tensor import ShapeError, SparseVec


@dataclass
class MsdaModel:
    layers: list               # each (r, r + 1)
    corruption_p: float
    input_dim: int
    ridge: float = 1e-5
    features: Optional[np.ndarray] = None   # kept input columns when truncated, else None
    meta: dict = field(default_factory=dict)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_dim(self) -> int:
        return self.input_dim if self.features is None else int(self.features.size)

    @property
    def output_dim(self) -> int:
        return self.input_dim + self.num_layers * self.layer_dim

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "corruption_p": self.corruption_p, "ridge": self.ridge,
                "features": None if self.features is None else self.features.tolist(),
                "layers": [{"rows": W.shape[0], "cols": W.shape[1], "data": W.ravel().tolist()}
                           for W in self.layers],
                "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MsdaModel":
        layers = [np.asarray(L["data"], dtype=np.float64).reshape(L["rows"], L["cols"]) for L in d["layers"]]
        feats = None if d.get("features") is None else np.asarray(d["features"], dtype=np.int64)
        return cls(layers, d["corruption_p"], d["input_dim"], d.get("ridge", 1e-5), feats, d.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "MsdaModel":
        return cls.from_dict(json.loads(text))


def _dense_rows(X) -> np.ndarray:
    if isinstance(X, (LabeledSet, UnlabeledSet)):
        X = X.X
    if sp.issparse(X):
        return X.toarray()
    if isinstance(X, np.ndarray):
        return np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.vstack([v.to_dense() if isinstance(v, SparseVec) else np.asarray(v, float) for v in X])


def most_frequent_features(X, r: int) -> np.ndarray:
    """Indices of the r columns with the most nonzero entries (ties: lower index), sorted."""
    D = X.X if isinstance(X, (LabeledSet, UnlabeledSet)) else X
    counts = np.asarray((D != 0).sum(axis=0)).ravel()
    order = np.lexsort((np.arange(counts.size), -counts))
    return np.sort(order[:r])


def mda_layer(Xc: np.ndarray, p: float, ridge: float) -> np.ndarray:
    """Weights (d, d+1) of one marginalized denoising layer for rows ``Xc`` (N, d)."""
    N, d = Xc.shape
    Xb = np.hstack([Xc, np.ones((N, 1))])
    q = np.full(d + 1, 1.0 - p)
    q[-1] = 1.0
    if ridge > 0.0 and N < d + 1:
        return _mda_layer_lowrank(Xb, q, ridge)
    S = Xb.T @ Xb
    Q = S * np.outer(q, q)
    np.fill_diagonal(Q, q * np.diag(S))
    P = S[:d, :] * q[None, :]
    A = Q + ridge * np.eye(d + 1)
    if ridge == 0.0 and not np.linalg.cond(A) < 1e12:
        raise np.linalg.LinAlgError("singular marginalized scatter matrix; fit with a positive ridge")
    # W A = P; A is positive definite whenever ridge > 0 or the data has full rank
    try:
        Wt = la.solve(A, P.T, assume_a="pos")
    except np.linalg.LinAlgError:
        Wt = la.solve(A, P.T, assume_a="sym")
    return Wt.T


def _mda_layer_lowrank(Xb: np.ndarray, q: np.ndarray, ridge: float) -> np.ndarray:
    """Same solution for N < d+1 rows via the Woodbury identity.

    A = diag(g) + Xq^T Xq with Xq = Xb diag(q) and g = q(1-q) diag(S) + ridge,
    and P = X^T Xq, so only an N x N system is factorised.
    """
    N = Xb.shape[0]
    d = Xb.shape[1] - 1
    Xq = Xb * q[None, :]
    g = q * (1.0 - q) * np.einsum("ij,ij->j", Xb, Xb) + ridge
    B = Xq / g[None, :]                       # Xq diag(g)^-1
    M = np.eye(N) + B @ Xq.T
    G = Xb[:, :d].T @ Xq                      # P, (d, d+1)
    # W = P A^-1 = G diag(1/g) - (G B^T) M^-1 B
    GBt = G @ B.T
    R = la.solve(M, B, assume_a="pos")
    return G / g[None, :] - GBt @ R


def msda_fit(X, p: float = 0.5, layers: int = 5, ridge: float = 1e-5,
             top_features: Optional[int] = None) -> MsdaModel:
    """Fit on unlabeled rows (source and target together).

    ``top_features`` restricts the layers to the r most frequent input columns.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"corruption probability must lie in (0, 1), got {p}")
    if layers < 1:
        raise ValueError("need at least one layer")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    D = _dense_rows(X)
    if D.shape[0] == 0:
        raise DataError("cannot fit mSDA on an empty sample")
    n = D.shape[1]
    feats = None
    if top_features is not None and top_features < n:
        src = X if isinstance(X, (LabeledSet, UnlabeledSet)) or sp.issparse(X) else sp.csr_matrix(D)
        feats = most_frequent_features(src, top_features)
        D = D[:, feats]
    Ws = []
    H = D
    for _ in range(layers):
        W = mda_layer(H, p, ridge)
        Ws.append(W)
        H = np.tanh(np.hstack([H, np.ones((H.shape[0], 1))]) @ W.T)
    meta = {"truncated_to": None if feats is None else int(feats.size), "nonlinearity": "tanh"}
    return MsdaModel(Ws, float(p), n, float(ridge), feats, meta)


def msda_transform_batch(m: MsdaModel, X) -> np.ndarray:
    D = _dense_rows(X)
    if D.shape[1] != m.input_dim:
        raise ShapeError(f"input of dim {D.shape[1]} fed to an mSDA expecting {m.input_dim}")
    H = D if m.features is None else D[:, m.features]
    parts = [D]
    for W in m.layers:
        H = np.tanh(np.hstack([H, np.ones((H.shape[0], 1))]) @ W.T)
        parts.append(H)
    return np.hstack(parts)


def msda_transform(m: MsdaModel, x) -> np.ndarray:
    if isinstance(x, SparseVec):
        if x.dim != m.input_dim:
            raise ShapeError(f"input of dim {x.dim} fed to an mSDA expecting {m.input_dim}")
        x = x.to_dense()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a single vector, got shape {x.shape}")
    return msda_transform_batch(m, x[None, :])[0]


def transform_set(m: MsdaModel, data):
    """Same sample, features replaced by the mSDA representation."""
    Z = sp.csr_matrix(msda_transform_batch(m, data))
    if isinstance(data, LabeledSet):
        return LabeledSet(Z, data.y, data.name)
    return UnlabeledSet(Z, data.name)
