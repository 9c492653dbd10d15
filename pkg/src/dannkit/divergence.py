"""Empirical H-divergence and Proxy A-distance (PAD)."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .datasets import DataError, LabeledSet, UnlabeledSet
from .net import DannParams, forward_batch
from .svm import svm_error, svm_train
from .tensor import Rng

# ten values log-spaced over [1e-5, 1]
DEFAULT_C_GRID = tuple(float(c) for c in np.logspace(-5, 0, 10))
MAX_SPLIT_TRIES = 10


@dataclass
class DomainDataset:
    """Source rows labeled 1 followed by target rows labeled 0."""

    data: LabeledSet
    m_source: int
    m_target: int

    @property
    def dim(self) -> int:
        return self.data.dim

    def __len__(self) -> int:
        return len(self.data)


@dataclass
class PadReport:
    split_seed: int
    per_C_errors: list
    best_epsilon: float
    pad_value: float
    representation_tag: str = "raw"
    svm: dict = field(default_factory=dict)

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        if not self.per_C_errors:
            raise ValueError("PadReport without any per-C error")
        if self.best_epsilon != min(e for _, e in self.per_C_errors):
            raise ValueError("best_epsilon is not the minimum per-C error")
        if self.pad_value != pad_from_error(self.best_epsilon):
            raise ValueError("pad_value does not equal 2(1 - 2 eps)")

    def to_dict(self) -> dict:
        return {"split_seed": self.split_seed, "per_C_errors": [list(p) for p in self.per_C_errors],
                "best_epsilon": self.best_epsilon, "pad_value": self.pad_value,
                "representation_tag": self.representation_tag, "svm": self.svm}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PadReport":
        d = json.loads(text)
        d["per_C_errors"] = [tuple(p) for p in d["per_C_errors"]]
        return cls(**d)


def _as_csr(feats):
    if isinstance(feats, (LabeledSet, UnlabeledSet)):
        return feats.X
    if sp.issparse(feats):
        return sp.csr_matrix(feats)
    if isinstance(feats, np.ndarray):
        return sp.csr_matrix(np.atleast_2d(feats))
    return UnlabeledSet.from_vectors(list(feats)).X


def build_U(S_feats, T_feats) -> DomainDataset:
    """Stack source (label 1) over target (label 0)."""
    Xs, Xt = _as_csr(S_feats), _as_csr(T_feats)
    if Xs.shape[0] == 0 or Xt.shape[0] == 0:
        raise DataError("both samples must be nonempty")
    if Xs.shape[1] != Xt.shape[1]:
        raise DataError(f"source dim {Xs.shape[1]} != target dim {Xt.shape[1]}")
    y = np.r_[np.ones(Xs.shape[0], np.int64), np.zeros(Xt.shape[0], np.int64)]
    return DomainDataset(LabeledSet(sp.vstack([Xs, Xt], format="csr"), y, "U"), Xs.shape[0], Xt.shape[0])


def empirical_h_divergence(err_source_as_1: float, err_target_as_0: float) -> float:
    """Plug-in 2(1 - [a + b]) where a is the share of source rows the
    discriminator labels 1 and b the share of target rows it labels 0,
    i.e. the bracketed sum minimised over the hypothesis class."""
    for v in (err_source_as_1, err_target_as_0):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"error term {v} outside [0, 1]")
    return 2.0 * (1.0 - (err_source_as_1 + err_target_as_0))


def pad_from_error(eps: float) -> float:
    """2(1 - 2 eps); not clipped, so eps > 0.5 gives a negative distance."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"error {eps} outside [0, 1]")
    return 2.0 * (1.0 - 2.0 * eps)


def canonical_order(X: sp.csr_matrix) -> np.ndarray:
    """Row order determined by row content alone (stable for duplicates).

    Splitting and SVM training run on U in this order, so swapping the
    source and target roles only flips the labels and leaves PAD unchanged.
    """
    keys = [X.indices[X.indptr[i]:X.indptr[i + 1]].astype(np.int64).tobytes()
            + X.data[X.indptr[i]:X.indptr[i + 1]].tobytes() for i in range(X.shape[0])]
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)


def split_U(U: DomainDataset, rng: Rng) -> tuple[LabeledSet, LabeledSet]:
    """Seeded shuffle then halve; the extra row of an odd |U| goes to the training half.

    Redraws when a half holds one domain only, up to MAX_SPLIT_TRIES times.
    """
    U = DomainDataset(U.data.subset(canonical_order(U.data.X)), U.m_source, U.m_target)
    n = len(U)
    n_train = (n + 1) // 2
    for _ in range(MAX_SPLIT_TRIES):
        perm = rng.permutation(n)
        tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        a, b = U.data.subset(tr), U.data.subset(te)
        if all(0 < h.y.sum() < len(h) for h in (a, b)):
            return a, b
    raise DataError(f"could not split U into two halves holding both domains after {MAX_SPLIT_TRIES} draws")


def compute_pad(S_feats, T_feats, C_grid: Sequence[float] = DEFAULT_C_GRID, seed: int = 0,
                epochs: int = 50, representation_tag: str = "raw", jobs: int = 1) -> PadReport:
    """Train one linear SVM per C on half of U, take the lowest held-out error as eps."""
    if len(C_grid) == 0:
        raise ValueError("empty C grid")
    U = build_U(S_feats, T_feats)
    if U.m_source < 2 or U.m_target < 2:
        raise DataError("need at least two examples per domain")
    rng = Rng(seed)
    train_half, test_half = split_U(U, rng.derive(0))

    def one(C):
        model = svm_train(train_half, C, epochs, seed=seed)
        return float(C), svm_error(model, test_half)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            errors = list(ex.map(one, C_grid))
    else:
        errors = [one(C) for C in C_grid]
    best = min(e for _, e in errors)
    return PadReport(seed, errors, best, pad_from_error(best), representation_tag,
                     {"trainer": "pegasos", "epochs": epochs, "train_size": len(train_half),
                      "test_size": len(test_half)})


def hidden_representation(p: DannParams, data) -> np.ndarray:
    H, _, _ = forward_batch(p, data)
    return H


def pad_on_representation(p: DannParams, S, T, C_grid: Sequence[float] = DEFAULT_C_GRID, seed: int = 0,
                          epochs: int = 50, tag: str = "model", jobs: int = 1) -> PadReport:
    """PAD between h(S) and h(T) for the hidden layer of ``p``."""
    return compute_pad(hidden_representation(p, S), hidden_representation(p, T), C_grid, seed,
                       epochs, representation_tag=tag, jobs=jobs)
