"""Numerical substrate shared by every other module.

Dense vectors and matrices are plain float64 numpy arrays (matrices are
row-major, numpy's default).  Sparse vectors are sorted (index, value)
pairs.  ``Rng`` wraps numpy's PCG64 generator so that streams are
reproducible from a 64-bit seed and can be split deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

SIGM_CLAMP = 700.0
# sigm saturates to exactly 1.0 in float64 long before the clamp; keep it inside (0, 1)
_SIGM_MAX = np.nextafter(1.0, 0.0)


class ShapeError(ValueError):
    """Raised when operand dimensions disagree."""


@dataclass(frozen=True)
class SparseVec:
    """Sparse vector of dimension ``dim`` with strictly increasing indices."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        val = np.ascontiguousarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if self.dim < 0:
            raise ValueError(f"negative dimension {self.dim}")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range for dim {self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("sparse values must be finite")
        if np.any(val == 0.0):
            raise ValueError("sparse values must be nonzero")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, float]]) -> "SparseVec":
        pairs = list(pairs)
        if not pairs:
            return cls(dim, np.empty(0, np.int64), np.empty(0))
        idx, val = zip(*pairs)
        return cls(dim, np.asarray(idx), np.asarray(val, dtype=np.float64))

    @classmethod
    def from_dense(cls, x: Sequence[float]) -> "SparseVec":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(x.size, nz, x[nz])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def __eq__(self, other):
        if not isinstance(other, SparseVec):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))


Vector = Union[SparseVec, np.ndarray]


def _as_vector(x) -> Vector:
    if isinstance(x, SparseVec):
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {x.shape}")
    return x


def _dim(x: Vector) -> int:
    return x.dim if isinstance(x, SparseVec) else x.shape[0]


def sigm(a) -> np.ndarray:
    """Logistic sigmoid with the argument clamped to [-700, 700].

    Outputs are additionally capped just below 1.0 so that every entry stays
    in the open interval (0, 1).
    """
    a = np.clip(np.asarray(a, dtype=np.float64), -SIGM_CLAMP, SIGM_CLAMP)
    return np.minimum(1.0 / (1.0 + np.exp(-a)), _SIGM_MAX)


def softmax(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def matvec(M: np.ndarray, x) -> np.ndarray:
    """``M @ x`` for a dense or sparse ``x``; the sparse path reads only stored entries."""
    M = np.asarray(M, dtype=np.float64)
    x = _as_vector(x)
    if M.ndim != 2 or M.shape[1] != _dim(x):
        raise ShapeError(f"cannot multiply matrix of shape {M.shape} by vector of dim {_dim(x)}")
    if isinstance(x, SparseVec):
        return M[:, x.indices] @ x.values if x.nnz else np.zeros(M.shape[0])
    return M @ x


def outer(u, x) -> np.ndarray:
    """Dense outer product ``u xᵀ``."""
    u = np.asarray(u, dtype=np.float64)
    x = _as_vector(x)
    if u.ndim != 1:
        raise ShapeError(f"outer expects a vector on the left, got shape {u.shape}")
    out = np.zeros((u.size, _dim(x)))
    if isinstance(x, SparseVec):
        out[:, x.indices] = np.outer(u, x.values)
    else:
        out[:] = np.outer(u, x)
    return out


def add_outer(M: np.ndarray, alpha: float, u, x) -> None:
    """In place ``M += alpha * u xᵀ``; for sparse ``x`` only the stored columns change."""
    x = _as_vector(x)
    u = np.asarray(u, dtype=np.float64)
    if M.shape != (u.size, _dim(x)):
        raise ShapeError(f"accumulator of shape {M.shape} does not match ({u.size}, {_dim(x)})")
    if isinstance(x, SparseVec):
        M[:, x.indices] += alpha * np.outer(u, x.values)
    else:
        M += alpha * np.outer(u, x)


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> None:
    """In place ``y += alpha * x``."""
    if x.shape != y.shape:
        raise ShapeError(f"axpy shapes differ: {x.shape} vs {y.shape}")
    y += alpha * x


class Rng:
    """Seeded PCG64 stream.

    ``derive(k)`` returns an independent child stream keyed by ``k``; the
    child depends only on the root seed and the key path, never on how many
    draws the parent has made.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def derive(self, key: int) -> "Rng":
        return Rng(self.seed, self.path + (key,))

    def uniform_int(self, lo: int, hi: int) -> int:
        """Integer uniform on the closed range [lo, hi]."""
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return int(self.generator.integers(lo, hi, endpoint=True))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return float(self.generator.uniform(lo, hi))

    def gauss(self) -> float:
        return float(self.generator.standard_normal())

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"
