"""Labeled/unlabeled samples, the rotated two-moons toy problem, the sparse
text format, and the source/target task splitter."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .tensor import Rng, SparseVec


class DataError(ValueError):
    """Malformed or insufficient data."""


def _to_csr(rows: Sequence[SparseVec], dim: Optional[int] = None) -> sp.csr_matrix:
    if dim is None:
        if not rows:
            raise DataError("cannot infer dimension of an empty sample")
        dim = rows[0].dim
    indptr = [0]
    for r in rows:
        if r.dim != dim:
            raise DataError(f"mixed dimensions in one sample: {r.dim} vs {dim}")
        indptr.append(indptr[-1] + r.nnz)
    indices = np.concatenate([r.indices for r in rows]) if rows else np.empty(0, np.int64)
    data = np.concatenate([r.values for r in rows]) if rows else np.empty(0)
    return sp.csr_matrix((data, indices, np.asarray(indptr)), shape=(len(rows), dim))


def _clean(X) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=np.float64)
    X.eliminate_zeros()
    X.sort_indices()
    return X


class _Sample:
    X: sp.csr_matrix
    name: str

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def vector(self, i: int) -> SparseVec:
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return SparseVec(self.dim, self.X.indices[lo:hi], self.X.data[lo:hi])

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR triplet with int64 index arrays, as the compiled kernels expect."""
        return (self.X.indptr.astype(np.int64), self.X.indices.astype(np.int64), self.X.data)


@dataclass
class LabeledSet(_Sample):
    X: sp.csr_matrix
    y: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.X = _clean(self.X)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.shape != (self.X.shape[0],):
            raise DataError(f"{self.X.shape[0]} examples but {self.y.size} labels")
        if self.y.size and not np.all((self.y == 0) | (self.y == 1)):
            raise DataError("labels must be 0 or 1")

    @classmethod
    def from_vectors(cls, vectors: Sequence[SparseVec], labels, name="", dim=None):
        return cls(_to_csr(list(vectors), dim), np.asarray(labels), name)

    @classmethod
    def from_dense(cls, X, y, name=""):
        return cls(sp.csr_matrix(np.asarray(X, dtype=np.float64)), y, name)

    def __iter__(self) -> Iterator[tuple[SparseVec, int]]:
        for i in range(len(self)):
            yield self.vector(i), int(self.y[i])

    def subset(self, idx, name=None) -> "LabeledSet":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledSet(self.X[idx], self.y[idx], self.name if name is None else name)

    def unlabeled(self, name=None) -> "UnlabeledSet":
        return UnlabeledSet(self.X, self.name if name is None else name)


@dataclass
class UnlabeledSet(_Sample):
    X: sp.csr_matrix
    name: str = ""

    def __post_init__(self):
        self.X = _clean(self.X)

    @classmethod
    def from_vectors(cls, vectors: Sequence[SparseVec], name="", dim=None):
        return cls(_to_csr(list(vectors), dim), name)

    @classmethod
    def from_dense(cls, X, name=""):
        return cls(sp.csr_matrix(np.asarray(X, dtype=np.float64)), name)

    def __iter__(self) -> Iterator[SparseVec]:
        for i in range(len(self)):
            yield self.vector(i)

    def subset(self, idx, name=None) -> "UnlabeledSet":
        return UnlabeledSet(self.X[np.asarray(idx, dtype=np.int64)], self.name if name is None else name)


# ---------------------------------------------------------------- two moons

@dataclass(frozen=True)
class MoonsConfig:
    """Rotated inter-twinning moons.

    The moon geometry (radius, offsets, noise) is our own choice; only the
    sample sizes and the 35 degree rotation are fixed by the experiment.
    ``target_seed`` draws the target from the stream a source with that
    seed would use, so ``target_seed == seed`` repeats the source points.
    """

    n_per_moon: int = 150
    rotation_deg: float = 35.0
    noise_sd: float = 0.1
    radius: float = 1.0
    width: float = 0.0
    x_offset: float = 1.0
    y_offset: float = 0.5
    seed: int = 0
    target_seed: Optional[int] = None

    def __post_init__(self):
        if self.n_per_moon < 1:
            raise ValueError("n_per_moon must be at least 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.noise_sd < 0 or self.width < 0:
            raise ValueError("noise_sd and width must be nonnegative")


def draw_moons(cfg: MoonsConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample 2*n_per_moon points: label 1 on the upper moon, label 0 on the lower one."""
    n = cfg.n_per_moon
    g = rng.generator
    t_up = g.uniform(0.0, math.pi, n)
    t_lo = g.uniform(math.pi, 2.0 * math.pi, n)
    r_up = cfg.radius + g.uniform(-cfg.width / 2, cfg.width / 2, n)
    r_lo = cfg.radius + g.uniform(-cfg.width / 2, cfg.width / 2, n)
    upper = np.column_stack([r_up * np.cos(t_up), r_up * np.sin(t_up)])
    lower = np.column_stack([cfg.x_offset + r_lo * np.cos(t_lo), cfg.y_offset + r_lo * np.sin(t_lo)])
    X = np.vstack([lower, upper]) + cfg.noise_sd * g.standard_normal((2 * n, 2))
    y = np.concatenate([np.zeros(n, np.int64), np.ones(n, np.int64)])
    return X, y


def rotate(X: np.ndarray, degrees: float, center=None) -> np.ndarray:
    """Rotate 2-D points counter-clockwise about ``center`` (default: their centroid)."""
    X = np.asarray(X, dtype=np.float64)
    if degrees == 0.0:
        return X.copy()
    center = X.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    th = math.radians(degrees)
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    return (X - center) @ R.T + center


def gen_moons(cfg: MoonsConfig = MoonsConfig()):
    """Return (S, T, T_truth): labeled source, unlabeled rotated target, and its hidden labels."""
    root = Rng(cfg.seed)
    Xs, ys = draw_moons(cfg, root.derive(0))
    trng = Rng(cfg.target_seed).derive(0) if cfg.target_seed is not None else root.derive(1)
    Xt, yt = draw_moons(cfg, trng)
    Xt = rotate(Xt, cfg.rotation_deg)
    S = LabeledSet.from_dense(Xs, ys, "moons-source")
    T_truth = LabeledSet.from_dense(Xt, yt, "moons-target")
    return S, T_truth.unlabeled(), T_truth


def write_moons_csv(path, S: LabeledSet, T_truth: LabeledSet) -> None:
    """Plain CSV (x1, x2, label, domain) with domain 1 for source rows."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x1", "x2", "label", "domain"])
        for data, dom in ((S, 1), (T_truth, 0)):
            D = data.X.toarray()
            for (x1, x2), lab in zip(D, data.y):
                wr.writerow([repr(float(x1)), repr(float(x2)), int(lab), dom])


# ---------------------------------------------------------------- sparse text

UNLABELED = -1


def parse_sparse_lines(lines, dim: Optional[int] = None, source="<input>"):
    labels, vectors = [], []
    max_idx = -1
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, *items = line.split()
        try:
            lab = int(head)
        except ValueError:
            raise DataError(f"{source}:{lineno}: bad label {head!r}") from None
        if lab not in (0, 1, UNLABELED):
            raise DataError(f"{source}:{lineno}: label must be 0, 1 or -1, got {lab}")
        pairs = []
        last = -1
        for it in items:
            try:
                i, v = it.split(":")
                i, v = int(i), float(v)
            except ValueError:
                raise DataError(f"{source}:{lineno}: malformed entry {it!r}") from None
            if i < 0:
                raise DataError(f"{source}:{lineno}: negative index {i}")
            if not math.isfinite(v):
                raise DataError(f"{source}:{lineno}: non-finite value {it!r}")
            if i <= last:
                kind = "duplicate" if i == last else "out-of-order"
                raise DataError(f"{source}:{lineno}: {kind} index {i}")
            last = i
            if v != 0.0:
                pairs.append((i, v))
            max_idx = max(max_idx, i)
        labels.append(lab)
        vectors.append(pairs)
    if dim is None:
        dim = max_idx + 1
    elif max_idx >= dim:
        raise DataError(f"{source}: index {max_idx} exceeds declared dim {dim}")
    return labels, [SparseVec.from_pairs(dim, p) for p in vectors], dim


def load_sparse(path, dim: Optional[int] = None) -> Union[LabeledSet, UnlabeledSet]:
    """Read ``<label> <idx>:<val> ...`` lines; label -1 marks unlabeled rows.

    A header comment ``# dim <n>`` fixes the dimension; otherwise it is the
    largest index plus one.  All-unlabeled files give an UnlabeledSet.
    """
    path = Path(path)
    text = path.read_text().splitlines()
    for line in text:
        if line.startswith("# dim ") and dim is None:
            dim = int(line.split()[2])
    labels, vectors, dim = parse_sparse_lines(text, dim, str(path))
    name = path.stem
    if labels and all(l == UNLABELED for l in labels):
        return UnlabeledSet.from_vectors(vectors, name, dim)
    if any(l == UNLABELED for l in labels):
        raise DataError(f"{path}: mixes labeled and unlabeled rows")
    return LabeledSet.from_vectors(vectors, labels, name, dim)


def format_sparse(data: Union[LabeledSet, UnlabeledSet]) -> str:
    lines = [f"# dim {data.dim}"]
    labels = data.y if isinstance(data, LabeledSet) else [UNLABELED] * len(data)
    for i in range(len(data)):
        v = data.vector(i)
        body = " ".join(f"{j}:{x!r}" for j, x in v.pairs())
        lines.append(f"{int(labels[i])} {body}".rstrip())
    return "\n".join(lines) + "\n"


def save_sparse(data: Union[LabeledSet, UnlabeledSet], path) -> None:
    Path(path).write_text(format_sparse(data))


# ---------------------------------------------------------------- tasks

@dataclass
class Task:
    name: str
    S: LabeledSet
    T: UnlabeledSet
    target_val: LabeledSet
    target_test: LabeledSet
    indices: dict = field(default_factory=dict)


def make_task(source: LabeledSet, target: LabeledSet, m: int = 2000, m_prime: int = 2000,
              val_target: int = 100, seed: int = 0, name: Optional[str] = None) -> Task:
    """Draw S from the source pool and three disjoint target subsets.

    The target test set is whatever remains after the unlabeled training
    sample and the labeled validation sample are taken out.
    """
    if source.dim != target.dim:
        raise DataError(f"source dim {source.dim} != target dim {target.dim}")
    if m < 1 or m_prime < 1 or val_target < 1:
        raise DataError("m, m_prime and val_target must be positive")
    if len(source) < m:
        raise DataError(f"source pool has {len(source)} examples, need {m}")
    if len(target) <= m_prime + val_target:
        raise DataError(
            f"target pool has {len(target)} examples, need more than {m_prime + val_target} "
            "to leave a nonempty test set")
    rng = Rng(seed)
    s_idx = np.sort(rng.derive(0).permutation(len(source))[:m])
    perm = rng.derive(1).permutation(len(target))
    t_idx = np.sort(perm[:m_prime])
    v_idx = np.sort(perm[m_prime:m_prime + val_target])
    test_idx = np.sort(perm[m_prime + val_target:])
    name = name or f"{source.name}->{target.name}"
    return Task(
        name=name,
        S=source.subset(s_idx),
        T=target.subset(t_idx).unlabeled(),
        target_val=target.subset(v_idx),
        target_test=target.subset(test_idx),
        indices={"source": s_idx, "target_train": t_idx, "target_val": v_idx, "target_test": test_idx},
    )


def moons_task(cfg: MoonsConfig = MoonsConfig(), val_target: int = 100) -> Task:
    """Moons as a Task: test on the rotated target itself, validate on a fresh labeled target draw."""
    S, T, T_truth = gen_moons(cfg)
    Xv, yv = draw_moons(cfg, Rng(cfg.seed).derive(2))
    Xv = rotate(Xv, cfg.rotation_deg)
    pick = np.sort(Rng(cfg.seed).derive(3).permutation(len(yv))[:val_target])
    val = LabeledSet.from_dense(Xv[pick], yv[pick], "moons-target-val")
    return Task("moons", S, T, val, T_truth)


# ---------------------------------------------------------------- synthetic sparse pair

@dataclass(frozen=True)
class ShiftedSparseConfig:
    """Bag-of-words pair with a source-only shortcut.

    Vocabulary layout: ``n_pivot`` shared sentiment words (first half lean
    positive, second half negative), ``n_marker`` words that occur only in
    source documents and mostly in positive ones, shared filler words, and
    two blocks of domain-specific neutral words at the end.
    """

    dim: int = 5000
    n_pivot: int = 200
    n_marker: int = 100
    n_domain_words: int = 500
    pivot_rate: float = 6.0
    pivot_agreement: float = 0.7
    marker_rate_pos: float = 0.9
    marker_rate_neg: float = 0.1
    markers_per_doc: int = 3
    filler_rate: float = 20.0
    domain_rate: float = 5.0

    def __post_init__(self):
        if self.n_pivot % 2 or self.n_pivot < 2:
            raise ValueError("n_pivot must be a positive even number")
        if self.n_pivot + self.n_marker + 2 * self.n_domain_words >= self.dim:
            raise ValueError("vocabulary blocks do not fit in dim")


def draw_shifted_sparse(cfg: ShiftedSparseConfig, n: int, domain: int, rng: Rng) -> LabeledSet:
    """``n`` labeled binary documents from the source (domain 0) or target (domain 1)."""
    g = rng.generator
    half = cfg.n_pivot // 2
    mark0 = cfg.n_pivot
    fill0 = mark0 + cfg.n_marker
    n_fill = cfg.dim - 2 * cfg.n_domain_words - fill0
    dom0 = fill0 + n_fill + domain * cfg.n_domain_words
    ys = g.integers(0, 2, n)
    rows = []
    for y in ys:
        words = set()
        for _ in range(g.poisson(cfg.pivot_rate)):
            agree = g.random() < cfg.pivot_agreement
            base = 0 if (y == 1) == agree else half
            words.add(base + int(g.integers(half)))
        if domain == 0 and g.random() < (cfg.marker_rate_pos if y == 1 else cfg.marker_rate_neg):
            words.update(mark0 + g.integers(cfg.n_marker, size=cfg.markers_per_doc))
        words.update(dom0 + g.integers(cfg.n_domain_words, size=g.poisson(cfg.domain_rate)))
        words.update(fill0 + g.integers(n_fill, size=g.poisson(cfg.filler_rate)))
        rows.append(np.array(sorted(int(w) for w in words), dtype=np.int64))
    ptr = np.r_[0, np.cumsum([r.size for r in rows])]
    idx = np.concatenate(rows) if rows else np.empty(0, np.int64)
    X = sp.csr_matrix((np.ones(idx.size), idx, ptr), shape=(n, cfg.dim))
    return LabeledSet(X, ys.astype(np.int64), f"shifted-{'source' if domain == 0 else 'target'}")


def shifted_sparse_task(seed: int = 0, cfg: ShiftedSparseConfig = ShiftedSparseConfig(),
                        m: int = 2000, m_prime: int = 2000, val_target: int = 100,
                        n_test: int = 900) -> Task:
    root = Rng(seed)
    source = draw_shifted_sparse(cfg, m, 0, root.derive(0))
    target = draw_shifted_sparse(cfg, m_prime + val_target + n_test, 1, root.derive(1))
    return make_task(source, target, m, m_prime, val_target, seed=seed, name="shifted-source->shifted-target")
