"""Numeric views of a trained 2-D model: label and domain decision surfaces,
PCA of the hidden representation, and the hidden neurons' 1/2 level lines.
Everything is emitted as numbers/CSV; plotting is left to the caller."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
import numpy as np

from .datasets import LabeledSet, UnlabeledSet
from .net import DannParams, forward_batch
from .tensor import ShapeError


@dataclass
class Grid2D:
    x_range: tuple  # (min, max, steps)
    y_range: tuple
    values: np.ndarray  # values[i, j] sits at (xs[j], ys[i])

    def __post_init__(self):
        for lo, hi, n in (self.x_range, self.y_range):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and n >= 2):
                raise ValueError(f"bad grid range {(lo, hi, n)}")
        if self.values.shape != (self.y_range[2], self.x_range[2]):
            raise ValueError("grid values do not match the ranges")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.x_range)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(*self.y_range)

    def nodes(self) -> np.ndarray:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


def bounding_region(*samples, inflate: float = 0.2) -> tuple[float, float, float, float]:
    """(xmin, xmax, ymin, ymax) of the samples, each side widened by ``inflate`` of the extent."""
    P = np.vstack([s.X.toarray() if hasattr(s, "X") else np.asarray(s) for s in samples])
    lo, hi = P.min(axis=0), P.max(axis=0)
    pad = inflate * np.maximum(hi - lo, 1e-12)
    return float(lo[0] - pad[0]), float(hi[0] + pad[0]), float(lo[1] - pad[1]), float(hi[1] + pad[1])


def _require_2d(p: DannParams):
    if p.n != 2:
        raise ShapeError(f"decision surfaces need a 2-D input model, this one takes {p.n}")


def _eval_grid(p: DannParams, region, steps: int, column: str) -> Grid2D:
    _require_2d(p)
    xmin, xmax, ymin, ymax = region
    g = Grid2D((xmin, xmax, steps), (ymin, ymax, steps), np.zeros((steps, steps)))
    _, F, O = forward_batch(p, UnlabeledSet.from_dense(g.nodes()))
    vals = F[:, 1] if column == "label" else O
    g.values = vals.reshape(steps, steps)
    return g


def label_boundary_grid(p: DannParams, region, steps: int = 300) -> Grid2D:
    """f_1(x) at every node; the decision boundary is its 0.5 level set."""
    return _eval_grid(p, region, steps, "label")


def domain_boundary_grid(p: DannParams, region, steps: int = 300) -> Grid2D:
    """Domain regressor output o(h(x)) at every node (>= 0.5 reads as source)."""
    return _eval_grid(p, region, steps, "domain")


# ---------------------------------------------------------------- PCA

def jacobi_eigh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as columns).
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                aij = A[i, j]
                if abs(aij) <= 1e-300:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ai, aj = A[:, i].copy(), A[:, j].copy()
                A[:, i] = c * ai - s * aj
                A[:, j] = s * ai + c * aj
                ai, aj = A[i, :].copy(), A[j, :].copy()
                A[i, :] = c * ai - s * aj
                A[j, :] = s * ai + c * aj
                A[i, j] = A[j, i] = 0.0
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
    else:
        raise ArithmeticError(f"Jacobi did not converge in {max_sweeps} sweeps")
    evals = np.diag(A).copy()
    order = np.argsort(-evals, kind="stable")
    return evals[order], V[:, order]


@dataclass
class Pca2D:
    mean: np.ndarray
    components: np.ndarray          # (2, dim), orthonormal rows
    eigenvalues: np.ndarray         # all eigenvalues, descending
    projected: list = field(default_factory=list)  # (pc1, pc2, domain, label)

    def project(self, Z) -> np.ndarray:
        return (np.atleast_2d(Z) - self.mean) @ self.components.T


def pca_fit(Z) -> Pca2D:
    """Top-2 principal axes of the rows of Z (centered only, covariance with 1/N)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[0] < 3:
        raise ValueError("PCA needs at least three points")
    if Z.shape[1] < 2:
        raise ValueError("PCA to two components needs at least two dimensions")
    mu = Z.mean(axis=0)
    C = (Z - mu).T @ (Z - mu) / Z.shape[0]
    C = 0.5 * (C + C.T)
    if not np.trace(C) > 0:
        raise ValueError("all representations are identical; PCA is undefined")
    evals, vecs = jacobi_eigh(C)
    comps = vecs[:, :2].T.copy()
    for k in range(2):
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    return Pca2D(mu, comps, evals)


def pca_embed(p: DannParams, S: LabeledSet, T, T_labels=None) -> Pca2D:
    """PCA fit on h(S) and h(T) jointly; projected rows tagged with domain and label."""
    Hs, _, _ = forward_batch(p, S)
    Ht, _, _ = forward_batch(p, T)
    pca = pca_fit(np.vstack([Hs, Ht]))
    if T_labels is None and isinstance(T, LabeledSet):
        T_labels = T.y
    rows = []
    for H, dom, labels in ((Hs, "source", S.y), (Ht, "target", T_labels)):
        P = pca.project(H)
        for k, (a, b) in enumerate(P):
            lab = "" if labels is None else int(labels[k])
            rows.append((float(a), float(b), dom, lab))
    pca.projected = rows
    return pca


# ---------------------------------------------------------------- hidden neurons

@dataclass(frozen=True)
class LevelLine:
    """Neuron i is 1/2 on a*x1 + b*x2 + c = 0."""

    neuron: int
    a: float
    b: float
    c: float
    degenerate: bool

    def points(self, t: np.ndarray) -> np.ndarray:
        """Points on the line, parametrised along its direction from the closest point to the origin."""
        if self.degenerate:
            raise ValueError(f"neuron {self.neuron} has zero input weights")
        nrm2 = self.a ** 2 + self.b ** 2
        base = np.array([-self.c * self.a / nrm2, -self.c * self.b / nrm2])
        direction = np.array([-self.b, self.a]) / math.sqrt(nrm2)
        return base + np.outer(t, direction)


def hidden_level_sets(p: DannParams) -> list[LevelLine]:
    _require_2d(p)
    return [LevelLine(i, float(p.W[i, 0]), float(p.W[i, 1]), float(p.b[i]),
                      bool(p.W[i, 0] == 0.0 and p.W[i, 1] == 0.0))
            for i in range(p.l)]


# ---------------------------------------------------------------- CSV

GRID_HEADER = ["x", "y", "value"]
PCA_HEADER = ["pc1", "pc2", "domain", "label"]
LEVELSET_HEADER = ["neuron_id", "a", "b", "c", "degenerate"]


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_grid_csv(path, g: Grid2D) -> None:
    with open(path, "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(GRID_HEADER)
        for (x, y), v in zip(g.nodes(), g.values.ravel()):
            wr.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def write_pca_csv(path, pca: Pca2D) -> None:
    with open(path, "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(PCA_HEADER)
        for a, b, dom, lab in pca.projected:
            wr.writerow([repr(a), repr(b), dom, lab])


def write_levelsets_csv(path, lines: list[LevelLine]) -> None:
    with open(path, "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(LEVELSET_HEADER)
        for ln in lines:
            wr.writerow([ln.neuron, repr(ln.a), repr(ln.b), repr(ln.c), int(ln.degenerate)])
