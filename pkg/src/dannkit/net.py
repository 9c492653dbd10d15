"""Shallow domain-adversarial network: forward pass, losses, per-example SGD
with the adversarial domain regressor, and early-stopped training."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels as K
from .datasets import DataError, LabeledSet, UnlabeledSet
from .tensor import Rng, ShapeError, SparseVec, add_outer, matvec, outer, sigm, softmax

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class NumericalError(ArithmeticError):
    """A parameter became NaN or infinite during training."""


class Mode(str, Enum):
    DANN = "dann"
    NN_PLAIN = "nn"
    # classifier trained as a plain NN while a non-adversarial domain regressor learns alongside
    NN_WITH_REGRESSOR = "nn_reg"


@dataclass
class TrainConfig:
    hidden_size: int = 15
    lam: float = 1.0
    learning_rate: float = 1e-3
    seed: int = 0
    mode: Mode = Mode.DANN
    max_epochs: int = 500
    patience: int = 10
    val_fraction: float = 0.10
    shuffle: bool = True
    # ties in validation risk count as improvement and the later snapshot wins
    keep_latest_on_tie: bool = True

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be positive")

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.mode is Mode.NN_PLAIN else self.lam

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass
class DannParams:
    W: np.ndarray   # (l, n)
    b: np.ndarray   # (l,)
    V: np.ndarray   # (2, l)
    c: np.ndarray   # (2,)
    w: np.ndarray   # (l,)
    d: float = 0.0

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64, ndmin=2)
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        self.V = np.array(self.V, dtype=np.float64, ndmin=2)
        self.c = np.array(self.c, dtype=np.float64).reshape(-1)
        self.w = np.array(self.w, dtype=np.float64).reshape(-1)
        self.d = float(self.d)
        l, n = self.W.shape
        if self.b.shape != (l,) or self.V.shape != (2, l) or self.c.shape != (2,) or self.w.shape != (l,):
            raise ShapeError(
                f"inconsistent shapes W{self.W.shape} b{self.b.shape} V{self.V.shape} "
                f"c{self.c.shape} w{self.w.shape}")

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def l(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, n: int, l: int) -> "DannParams":
        return cls(np.zeros((l, n)), np.zeros(l), np.zeros((2, l)), np.zeros(2), np.zeros(l), 0.0)

    @classmethod
    def random_init(cls, n: int, l: int, rng: Rng) -> "DannParams":
        """W, V uniform in +-1/sqrt(fan_in); biases and the regressor start at zero."""
        p = cls.zeros(n, l)
        p.W[:] = rng.generator.uniform(-1.0, 1.0, (l, n)) / math.sqrt(n)
        p.V[:] = rng.generator.uniform(-1.0, 1.0, (2, l)) / math.sqrt(l)
        return p

    def copy(self) -> "DannParams":
        return DannParams(self.W.copy(), self.b.copy(), self.V.copy(), self.c.copy(), self.w.copy(), self.d)

    def blocks(self) -> dict:
        return {"W": self.W, "b": self.b, "V": self.V, "c": self.c, "w": self.w, "d": np.array([self.d])}

    def equals(self, other: "DannParams") -> bool:
        a, o = self.blocks(), other.blocks()
        return all(np.array_equal(a[k], o[k]) for k in a)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.blocks().values())

    def to_dict(self) -> dict:
        return {"n": self.n, "l": self.l, "W": self.W.ravel().tolist(), "b": self.b.tolist(),
                "V": self.V.ravel().tolist(), "c": self.c.tolist(), "w": self.w.tolist(), "d": self.d}

    @classmethod
    def from_dict(cls, d: dict) -> "DannParams":
        n, l = d["n"], d["l"]
        return cls(np.array(d["W"]).reshape(l, n), d["b"], np.array(d["V"]).reshape(2, l), d["c"], d["w"], d["d"])


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_risk: float
    val_risk_history: list
    val_indices: list
    stopped_early: bool = False
    params: Optional[DannParams] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"epochs_run": self.epochs_run, "best_epoch": self.best_epoch,
                "best_val_risk": self.best_val_risk, "val_risk_history": list(self.val_risk_history),
                "val_indices": list(self.val_indices), "stopped_early": self.stopped_early}


# ---------------------------------------------------------------- forward pass

def _check_input(p: DannParams, x) -> SparseVec:
    if not isinstance(x, SparseVec):
        x = SparseVec.from_dense(x)
    if x.dim != p.n:
        raise ShapeError(f"input of dim {x.dim} fed to a network expecting {p.n}")
    return x


def _check_hidden(p: DannParams, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (p.l,):
        raise ShapeError(f"hidden vector of shape {h.shape}, expected ({p.l},)")
    return h


def forward_hidden(p: DannParams, x) -> np.ndarray:
    x = _check_input(p, x)
    h = np.empty(p.l)
    K.hidden_into(p.W, p.b, x.indices, x.values, h)
    return h


def forward_output(p: DannParams, h) -> np.ndarray:
    h = _check_hidden(p, h)
    return np.array(K.output2(p.V, p.c, h))


def domain_regressor(p: DannParams, h) -> float:
    """Modeled probability that the representation ``h`` came from the source domain."""
    h = _check_hidden(p, h)
    return K.domain1(p.w, p.d, h)


def forward_batch(p: DannParams, data) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(H, F, O) for every row of a LabeledSet/UnlabeledSet."""
    if data.dim != p.n:
        raise ShapeError(f"data of dim {data.dim} fed to a network expecting {p.n}")
    ptr, idx, val = data.csr()
    return K.forward_batch(p.W, p.b, p.V, p.c, p.w, p.d, ptr, idx, val)


def nll_loss(f, y: int) -> float:
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    return -math.log(max(float(f[y]), PROB_CLAMP))


def domain_loss(o: float, z: int) -> float:
    if z not in (0, 1):
        raise ValueError(f"domain label must be 0 or 1, got {z}")
    if not (0.0 <= o <= 1.0):
        raise ValueError(f"domain output {o} outside [0, 1]")
    return -math.log(max(o if z == 1 else 1.0 - o, PROB_CLAMP))


def predict(p: DannParams, x) -> int:
    f = forward_output(p, forward_hidden(p, x))
    return 1 if f[1] > f[0] else 0


def predict_batch(p: DannParams, data) -> np.ndarray:
    _, F, _ = forward_batch(p, data)
    return (F[:, 1] > F[:, 0]).astype(np.int64)


def risk(p: DannParams, data: LabeledSet) -> float:
    if len(data) == 0:
        raise DataError("risk of an empty set")
    return float(np.mean(predict_batch(p, data) != data.y))


def domain_accuracy(p: DannParams, source, target) -> float:
    """Fraction of points the regressor assigns to the right domain (source when o >= 0.5)."""
    _, _, Os = forward_batch(p, source)
    _, _, Ot = forward_batch(p, target)
    correct = np.count_nonzero(Os >= 0.5) + np.count_nonzero(Ot < 0.5)
    return correct / (len(Os) + len(Ot))


# ---------------------------------------------------------------- SGD

@dataclass
class Deltas:
    """Gradient pieces of one inner-loop iteration, dense, named as in the update rule."""

    c: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W: np.ndarray
    w: np.ndarray
    d: float


def compute_deltas(p: DannParams, xs, ys: int, xt=None, lam: float = 0.0,
                   mode: Mode = Mode.DANN) -> Deltas:
    """Straight numpy transcription of one inner-loop iteration (no update).

    The compiled kernel behind ``sgd_step`` is checked against this.
    """
    mode = Mode(mode)
    xs = _check_input(p, xs)
    if ys not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {ys}")
    h = sigm(p.b + matvec(p.W, xs))
    f = softmax(p.c + p.V @ h)
    e = np.zeros(2)
    e[ys] = 1.0
    d_c = -(e - f)
    d_V = np.outer(d_c, h)
    d_b = (p.V.T @ d_c) * h * (1 - h)
    d_W = outer(d_b, xs)
    d_d, d_w = 0.0, np.zeros(p.l)
    if mode is not Mode.NN_PLAIN:
        if xt is None:
            raise ValueError("a target example is required outside plain NN mode")
        xt = _check_input(p, xt)
        o_s = sigm(p.d + p.w @ h)
        d_d = lam * (1 - o_s)
        d_w = lam * (1 - o_s) * h
        tmp = lam * (1 - o_s) * p.w * h * (1 - h)
        if mode is Mode.DANN:
            d_b = d_b + tmp
            add_outer(d_W, 1.0, tmp, xs)
        ht = sigm(p.b + matvec(p.W, xt))
        o_t = sigm(p.d + p.w @ ht)
        d_d -= lam * o_t
        d_w = d_w - lam * o_t * ht
        tmp = -lam * o_t * p.w * ht * (1 - ht)
        if mode is Mode.DANN:
            d_b = d_b + tmp
            add_outer(d_W, 1.0, tmp, xt)
    return Deltas(d_c, d_V, d_b, d_W, d_w, float(d_d))


def apply_deltas(p: DannParams, dl: Deltas, alpha: float) -> DannParams:
    """Descent on {W, V, b, c}, ascent on {w, d}."""
    return DannParams(p.W - alpha * dl.W, p.b - alpha * dl.b, p.V - alpha * dl.V,
                      p.c - alpha * dl.c, p.w + alpha * dl.w, p.d + alpha * dl.d)


_BLOCK_NAMES = {K.BAD_W: "W", K.BAD_B: "b", K.BAD_V: "V", K.BAD_C: "c", K.BAD_W_DOM: "w", K.BAD_D: "d"}


def _mode_flags(cfg: TrainConfig) -> tuple[bool, bool]:
    return cfg.mode is not Mode.NN_PLAIN, cfg.mode is Mode.DANN


def sgd_step(p: DannParams, xs, ys: int, xt, cfg: TrainConfig, step_index: int = 0) -> DannParams:
    """Return the parameters after one source/target pair update."""
    xs = _check_input(p, xs)
    if ys not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {ys}")
    use_target, adversarial = _mode_flags(cfg)
    if use_target:
        if xt is None:
            raise ValueError("a target example is required outside plain NN mode")
        xt = _check_input(p, xt)
        xt_i, xt_v = xt.indices, xt.values
    else:
        xt_i, xt_v = np.empty(0, np.int64), np.empty(0)
    q = p.copy()
    d = np.array([q.d])
    l = p.l
    code = K.sgd_step_inplace(q.W, q.b, q.V, q.c, q.w, d, xs.indices, xs.values, int(ys), xt_i, xt_v,
                              use_target, adversarial, cfg.effective_lambda, cfg.learning_rate,
                              np.empty(l), np.empty(l), np.empty(l), np.empty(l))
    if code != K.OK:
        raise NumericalError(f"non-finite value in parameter block {_BLOCK_NAMES[code]} at step {step_index}")
    q.d = float(d[0])
    return q


def split_validation(m: int, val_fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of range(m); the last ``val_fraction`` share is the validation part."""
    if m < 2:
        raise DataError("need at least two source examples to hold out a validation set")
    n_val = min(max(1, int(round(m * val_fraction))), m - 1)
    perm = rng.permutation(m)
    return np.sort(perm[:m - n_val]), np.sort(perm[m - n_val:])


def train(S: LabeledSet, T: Optional[UnlabeledSet], cfg: TrainConfig,
          init: Optional[DannParams] = None, trace=None) -> tuple[DannParams, TrainReport]:
    """Early-stopped SGD.

    Random streams: derive(0) initialises weights, derive(1) splits off the
    validation set, derive(2) shuffles each epoch, derive(3) picks target
    examples.  ``trace``, if given, is called as ``trace(epoch, params)``
    after every epoch.
    """
    if len(S) == 0:
        raise DataError("empty source sample")
    use_target, adversarial = _mode_flags(cfg)
    if use_target:
        if T is None or len(T) == 0:
            raise DataError(f"mode {cfg.mode.value} needs a nonempty target sample")
        if T.dim != S.dim:
            raise DataError(f"source dim {S.dim} != target dim {T.dim}")
    root = Rng(cfg.seed)
    p = init.copy() if init is not None else DannParams.random_init(S.dim, cfg.hidden_size, root.derive(0))
    if p.n != S.dim:
        raise ShapeError(f"initial parameters expect dim {p.n}, data has {S.dim}")
    tr_idx, val_idx = split_validation(len(S), cfg.val_fraction, root.derive(1))
    S_val = S.subset(val_idx)
    order_rng, target_rng = root.derive(2), root.derive(3)

    s_ptr, s_idx, s_val = S.csr()
    if use_target:
        t_ptr, t_idx, t_val = T.csr()
        m_t = len(T)
    else:
        t_ptr, t_idx, t_val = np.zeros(1, np.int64), np.empty(0, np.int64), np.empty(0)
        m_t = 0
    d = np.array([p.d])
    lam, alpha = cfg.effective_lambda, cfg.learning_rate

    history: list[float] = []
    best, best_epoch, since = math.inf, 0, 0
    best_p = p.copy()
    stopped_early = False
    for epoch in range(1, cfg.max_epochs + 1):
        order = order_rng.generator.permutation(tr_idx) if cfg.shuffle else tr_idx
        tdraws = (target_rng.generator.integers(0, m_t, order.size) if use_target
                  else np.zeros(order.size, np.int64))
        code, pos = K.run_epoch(p.W, p.b, p.V, p.c, p.w, d, s_ptr, s_idx, s_val, S.y, order,
                                t_ptr, t_idx, t_val, tdraws, use_target, adversarial, lam, alpha)
        p.d = float(d[0])
        if code != K.OK:
            step = (epoch - 1) * order.size + pos
            raise NumericalError(
                f"non-finite value in parameter block {_BLOCK_NAMES[code]} at step {step} (epoch {epoch})")
        r = risk(p, S_val)
        history.append(r)
        if trace is not None:
            trace(epoch, p)
        if r < best or (cfg.keep_latest_on_tie and r == best):
            best, best_epoch, best_p = r, epoch, p.copy()
            since = 0
        else:
            since += 1
        if since >= cfg.patience:
            stopped_early = True
            break
    report = TrainReport(len(history), best_epoch, best, history, val_idx.tolist(), stopped_early, best_p)
    log.debug("trained %s: %d epochs, best val risk %.4f at epoch %d",
              cfg.mode.value, len(history), best, best_epoch)
    return best_p, report


# ---------------------------------------------------------------- serialization

def model_to_json(p: DannParams, cfg: Optional[TrainConfig] = None, report: Optional[TrainReport] = None) -> str:
    doc = p.to_dict()
    doc["config"] = cfg.to_dict() if cfg is not None else None
    doc["report"] = report.to_dict() if report is not None else None
    return json.dumps(doc)


def model_from_json(text: str) -> tuple[DannParams, Optional[TrainConfig], Optional[dict]]:
    doc = json.loads(text)
    cfg = TrainConfig(**doc["config"]) if doc.get("config") else None
    return DannParams.from_dict(doc), cfg, doc.get("report")
