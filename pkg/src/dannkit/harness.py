"""Experiment orchestration: grid search with target-validation selection,
result tables and PAD sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .datasets import (DataError, LabeledSet, MoonsConfig, Task, load_sparse, make_task, moons_task,
                       shifted_sparse_task)
from .divergence import DEFAULT_C_GRID, PadReport, compute_pad, pad_on_representation
from .msda import msda_fit, transform_set
from .net import Mode, NumericalError, TrainConfig, risk, train
from .svm import svm_error, svm_train
from .tensor import Rng

log = logging.getLogger(__name__)

LAMBDA_GRID = tuple(float(v) for v in np.logspace(-2, 0, 9))
HIDDEN_GRID = (1, 5, 12, 25, 50, 75, 100, 150, 200)
ALPHA_RAW = 1e-3
ALPHA_MSDA = 1e-4
PAD_HIDDEN = 100
PAD_LAMBDA = 0.31

ALGORITHMS = ("dann", "nn", "svm")
REPRESENTATIONS = ("raw", "msda")
TABLE_COLUMNS = ["task", "algo", "repr", "l", "lambda", "C", "val_risk", "test_risk", "seed"]
CELL_COLUMNS = ["task", "algo", "repr", "seed", "l", "lambda", "C", "val_risk", "status"]
PAD_COLUMNS = ["representation_tag", "task", "pad", "epsilon", "seed"]


@dataclass
class ExperimentConfig:
    """One experiment.  ``tasks`` entries are dicts with a ``kind`` of
    ``moons`` (MoonsConfig fields), ``sparse`` (``source``/``target`` file
    paths plus optional m, m_prime, val_target) or ``shifted`` (the
    synthetic sparse pair)."""

    tasks: list = field(default_factory=lambda: [{"kind": "moons"}])
    algorithm: str = "dann"
    representation: str = "raw"
    lambda_grid: list = field(default_factory=lambda: list(LAMBDA_GRID))
    hidden_grid: list = field(default_factory=lambda: list(HIDDEN_GRID))
    C_grid: list = field(default_factory=lambda: list(DEFAULT_C_GRID))
    alpha: Optional[float] = None
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "out"
    max_epochs: int = 500
    patience: int = 10
    svm_epochs: int = 50
    msda_p: float = 0.5
    msda_layers: int = 5
    msda_top_features: Optional[int] = None
    pad_msda: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}, got {self.representation!r}")
        for name in ("lambda_grid", "hidden_grid", "C_grid", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")
        if any(v < 0 for v in self.lambda_grid) or any(int(v) < 1 for v in self.hidden_grid):
            raise ValueError("lambda values must be >= 0 and hidden sizes >= 1")
        if any(not c > 0 for c in self.C_grid):
            raise ValueError("C values must be positive")
        if self.alpha is None:
            self.alpha = ALPHA_MSDA if self.representation == "msda" else ALPHA_RAW
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for t in self.tasks:
            if t.get("kind") not in ("moons", "sparse", "shifted"):
                raise ValueError(f"unknown task kind in {t}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ResultRow:
    task: str
    algo: str
    repr: str
    l: Optional[int]
    lam: Optional[float]
    C: Optional[float]
    val_risk: float
    test_risk: float
    seed: int

    def __post_init__(self):
        for r in (self.val_risk, self.test_risk):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"risk {r} outside [0, 1]")

    def cells(self) -> list:
        def fmt(v):
            return "" if v is None else repr(v)
        return [self.task, self.algo, self.repr, fmt(self.l), fmt(self.lam), fmt(self.C),
                repr(self.val_risk), repr(self.test_risk), self.seed]


@dataclass(frozen=True)
class CellRecord:
    task: str
    algo: str
    repr: str
    seed: int
    l: Optional[int]
    lam: Optional[float]
    C: Optional[float]
    val_risk: float
    status: str


# ---------------------------------------------------------------- task resolution

def _task_name(spec: dict) -> str:
    if "name" in spec:
        return spec["name"]
    if spec["kind"] == "sparse":
        return f"{Path(spec['source']).stem} → {Path(spec['target']).stem}"
    return spec["kind"]


def resolve_task(spec: dict, seed: int) -> Task:
    """Materialize a task description for one seed."""
    kind = spec["kind"]
    extra = {k: v for k, v in spec.items() if k not in ("kind", "name")}
    if kind == "moons":
        val = extra.pop("val_target", 100)
        extra.setdefault("seed", seed)
        task = moons_task(MoonsConfig(**extra), val_target=val)
    elif kind == "shifted":
        task = shifted_sparse_task(seed=seed, **extra)
    else:
        for key in ("source", "target"):
            if key not in spec:
                raise DataError(f"sparse task needs a {key!r} path")
            if not Path(spec[key]).exists():
                raise DataError(f"missing data file {spec[key]}")
        src, tgt = load_sparse(spec["source"]), load_sparse(spec["target"])
        if not (isinstance(src, LabeledSet) and isinstance(tgt, LabeledSet)):
            raise DataError("sparse task files must be fully labeled")
        dim = max(src.dim, tgt.dim)
        if src.dim != tgt.dim:
            src, tgt = load_sparse(spec["source"], dim), load_sparse(spec["target"], dim)
        task = make_task(src, tgt, spec.get("m", 2000), spec.get("m_prime", 2000),
                         spec.get("val_target", 100), seed=seed)
    task.name = _task_name(spec)
    return task


def apply_msda(task: Task, cfg: ExperimentConfig) -> Task:
    """Fit mSDA on S and T together and map every split through it."""
    model = msda_fit(sp.vstack([task.S.X, task.T.X], format="csr"), cfg.msda_p, cfg.msda_layers,
                     top_features=cfg.msda_top_features)
    return Task(task.name, transform_set(model, task.S), transform_set(model, task.T),
                transform_set(model, task.target_val), transform_set(model, task.target_test), task.indices)


def cell_seed(master: int, *path: int) -> int:
    """Per-cell seed from the master seed by the derive rule."""
    rng = Rng(master)
    for k in path:
        rng = rng.derive(k)
    return int(rng.generator.integers(0, 2 ** 63 - 1))


# ---------------------------------------------------------------- grid search

def _cells(cfg: ExperimentConfig) -> list[tuple]:
    if cfg.algorithm == "svm":
        return [(None, None, float(C)) for C in sorted(cfg.C_grid)]
    hidden = sorted(int(h) for h in cfg.hidden_grid)
    if cfg.algorithm == "nn":
        return [(h, 0.0, None) for h in hidden]
    return [(h, float(lam), None) for h in hidden for lam in sorted(cfg.lambda_grid)]


def _run_cell(task: Task, cfg: ExperimentConfig, cell: tuple, seed: int):
    """Train one cell; returns (validation risk, test-risk thunk)."""
    l, lam, C = cell
    if cfg.algorithm == "svm":
        model = svm_train(task.S, C, cfg.svm_epochs, seed=seed)
        return svm_error(model, task.target_val), lambda: svm_error(model, task.target_test)
    mode = Mode.NN_PLAIN if cfg.algorithm == "nn" else Mode.DANN
    tc = TrainConfig(hidden_size=l, lam=lam, learning_rate=cfg.alpha, seed=seed, mode=mode,
                     max_epochs=cfg.max_epochs, patience=cfg.patience)
    p, _ = train(task.S, task.T if mode is not Mode.NN_PLAIN else None, tc)
    return risk(p, task.target_val), lambda: risk(p, task.target_test)


def select_cell(records: list) -> int:
    """Index of the minimum validation risk; ties go to smaller l, then smaller lambda (then smaller C)."""
    ok = [i for i, r in enumerate(records) if r is not None]
    if not ok:
        raise NumericalError("every grid cell failed")

    def key(i):
        r, (l, lam, C) = records[i]
        return (r, l if l is not None else 0, lam if lam is not None else 0.0, C if C is not None else 0.0)
    return min(ok, key=key)


def run_grid(cfg: ExperimentConfig, jobs: int = 1, cell_log: Optional[list] = None) -> list[ResultRow]:
    """Every (task, seed) pair yields one ResultRow for the selected cell."""
    rows = []
    cells = _cells(cfg)
    for ti, spec in enumerate(cfg.tasks):
        for seed in cfg.seeds:
            task = resolve_task(spec, seed)
            if cfg.representation == "msda":
                task = apply_msda(task, cfg)

            def one(ci):
                s = cell_seed(seed, ti, ci)
                try:
                    return _run_cell(task, cfg, cells[ci], s)
                except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
                    log.warning("grid cell %s on %s (seed %d) failed: %s", cells[ci], task.name, seed, exc)
                    return None

            if jobs > 1:
                with ThreadPoolExecutor(jobs) as ex:
                    outs = list(ex.map(one, range(len(cells))))
            else:
                outs = [one(ci) for ci in range(len(cells))]
            records = [None if o is None else (o[0], cells[ci]) for ci, o in enumerate(outs)]
            if cell_log is not None:
                for ci, o in enumerate(outs):
                    l, lam, C = cells[ci]
                    cell_log.append(CellRecord(task.name, cfg.algorithm, cfg.representation, seed, l, lam, C,
                                               math.nan if o is None else o[0], "failed" if o is None else "ok"))
            best = select_cell(records)
            l, lam, C = cells[best]
            rows.append(ResultRow(task.name, cfg.algorithm, cfg.representation, l, lam, C,
                                  outs[best][0], outs[best][1](), seed))
    return rows


# ---------------------------------------------------------------- tables

def emit_table(rows: list[ResultRow]) -> tuple[str, str]:
    """(aligned text table, CSV) with rows sorted by (task, algo, repr, seed)."""
    rows = sorted(rows, key=lambda r: (r.task, r.algo, r.repr, r.seed))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(TABLE_COLUMNS)
    for r in rows:
        wr.writerow(r.cells())
    text_rows = [TABLE_COLUMNS] + [
        [r.task, r.algo, r.repr, "" if r.l is None else str(r.l), "" if r.lam is None else f"{r.lam:.4g}",
         "" if r.C is None else f"{r.C:.4g}", f"{r.val_risk:.3f}", f"{r.test_risk:.3f}", str(r.seed)]
        for r in rows]
    widths = [max(len(row[k]) for row in text_rows) for k in range(len(TABLE_COLUMNS))]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in text_rows) + "\n"
    return text, buf.getvalue()


def read_table(text: str) -> list[ResultRow]:
    rd = csv.reader(io.StringIO(text))
    header = next(rd, None)
    if header != TABLE_COLUMNS:
        raise DataError(f"unexpected results header {header}")

    def opt(v, cast):
        return None if v == "" else cast(v)
    return [ResultRow(t, a, rp, opt(l, int), opt(lam, float), opt(C, float), float(v), float(te), int(s))
            for t, a, rp, l, lam, C, v, te, s in rd]


def write_cells_csv(path, cells: list[CellRecord]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CELL_COLUMNS)
        for c in cells:
            wr.writerow([c.task, c.algo, c.repr, c.seed, "" if c.l is None else c.l,
                         "" if c.lam is None else repr(c.lam), "" if c.C is None else repr(c.C),
                         repr(c.val_risk), c.status])


# ---------------------------------------------------------------- PAD sweep

def run_pad_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[tuple[str, int, PadReport]]:
    """PAD on raw inputs and on the hidden layer of a 100-unit NN and DANN
    (lambda 0.31); with ``pad_msda`` also on mSDA features and DANN over them."""
    out = []
    for ti, spec in enumerate(cfg.tasks):
        for seed in cfg.seeds:
            task = resolve_task(spec, seed)
            pad_seed = cell_seed(seed, ti, 1000)
            variants = [("", task, cfg.alpha if cfg.representation == "raw" else ALPHA_RAW)]
            if cfg.pad_msda:
                variants.append(("msda", apply_msda(task, cfg), ALPHA_MSDA))
            for vi, (prefix, tk, alpha) in enumerate(variants):
                out.append((task.name, seed, compute_pad(tk.S, tk.T, cfg.C_grid, pad_seed, cfg.svm_epochs,
                                                         representation_tag=prefix or "raw", jobs=jobs)))
                models = [("nn", Mode.NN_PLAIN, 0.0), ("dann", Mode.DANN, PAD_LAMBDA)]
                if prefix:
                    models = models[1:]
                for name, mode, lam in models:
                    tc = TrainConfig(hidden_size=PAD_HIDDEN, lam=lam, learning_rate=alpha,
                                     seed=cell_seed(seed, ti, 2000 + 10 * vi + (mode is Mode.DANN)),
                                     mode=mode, max_epochs=cfg.max_epochs, patience=cfg.patience)
                    p, _ = train(tk.S, tk.T if mode is Mode.DANN else None, tc)
                    tag = f"{prefix}+{name}" if prefix else name
                    out.append((task.name, seed, pad_on_representation(p, tk.S, tk.T, cfg.C_grid, pad_seed,
                                                                       cfg.svm_epochs, tag, jobs)))
    return out


def pad_csv(reports: list[tuple[str, int, PadReport]]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(PAD_COLUMNS)
    for task, seed, rep in reports:
        wr.writerow([rep.representation_tag, task, repr(rep.pad_value), repr(rep.best_epsilon), seed])
    return buf.getvalue()
