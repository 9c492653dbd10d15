"""Command-line entry point.

Output files and their CSV headers:
  results.csv        task,algo,repr,l,lambda,C,val_risk,test_risk,seed
  cells.csv          task,algo,repr,seed,l,lambda,C,val_risk,status
  pad.csv            representation_tag,task,pad,epsilon,seed
  grids/label.csv    x,y,value   (value = probability of class 1)
  grids/domain.csv   x,y,value   (value = domain regressor output, >= 0.5 means source)
  pca.csv            pc1,pc2,domain,label
  levelsets.csv      neuron_id,a,b,c,degenerate  (neuron is 1/2 on a*x1 + b*x2 + c = 0)
  moons.csv          x1,x2,label,domain
  model.json         network parameters, training config and report
  config.resolved.json

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import analysis
from .datasets import DataError, LabeledSet, MoonsConfig, load_sparse, moons_task, save_sparse, write_moons_csv
from .divergence import DEFAULT_C_GRID, compute_pad, pad_on_representation
from .harness import (ExperimentConfig, ResultRow, emit_table, pad_csv, read_table, run_grid, run_pad_sweep,
                      write_cells_csv)
from .msda import MsdaModel, msda_fit, transform_set
from .net import Mode, NumericalError, TrainConfig, model_from_json, model_to_json, risk, train
from .tensor import ShapeError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

MOONS_DEFAULTS = {"lambda": 6.0, "hidden": 15, "alpha": 1e-3, "mode": "dann", "max_epochs": 500,
                  "patience": 10, "steps": 300, "C_grid": list(DEFAULT_C_GRID), "moons": {}}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _single(values, flag):
    if values is None:
        return None
    if len(values) != 1:
        raise UsageError(f"{flag} takes a single value for this command")
    return values[0]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; flags override its fields")
    common.add_argument("--seed", type=_u64, help="master seed (u64)")
    common.add_argument("--jobs", type=int, default=1, help="concurrent grid cells / SVMs")
    common.add_argument("--out", help="output directory")
    common.add_argument("--lambda", dest="lam", type=_floats, help="adaptation weight (comma list for grid)")
    common.add_argument("--hidden", type=_ints, help="hidden layer size (comma list for grid)")
    common.add_argument("--alpha", type=float, help="learning rate")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="training mode")
    common.add_argument("--repr", choices=["raw", "msda"], help="input representation")
    common.add_argument("--seeds", type=_ints, help="comma list of seeds (grid, pad)")
    common.add_argument("--max-epochs", type=int, help="epoch cap for SGD")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="dannkit", description="Domain-adversarial training toolkit.",
                 formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("moons", parents=[common], help="full two-moons pipeline (train, surfaces, PCA, PAD)") \
        .add_argument("--steps", type=int, help="grid resolution per axis (default 300)")

    p = sub.add_parser("train", parents=[common], help="train on sparse source/target files")
    p.add_argument("--source", required=True)
    p.add_argument("--target", help="unlabeled (or labeled) target file; needed unless --mode nn")

    p = sub.add_parser("eval", parents=[common], help="risk of a saved model on a labeled file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("pad", parents=[common], help="Proxy A-distance between two samples or a PAD sweep")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--model", help="measure on this model's hidden layer")
    p.add_argument("--C", dest="C_grid", type=_floats, help="comma list of SVM C values")

    p = sub.add_parser("msda-fit", parents=[common], help="fit mSDA on source and target rows")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--noise", type=float, default=0.5, help="corruption probability")
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--top-features", type=int)

    p = sub.add_parser("msda-transform", parents=[common], help="map a sparse file through a fitted mSDA")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("grid", parents=[common], help="grid search with target-validation selection")
    p.add_argument("--algo", choices=["dann", "nn", "svm"])
    p.add_argument("--C", dest="C_grid", type=_floats)

    p = sub.add_parser("table", parents=[common], help="merge results.csv files into one table")
    p.add_argument("results", nargs="+")
    return ap


def _out_dir(args, default="out") -> Path:
    d = Path(args.out or default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"missing file {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_data(path, dim=None):
    if not Path(path).exists():
        raise DataError(f"missing data file {path}")
    return load_sparse(path, dim)


# ---------------------------------------------------------------- commands

def cmd_moons(args) -> int:
    conf = dict(MOONS_DEFAULTS)
    if args.config:
        extra = _load_json(args.config)
        unknown = set(extra) - set(conf) - {"seed"}
        if unknown:
            raise UsageError(f"unknown moons config fields: {sorted(unknown)}")
        conf.update(extra)
    conf["seed"] = conf.get("seed", 0)
    for key, val in (("seed", args.seed), ("lambda", _single(args.lam, "--lambda")),
                     ("hidden", _single(args.hidden, "--hidden")), ("alpha", args.alpha), ("mode", args.mode),
                     ("max_epochs", args.max_epochs), ("steps", args.steps)):
        if val is not None:
            conf[key] = val
    out = _out_dir(args)
    mcfg = MoonsConfig(**{**conf["moons"], "seed": conf["seed"]})
    conf["moons"] = asdict(mcfg)
    _write_json(out / "config.resolved.json", conf)

    task = moons_task(mcfg)
    S, T, T_truth = task.S, task.T, task.target_test
    write_moons_csv(out / "moons.csv", S, T_truth)
    tc = TrainConfig(hidden_size=conf["hidden"], lam=conf["lambda"], learning_rate=conf["alpha"],
                     seed=conf["seed"], mode=Mode(conf["mode"]), max_epochs=conf["max_epochs"],
                     patience=conf["patience"])
    p, report = train(S, T, tc)
    (out / "model.json").write_text(model_to_json(p, tc, report) + "\n")

    region = analysis.bounding_region(S, T_truth)
    grids = out / "grids"
    grids.mkdir(exist_ok=True)
    analysis.write_grid_csv(grids / "label.csv", analysis.label_boundary_grid(p, region, conf["steps"]))
    analysis.write_grid_csv(grids / "domain.csv", analysis.domain_boundary_grid(p, region, conf["steps"]))
    analysis.write_pca_csv(out / "pca.csv", analysis.pca_embed(p, S, T_truth))
    analysis.write_levelsets_csv(out / "levelsets.csv", analysis.hidden_level_sets(p))

    pads = [("moons", conf["seed"], compute_pad(S, T, conf["C_grid"], conf["seed"], jobs=args.jobs)),
            ("moons", conf["seed"], pad_on_representation(p, S, T, conf["C_grid"], conf["seed"],
                                                          tag=tc.mode.value, jobs=args.jobs))]
    (out / "pad.csv").write_text(pad_csv(pads))
    row = ResultRow("moons", tc.mode.value, "raw", tc.hidden_size, tc.lam, None,
                    risk(p, task.target_val), risk(p, T_truth), conf["seed"])
    text, csv_text = emit_table([row])
    (out / "results.csv").write_text(csv_text)
    print(text, end="")
    return EXIT_OK


def _train_config_from(args) -> TrainConfig:
    base = _load_json(args.config) if args.config else {}
    try:
        tc = TrainConfig(**base)
    except TypeError as exc:
        raise UsageError(f"bad train config: {exc}")
    over = {}
    for key, val in (("seed", args.seed), ("lam", _single(args.lam, "--lambda")),
                     ("hidden_size", _single(args.hidden, "--hidden")), ("learning_rate", args.alpha),
                     ("max_epochs", args.max_epochs)):
        if val is not None:
            over[key] = val
    if args.mode is not None:
        over["mode"] = Mode(args.mode)
    return replace(tc, **over)


def cmd_train(args) -> int:
    tc = _train_config_from(args)
    S = _load_data(args.source)
    if not isinstance(S, LabeledSet):
        raise DataError(f"{args.source}: source rows must all be labeled")
    T = None
    if args.target:
        T = _load_data(args.target, S.dim)
        if isinstance(T, LabeledSet):
            T = T.unlabeled()
    elif tc.mode is not Mode.NN_PLAIN:
        raise UsageError(f"--target is required for mode {tc.mode.value}")
    out = _out_dir(args)
    _write_json(out / "config.resolved.json", {"train": tc.to_dict(), "source": args.source,
                                               "target": args.target})
    p, report = train(S, T, tc)
    (out / "model.json").write_text(model_to_json(p, tc, report) + "\n")
    print(json.dumps({"epochs": report.epochs_run, "best_epoch": report.best_epoch,
                      "val_risk": report.best_val_risk}))
    return EXIT_OK


def cmd_eval(args) -> int:
    p, _, _ = model_from_json(Path(args.model).read_text()) if Path(args.model).exists() else (None, None, None)
    if p is None:
        raise DataError(f"missing model file {args.model}")
    data = _load_data(args.data, p.n)
    if not isinstance(data, LabeledSet):
        raise DataError(f"{args.data}: evaluation needs labeled rows")
    result = {"risk": risk(p, data), "n": len(data)}
    if args.out:
        _write_json(_out_dir(args) / "eval.json", result)
    print(json.dumps(result))
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    base = _load_json(args.config) if args.config else {}
    over = {"lam": "lambda_grid", "hidden": "hidden_grid", "alpha": "alpha", "repr": "representation",
            "seeds": "seeds", "max_epochs": "max_epochs", "C_grid": "C_grid", "algo": "algorithm"}
    for flag, key in over.items():
        val = getattr(args, flag, None)
        if val is not None:
            base[key] = val
    if args.seed is not None:
        base["seeds"] = [args.seed]
    if args.out:
        base["output_dir"] = args.out
    try:
        return ExperimentConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


def cmd_pad(args) -> int:
    if args.source or args.target:
        if not (args.source and args.target):
            raise UsageError("pad needs both --source and --target")
        S = _load_data(args.source)
        T = _load_data(args.target, S.dim)
        grid = args.C_grid or list(DEFAULT_C_GRID)
        seed = args.seed or 0
        if args.model:
            p, _, _ = model_from_json(Path(args.model).read_text())
            rep = pad_on_representation(p, S, T, grid, seed, jobs=args.jobs)
        else:
            rep = compute_pad(S, T, grid, seed, jobs=args.jobs)
        reports = [(f"{Path(args.source).stem} → {Path(args.target).stem}", seed, rep)]
        out = _out_dir(args)
    else:
        cfg = _experiment_config(args)
        out = _out_dir(args, cfg.output_dir)
        _write_json(out / "config.resolved.json", cfg.to_dict())
        reports = run_pad_sweep(cfg, jobs=args.jobs)
    text = pad_csv(reports)
    (out / "pad.csv").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_msda_fit(args) -> int:
    S = _load_data(args.source)
    T = _load_data(args.target, S.dim)
    m = msda_fit(sp.vstack([S.X, T.X], format="csr"), args.noise, args.layers, top_features=args.top_features)
    out = _out_dir(args)
    (out / "msda.json").write_text(m.to_json() + "\n")
    print(json.dumps({"input_dim": m.input_dim, "output_dim": m.output_dim, "layers": m.num_layers}))
    return EXIT_OK


def cmd_msda_transform(args) -> int:
    if not Path(args.model).exists():
        raise DataError(f"missing model file {args.model}")
    m = MsdaModel.from_json(Path(args.model).read_text())
    data = _load_data(args.data, m.input_dim)
    out = _out_dir(args)
    dest = out / (Path(args.data).stem + ".msda.txt")
    save_sparse(transform_set(m, data), dest)
    print(str(dest))
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(args, cfg.output_dir)
    _write_json(out / "config.resolved.json", cfg.to_dict())
    cells = []
    rows = run_grid(cfg, jobs=args.jobs, cell_log=cells)
    write_cells_csv(out / "cells.csv", cells)
    text, csv_text = emit_table(rows)
    (out / "results.csv").write_text(csv_text)
    print(text, end="")
    return EXIT_OK


def cmd_table(args) -> int:
    rows = []
    for path in args.results:
        if not Path(path).exists():
            raise DataError(f"missing results file {path}")
        rows.extend(read_table(Path(path).read_text()))
    text, csv_text = emit_table(rows)
    if args.out:
        (_out_dir(args) / "results.csv").write_text(csv_text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"moons": cmd_moons, "train": cmd_train, "eval": cmd_eval, "pad": cmd_pad,
            "msda-fit": cmd_msda_fit, "msda-transform": cmd_msda_transform, "grid": cmd_grid,
            "table": cmd_table}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dannkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as exc:
        print(f"dannkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"dannkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"dannkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
