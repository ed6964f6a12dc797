"""Command-line front end: ``fairmatch {train,evaluate,audit,sweep,subsets}``.

Every command writes machine-readable files into ``--out`` (default
``$FAIRMATCH_OUT/<command>``, falling back to ``./runs/<command>``). Report
files depend only on the arguments and the seed; wall-clock data goes to
``meta.json``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audit import evaluate_model, prophecy_audit, subset_audit
from .data import PRESET_BATCH_SIZES, PRESETS, prepare, split
from .metrics import FairnessReport, format_csv
from .model import load_checkpoint, save_checkpoint
from .synthetic import uniform_pair_dataset, make_synthetic_classification
from .trainer import FTM_LAMBDA_GRID, REG_LAMBDA_GRID, TrainConfig, sweep, train

log = logging.getLogger("fairmatch")

OUT_ENV = "FAIRMATCH_OUT"
COMMANDS = ("train", "evaluate", "audit", "sweep", "subsets")


class CliError(Exception):
    """Configuration or data problem reported as a one-line message."""


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / args.command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory {out} is not writable")
    return out


def _write_meta(out: Path, args, argv) -> None:
    meta = {
        "command": args.command,
        "argv": list(argv),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "fairmatch_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    _write(out / "meta.json", dumps(meta))


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def _dataset_source(args) -> dict:
    src = args.dataset
    if src == "synthetic":
        return {"kind": "synthetic", "n": args.n, "d": args.d, "group_shift": args.group_shift,
                "label_gap": args.label_gap, "correlation": args.correlation, "label_rule": args.label_rule}
    if src == "uniform-pair":
        return {"kind": "uniform-pair", "n_per_group": args.n_per_group, "grid": not args.uniform}
    if src in PRESETS:
        raise CliError(f"--dataset {src}: pass the CSV path (e.g. --dataset {src}.csv --schema {src})")
    path = Path(src)
    if not path.is_file():
        raise CliError(f"--dataset {src!r}: not 'synthetic', 'uniform-pair' or an existing CSV file")
    schema = args.schema
    if schema is None:
        if path.stem.lower() in PRESETS:
            schema = path.stem.lower()
        else:
            raise CliError(f"--schema is required for {src} (a preset name or a YAML/JSON schema file)")
    return {"kind": "csv", "path": str(path), "schema": str(schema)}


def load_splits(args):
    """``(source description, train, test)``; uniform-pair data has no split (both are the full grid)."""
    source = _dataset_source(args)
    seed = args.seed
    if source["kind"] == "synthetic":
        data = make_synthetic_classification(
            n=source["n"], d=source["d"], group_shift=source["group_shift"], label_gap=source["label_gap"],
            correlation=source["correlation"], label_rule=source["label_rule"], seed=seed)
        train_data, test_data = split(data, args.split_ratio, seed)
    elif source["kind"] == "uniform-pair":
        data = uniform_pair_dataset(source["n_per_group"], grid=source["grid"], seed=seed)
        train_data = test_data = data
    else:
        try:
            train_data, test_data = prepare(source["path"], source["schema"], args.split_ratio, seed)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(str(exc)) from exc
        source["d"] = train_data.d
    source["n_train"], source["n_test"] = train_data.n, test_data.n
    return source, train_data, test_data


def _pick(args, train_data, test_data):
    return {"train": train_data, "test": test_data}[args.part]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _config(args) -> TrainConfig:
    batch = args.batch_size
    match = args.match_batch_size
    schema = args.schema or Path(args.dataset).stem.lower()
    if schema in PRESET_BATCH_SIZES:
        batch = batch or PRESET_BATCH_SIZES[schema]
        match = match or PRESET_BATCH_SIZES[schema]
    direction = args.source_direction if args.source_direction == "alternate" else int(args.source_direction)
    try:
        return TrainConfig(lam=args.lam, alpha=args.alpha, epochs=args.epochs, batch_size=batch or 1024,
                           match_batch_size=match or 1024, source_direction=direction, seed=args.seed,
                           lr=args.lr, lr_decay=args.lr_decay, method=args.method,
                           include_sensitive=not args.sensitive_blind, resample=args.resample)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _audit_m(args, data) -> int:
    sizes = [int(np.sum(data.s == g)) for g in (0, 1)]
    if min(sizes) == 0:
        raise CliError("evaluation data must contain both sensitive groups")
    return int(args.m) if args.m else min(1024, *sizes)


def cmd_train(args, out: Path) -> dict:
    source, train_data, test_data = load_splits(args)
    config = _config(args)
    log_path = out / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        params, history = train(train_data, config,
                                callback=lambda rec: fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n"))
    report = evaluate_model(params, test_data, m=_audit_m(args, test_data), num_batches=args.num_batches,
                            seed=args.seed)
    save_checkpoint(out / "checkpoint.json", params, {"config": config.to_dict(), "dataset": source})
    doc = {"command": "train", "dataset": source, "config": config.to_dict(), "report": report.to_dict(),
           "final_epoch": history[-1]}
    _write(out / "report.json", dumps(doc))
    return doc


def _load_model(spec):
    try:
        return load_checkpoint(spec)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {spec}: {exc}") from exc


def cmd_evaluate(args, out: Path) -> dict:
    source, train_data, test_data = load_splits(args)
    model = _load_model(args.checkpoint)
    data = _pick(args, train_data, test_data)
    report = evaluate_model(model, data, m=_audit_m(args, data), num_batches=args.num_batches, seed=args.seed)
    doc = {"command": "evaluate", "dataset": source, "checkpoint": str(args.checkpoint), "part": args.part,
           "report": report.to_dict()}
    _write(out / "report.json", dumps(doc))
    return doc


def cmd_audit(args, out: Path) -> dict:
    source, train_data, test_data = load_splits(args)
    model = _load_model(args.checkpoint)
    data = _pick(args, train_data, test_data)
    m = _audit_m(args, data)
    if args.num_batches < 1:
        raise CliError("--num-batches must be >= 1")
    report = evaluate_model(model, data, m=m, num_batches=args.num_batches, seed=args.seed)
    doc = {
        "command": "audit",
        "dataset": source,
        "checkpoint": str(args.checkpoint),
        "part": args.part,
        "m": m,
        "num_batches": args.num_batches,
        "seed": args.seed,
        "mdp": report.mdp,
        "transport_cost": report.transport_cost,
        "consistency": report.consistency,
        "report": report.to_dict(),
    }
    if args.unfair_checkpoint:
        doc["unfair_checkpoint"] = str(args.unfair_checkpoint)
        doc["prophecy"] = prophecy_audit(_load_model(args.unfair_checkpoint), model, data)
    _write(out / "audit.json", dumps(doc))
    return doc


def _lambda_grid(text: str):
    if text == "ftm":
        return list(FTM_LAMBDA_GRID)
    if text == "reg":
        return list(REG_LAMBDA_GRID)
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"--lambda-grid: {exc}") from exc
    if not grid:
        raise CliError("--lambda-grid is empty")
    return grid


def cmd_sweep(args, out: Path) -> dict:
    source, train_data, test_data = load_splits(args)
    base = _config(args)
    grid = _lambda_grid(args.lambda_grid)
    results = sweep(train_data, test_data, base, grid, jobs=args.jobs, audit_m=_audit_m(args, test_data),
                    audit_batches=args.num_batches)
    rows = [[repr(lam)] + report.csv_row() for lam, report, _, _ in results]
    _write(out / "tradeoff.csv", format_csv(("lambda",) + FairnessReport.CSV_COLUMNS, rows))
    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    points = []
    for lam, report, _, history in results:
        cfg = replace(base, lam=lam)
        doc = {"command": "sweep", "dataset": source, "config": cfg.to_dict(), "report": report.to_dict(),
               "final_epoch": history[-1]}
        _write(reports_dir / f"lambda_{lam:g}.json", dumps(doc))
        points.append({"lambda": lam, "report": report.to_dict()})
    doc = {"command": "sweep", "dataset": source, "config": base.to_dict(), "lambda_grid": sorted(grid),
           "points": points}
    _write(out / "sweep.json", dumps(doc))
    return doc


def cmd_subsets(args, out: Path) -> dict:
    source, train_data, test_data = load_splits(args)
    model = _load_model(args.checkpoint)
    data = _pick(args, train_data, test_data)
    rows, summary = subset_audit(model, data, args.num_subsets, args.seed)
    _write(out / "subsets.csv", format_csv(("subset_id", "size", "dp_bar"), [[k, n, repr(v)] for k, n, v in rows]))
    doc = {"command": "subsets", "dataset": source, "checkpoint": str(args.checkpoint), "part": args.part,
           "num_subsets": args.num_subsets, "seed": args.seed, "summary": summary}
    _write(out / "subsets_summary.json", dumps(doc))
    return doc


HANDLERS = {"train": cmd_train, "evaluate": cmd_evaluate, "audit": cmd_audit, "sweep": cmd_sweep,
            "subsets": cmd_subsets}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--dataset", default="synthetic",
                   help="'synthetic', 'uniform-pair' or a CSV path (default: synthetic)")
    g.add_argument("--schema", help=f"preset ({', '.join(sorted(PRESETS))}) or YAML/JSON schema file")
    g.add_argument("--split-ratio", type=float, default=0.8, help="train share of the split (default 0.8)")
    g.add_argument("--seed", type=int, default=0, help="single seed for every random stream")
    g.add_argument("--n", type=int, default=4000, help="synthetic: number of rows")
    g.add_argument("--d", type=int, default=5, help="synthetic: number of features")
    g.add_argument("--group-shift", type=float, default=1.5, help="synthetic: mean shift of group 1")
    g.add_argument("--label-gap", type=float, default=None, help="synthetic: label logit gap (default: shift)")
    g.add_argument("--correlation", type=float, default=0.97, help="synthetic: pairwise feature correlation")
    g.add_argument("--label-rule", choices=("logistic", "threshold"), default="logistic")
    g.add_argument("--n-per-group", type=int, default=512, help="uniform-pair: points per group")
    g.add_argument("--uniform", action="store_true", help="uniform-pair: uniform draws instead of the grid")
    g.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command> or runs/<command>)")


def _train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--method", choices=("ftm", "reg", "unfair"), default="ftm")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="penalty weight")
    g.add_argument("--alpha", type=float, default=0.0, help="label weight of the matching cost (0 = inputs only)")
    g.add_argument("--epochs", type=int, default=200)
    g.add_argument("--batch-size", type=int, default=None, help="loss batch size (default 1024 or preset)")
    g.add_argument("--match-batch-size", type=int, default=None,
                   help="per-group matching batch size (default 1024 or preset)")
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--lr-decay", type=float, default=0.95)
    g.add_argument("--source-direction", choices=("alternate", "0", "1"), default="alternate")
    g.add_argument("--resample", choices=("step", "epoch"), default="step")
    g.add_argument("--sensitive-blind", action="store_true", help="do not feed s to the network")


def _audit_args(p, batches_default):
    p.add_argument("--m", type=int, default=None, help="per-group audit batch size (default min(1024, groups))")
    p.add_argument("--num-batches", type=int, default=batches_default, help="audit batch pairs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairmatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairmatch {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model, write checkpoint, report and log")
    _data_args(p)
    _train_args(p)
    _audit_args(p, 10)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    _data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--part", choices=("train", "test"), default="test")
    _audit_args(p, 10)

    p = sub.add_parser("audit", help="fair matching audit of a checkpoint")
    _data_args(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file, or uniform-pair:hat / uniform-pair:tilde")
    p.add_argument("--unfair-checkpoint", help="reference model for rank correlation and flip counts")
    p.add_argument("--part", choices=("train", "test"), default="test")
    _audit_args(p, 100)

    p = sub.add_parser("sweep", help="train over a lambda grid and write a trade-off table")
    _data_args(p)
    _train_args(p)
    p.add_argument("--lambda-grid", default="ftm", help="comma list, or 'ftm' / 'reg' for the standard grids")
    p.add_argument("--jobs", type=int, default=1, help="parallel training jobs")
    _audit_args(p, 10)

    p = sub.add_parser("subsets", help="mean-score gaps on random half-space subsets")
    _data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--part", choices=("train", "test"), default="test")
    p.add_argument("--num-subsets", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) < 1:
            raise CliError("--jobs must be >= 1")
        out = _out_dir(args)
        HANDLERS[args.command](args, out)
        _write_meta(out, args, argv)
    except CliError as exc:
        print(f"fairmatch {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"fairmatch {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
