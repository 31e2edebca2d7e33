"""Batch command-line surface: train, evaluate, explain, report.

Every command is driven by a plain-text config file plus a few override
flags, writes machine-readable outputs (checkpoint, CSV history, JSON
and CSV metric reports), and is idempotent given the same config and
seed: reruns produce byte-identical files, with wall-clock timestamps
confined to the run manifest.

Exit codes: 0 ok, 1 config error, 2 data error, 3 training abort,
4 checkpoint/manifest mismatch, 5 unknown user/item id.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import fit_lr_baseline
from .config import ConfigError, DataError, config_hash, load_config
from .data import FormatError, UnknownGenre, dataset_stats, parse_ml100k, parse_ml1m, split
from .evaluate import evaluate_model, random_report, surrogate_truth
from .kernels import NonFiniteGradient, get_backend
from .model import AspectMF
from .training import history_to_csv, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_TRAINING = 3
EXIT_CHECKPOINT = 4
EXIT_UNKNOWN_ID = 5


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _overrides_from_args(args) -> dict:
    ov = {}
    if args.seed is not None:
        ov["train.seed"] = args.seed
    if args.lam is not None:
        ov["train.lambda"] = args.lam
    if args.dim is not None:
        ov["model.dim"] = args.dim
    if args.attn_mode is not None:
        ov["model.attn_mode"] = args.attn_mode
    if args.mask_mode is not None:
        ov["model.mask_mode"] = args.mask_mode
    if args.no_shield:
        ov["train.shield"] = False
    return ov


def _load_dataset(cfg):
    ratings_path, items_path = cfg.dataset.resolve_paths()
    if cfg.dataset.name == "ml100k":
        return parse_ml100k(ratings_path, items_path)
    return parse_ml1m(ratings_path, items_path)


def cmd_train(config_path, overrides) -> int:
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        interactions, catalog = _load_dataset(cfg)
    except (DataError, FormatError, UnknownGenre, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA

    ds = split(interactions, cfg.dataset.fractions(), cfg.dataset.split_seed)
    try:
        model, history = train(
            ds, catalog, cfg.train,
            dim=cfg.model.dim,
            mask_mode=cfg.model.mask_mode,
            attn_mode=cfg.model.attn_mode,
            max_rating=cfg.dataset.max_rating,
        )
    except NonFiniteGradient as exc:
        _err(f"training aborted: {exc}")
        return EXIT_TRAINING

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    stats = dataset_stats(interactions, catalog)

    model.save(out / "checkpoint.npz", extra_meta={"config_hash": h})
    (out / "history.csv").write_text(history_to_csv(history), encoding="utf-8")
    backend, _ = get_backend(cfg.train.kernel)
    manifest = {
        "config": cfg.resolved(),
        "config_hash": h,
        "dataset_stats": stats,
        "seed": cfg.train.seed,
        "kernel_backend": backend,
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    last = history[-1]
    val = "n/a" if last.val_rmse is None else f"{last.val_rmse:.4f}"
    print(
        f"trained {cfg.dataset.name}: {len(history)} epochs, "
        f"final train rmse {last.loss.l_pred:.4f}, val rmse {val}; outputs in {out}"
    )
    return EXIT_OK


def cmd_evaluate(checkpoint_path, config_path, overrides) -> int:
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        model = AspectMF.load(checkpoint_path)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot load checkpoint {checkpoint_path}: {exc}")
        return EXIT_CHECKPOINT

    h = config_hash(cfg)
    stored = (model.loaded_meta or {}).get("extra", {}).get("config_hash")
    if stored != h:
        _err(
            "checkpoint/manifest mismatch: checkpoint was trained under config hash "
            f"{stored}, current config hashes to {h}"
        )
        return EXIT_CHECKPOINT

    try:
        interactions, catalog = _load_dataset(cfg)
    except (DataError, FormatError, UnknownGenre, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    if catalog.n_items != model.n_items or catalog.n_users != model.n_users:
        _err("checkpoint/manifest mismatch: dataset shape differs from the checkpoint")
        return EXIT_CHECKPOINT

    ds = split(interactions, cfg.dataset.fractions(), cfg.dataset.split_seed)
    truth = surrogate_truth(ds.train, catalog, cfg.dataset.max_rating)
    baseline = fit_lr_baseline(
        ds.train, catalog, ridge=cfg.eval.lr_ridge, max_rating=cfg.dataset.max_rating
    )

    pairs = cfg.eval.recall_pairs
    snapshot = cfg.resolved()
    reports = [
        evaluate_model(model, "amcf", truth, ds.test, catalog, pairs, snapshot),
        evaluate_model(baseline, "lr", truth, ds.test, catalog, pairs, snapshot),
        random_report(catalog.n_aspects, pairs, snapshot),
    ]

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "config_hash": h,
        "dataset_stats": dataset_stats(interactions, catalog),
        "reports": {r.model: r.to_dict() for r in reports},
    }
    (out / "eval_report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = reports[0].csv_header()
    writer.writerow(header)
    for r in reports:
        row = dict(zip(r.csv_header(), r.csv_row()))
        writer.writerow([row.get(col, "") for col in header])
    (out / "eval_report.csv").write_text(buf.getvalue(), encoding="utf-8")

    for r in reports:
        rm = "" if r.rmse is None else f" rmse={r.rmse:.4f}"
        met = " ".join(f"{k}={v:.3f}" for k, v in r.recalls.items())
        print(f"{r.model}:{rm} {met} score_s={r.score_s:.3f}")
    return EXIT_OK


def _l1_normalized(values: np.ndarray) -> np.ndarray:
    mass = np.abs(values).sum()
    return values / mass if mass > 0 else values


def cmd_explain(checkpoint_path, user_id, item_id=None) -> int:
    try:
        model = AspectMF.load(checkpoint_path)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot load checkpoint {checkpoint_path}: {exc}")
        return EXIT_CHECKPOINT
    catalog = model.catalog
    try:
        user = catalog.user_index(int(user_id))
    except KeyError:
        _err(f"unknown user id {user_id}")
        return EXIT_UNKNOWN_ID

    writer = csv.writer(sys.stdout, lineterminator="\n")
    names = catalog.aspect_names

    if item_id is None:
        values = _l1_normalized(model.general_preference(user).values)
        order = np.lexsort((np.arange(len(values)), -values))
        writer.writerow(["aspect", "value"])
        for k in order:
            writer.writerow([names[k], repr(float(values[k]))])
        return EXIT_OK

    try:
        item = catalog.item_index(int(item_id))
    except KeyError:
        _err(f"unknown item id {item_id}")
        return EXIT_UNKNOWN_ID
    values = _l1_normalized(model.specific_preference(user, item).values)
    declared = np.flatnonzero(catalog.item_aspects[item])
    if declared.size == 0:
        declared = np.arange(len(names))
    order = declared[np.lexsort((declared, -values[declared]))]
    writer.writerow(["aspect", "value"])
    for k in order:
        writer.writerow([names[k], repr(float(values[k]))])
    writer.writerow(["predicted_rating", repr(model.predict_rating(user, item, clamp=True))])
    return EXIT_OK


def cmd_report(inputs, output=None) -> int:
    rows = []
    header = None
    for path in inputs:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            _err(str(exc))
            return EXIT_DATA
        lines = list(csv.reader(io.StringIO(text)))
        if not lines:
            continue
        if header is None:
            header = lines[0]
        elif lines[0] != header:
            _err(f"{path}: column header differs from the first input")
            return EXIT_CONFIG
        rows.extend(lines[1:])
    if header is None:
        _err("no input rows")
        return EXIT_CONFIG

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if output:
        Path(output).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _add_override_flags(sub):
    sub.add_argument("--seed", type=int, default=None, help="override train.seed")
    sub.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="override the interpretation-loss weight")
    sub.add_argument("--dim", type=int, default=None, help="override model.dim")
    sub.add_argument("--attn-mode", choices=("softmax", "linear"), default=None)
    sub.add_argument("--mask-mode", choices=("masked", "unmasked"), default=None)
    sub.add_argument("--no-shield", action="store_true",
                     help="let the interpretation loss update item embeddings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aspectmf",
        description="Train and evaluate the aspect-projection recommender.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p_train = subs.add_parser("train", help="train a model from a config file")
    p_train.add_argument("config")
    _add_override_flags(p_train)

    p_eval = subs.add_parser("evaluate", help="score a checkpoint on the test split")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("config")
    _add_override_flags(p_eval)

    p_explain = subs.add_parser("explain", help="print preference explanations")
    p_explain.add_argument("checkpoint")
    p_explain.add_argument("user", type=int, help="original dataset user id")
    p_explain.add_argument("item", type=int, nargs="?", default=None,
                           help="original dataset item id (optional)")

    p_report = subs.add_parser("report", help="merge evaluation CSVs into one table")
    p_report.add_argument("inputs", nargs="+")
    p_report.add_argument("-o", "--output", default=None)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        return cmd_train(args.config, _overrides_from_args(args))
    if args.command == "evaluate":
        return cmd_evaluate(args.checkpoint, args.config, _overrides_from_args(args))
    if args.command == "explain":
        return cmd_explain(args.checkpoint, args.user, args.item)
    if args.command == "report":
        return cmd_report(args.inputs, args.output)
    raise AssertionError(f"unhandled command {args.command}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
