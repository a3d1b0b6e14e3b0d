"""Command-line surface: train, score, eval, verify, and synth.

Exit codes are standardized for harness scripting: 0 ok, 2 usage or config
error (including unknown keys and suite names), 3 data error (unreadable
files, dimension or length mismatches, bad checkpoints), 4 numeric failure
(training divergence, degenerate score statistics, failed verification).

Every run directory gets the fully resolved config echoed next to its
outputs, and figures are rendered alongside the delimited files.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import report
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config, render
from .data import DataError, feature_stats, load_csv, make_windows, \
    standardize, write_csv
from .evaluate import ThresholdPolicy, apply_threshold, evaluate, point_adjust
from .losses import LossBreakdown, margin_batch_floor
from .model import init_model
from .scoring import DegenerateStatsError, score_series
from .ssm import DivergedScanError
from .synth import ANOMALY_KINDS, BASE_KINDS, AnomalySpec, synth_benchmark
from .training import TrainingDiverged, train_model
from .verify import SUITE_NAMES, run_suite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _out_dir(args) -> str:
    path = args.out or "."
    os.makedirs(path, exist_ok=True)
    return path


def _write_history(history: list[LossBreakdown], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("step",) + LossBreakdown.FIELDS)
        for h in history:
            writer.writerow([h.step] + [repr(getattr(h, f))
                                        for f in LossBreakdown.FIELDS])


def _require(value: str, what: str) -> str:
    if not value:
        raise ConfigError(f"missing {what}")
    return value


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.data:
        cfg.data.train_path = args.data
    path = _require(cfg.data.train_path, "training data (--data or data.train_path)")

    series = load_csv(path)
    if cfg.model.d_in == 0:
        cfg.model.d_in = series.width
    elif cfg.model.d_in != series.width:
        raise DataError(
            f"config expects {cfg.model.d_in} features, {path} has {series.width}"
        )
    head = int(round(series.length * cfg.data.split))
    values = series.values[:head]
    mean, std = feature_stats(values)
    windows = make_windows(standardize(values, mean, std), cfg.model.window,
                           cfg.data.stride or cfg.model.window)
    if cfg.loss.w_margin > 0.0 and cfg.loss.epochs > 0:
        batch = min(cfg.loss.batch_size, windows.shape[0])
        floor = margin_batch_floor(cfg.loss.top_pct, cfg.loss.bottom_pct)
        if batch < floor:
            raise ConfigError(
                f"margin needs batches of >= {floor} windows at "
                f"p={cfg.loss.top_pct}%, q={cfg.loss.bottom_pct}%, got {batch}; "
                "raise loss.batch_size, widen the percentiles, or set "
                "loss.w_margin = 0"
            )

    model = init_model(cfg.model, cfg.seed)
    model.norm_mean, model.norm_std = mean, std
    history = train_model(model, windows, cfg.loss, seed=cfg.seed)

    out = _out_dir(args)
    ck_path = os.path.join(out, "checkpoint.bin")
    save_checkpoint(ck_path, model, cfg, step=len(history))
    _write_history(history, os.path.join(out, "loss_history.csv"))
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(render(cfg))
    if history:
        report.loss_curves(history, os.path.join(out, "loss_curves.png"))
        print(f"train: {windows.shape[0]} windows of {cfg.model.window}, "
              f"{len(history)} steps, final loss {history[-1].total:.6f}")
    else:
        print(f"train: {windows.shape[0]} windows of {cfg.model.window}, "
              "0 steps (epochs = 0), checkpoint is the initialization")
    print(f"train: wrote {ck_path}")
    return EXIT_OK


def cmd_score(args) -> int:
    loaded = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    cfg = loaded.config
    model = loaded.model
    path = _require(args.data or cfg.data.eval_path,
                    "data to score (--data or data.eval_path)")
    series = load_csv(path)
    if series.width != cfg.model.d_in:
        raise DataError(
            f"checkpoint expects {cfg.model.d_in} features, {path} has {series.width}"
        )
    if model.norm_mean is None:
        raise CheckpointError("checkpoint lacks feature statistics")
    values = standardize(series.values, model.norm_mean, model.norm_std)
    try:
        result = score_series(model, values, cfg.score, cfg.model.window)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    out = _out_dir(args)
    scores_path = os.path.join(out, "scores.csv")
    with open(scores_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t", "locality", "energy", "hfr", "fused"))
        for t in range(result.coverage):
            writer.writerow([t] + [repr(float(col[t])) for col in
                                   (result.locality, result.energy,
                                    result.hfr, result.fused)])
    labels = series.labels[:result.coverage] if series.labels is not None else None
    report.score_timeline(result.fused, os.path.join(out, "score_timeline.png"),
                          labels=labels)
    print(f"score: {result.coverage} of {series.length} timesteps covered "
          f"({series.length - result.coverage} tail steps below one window)")
    print(f"score: wrote {scores_path}")
    return EXIT_OK


def _read_scores(path: str) -> np.ndarray:
    try:
        with open(path, "r", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "fused" not in reader.fieldnames:
                raise DataError(f"{path}: expected a scores file with a fused column")
            try:
                return np.array([float(row["fused"]) for row in reader])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad fused value: {exc}") from None
    except OSError as exc:
        raise DataError(f"cannot read scores: {exc}") from None


def cmd_eval(args) -> int:
    fused = _read_scores(_require(args.scores, "--scores"))
    series = load_csv(_require(args.data, "--data (labeled series)"))
    if series.labels is None:
        raise DataError(f"{args.data}: no label column to evaluate against")
    labels = series.labels
    if fused.shape[0] > labels.shape[0]:
        raise DataError(
            f"scores cover {fused.shape[0]} steps but labels only {labels.shape[0]}"
        )
    if labels.shape[0] > fused.shape[0]:
        print(f"eval: truncating labels {labels.shape[0]} -> {fused.shape[0]} "
              "(unscored tail)")
        labels = labels[:fused.shape[0]]

    if args.policy == "fixed":
        if args.value is None:
            raise ConfigError("--policy fixed needs --value")
        policy = ThresholdPolicy("fixed", args.value)
    else:
        ratio = args.ratio
        if ratio is None:
            ratio = float(labels.mean())  # oracle ratio from the labels
            if ratio == 0.0:
                raise DataError("labels are all zero; give --ratio or --value")
            print(f"eval: using oracle flag ratio {ratio:.6f}")
        policy = ThresholdPolicy("topk", ratio)

    rep = evaluate(fused, labels, policy)
    out = _out_dir(args)
    json_path = os.path.join(out, "eval.json")
    with open(json_path, "w") as fh:
        fh.write(rep.to_json())
    preds, _ = apply_threshold(fused, policy)
    adjusted = point_adjust(preds, labels)
    with open(os.path.join(out, "flags.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t", "fused", "flag", "adjusted_flag"))
        for t in range(fused.shape[0]):
            writer.writerow([t, repr(float(fused[t])), int(preds[t]),
                             int(adjusted[t])])
    report.eval_bars(rep, os.path.join(out, "eval_bars.png"))
    report.score_timeline(fused, os.path.join(out, "score_timeline.png"),
                          labels=labels, threshold=rep.threshold)
    print(f"eval: raw      P {rep.precision:.4f} R {rep.recall:.4f} "
          f"F1 {rep.f1:.4f}")
    print(f"eval: adjusted P {rep.adjusted_precision:.4f} "
          f"R {rep.adjusted_recall:.4f} F1 {rep.adjusted_f1:.4f}")
    if rep.degenerate_labels:
        print("eval: warning: labels are a single class")
    print(f"eval: wrote {json_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = run_suite(args.suite, seed=args.seed or 0,
                            perturb_a=args.mutate_a)
    except KeyError:
        raise ConfigError(
            f"unknown suite '{args.suite}'; choose from all, "
            + ", ".join(SUITE_NAMES)
        ) from None
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"verify: {len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERIC


def cmd_synth(args) -> int:
    try:
        spec = AnomalySpec(kinds=tuple(args.anomalies.split(",")),
                           density=args.density, magnitude=args.magnitude,
                           event_len=args.event_len, min_gap=args.min_gap)
        series = synth_benchmark(args.kind, args.total, args.width, spec,
                                 seed=args.seed or 0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    csv_path = os.path.join(out, "synthetic.csv")
    write_csv(series, csv_path)
    report.series_preview(series, os.path.join(out, "synth_preview.png"))
    frac = float(series.labels.mean())
    print(f"synth: {series.length} x {series.width} '{args.kind}', "
          f"anomalous fraction {frac:.4f}")
    print(f"synth: wrote {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fkmad",
        description="Train, score, and verify the spectral state-space "
                    "anomaly detector.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--checkpoint", default=None)
    common.add_argument("--data", default=None, help="CSV series path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="fit a model, write checkpoint + loss history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common],
                       help="score a series with a trained checkpoint")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common],
                       help="raw and point-adjusted P/R/F1 from scores + labels")
    p.add_argument("--scores", default=None, help="scores.csv from `score`")
    p.add_argument("--policy", choices=("topk", "fixed"), default="topk")
    p.add_argument("--ratio", type=float, default=None,
                   help="topk flag ratio; default: the labeled fraction")
    p.add_argument("--value", type=float, default=None,
                   help="fixed threshold value")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", parents=[common],
                       help="run the numerical verification suites")
    p.add_argument("suite", nargs="?", default="all")
    p.add_argument("--mutate-a", type=float, default=0.0, dest="mutate_a",
                   help="corrupt the oracle A_d by this amount (harness self-test)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a labeled synthetic benchmark CSV")
    p.add_argument("--kind", choices=BASE_KINDS, default="multisine")
    p.add_argument("--total", type=int, default=8192)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--anomalies", default="spike",
                   help="comma list from: " + ", ".join(ANOMALY_KINDS))
    p.add_argument("--density", type=float, default=0.01)
    p.add_argument("--magnitude", type=float, default=10.0)
    p.add_argument("--event-len", type=int, default=10, dest="event_len")
    p.add_argument("--min-gap", type=int, default=64, dest="min_gap")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, DivergedScanError, DegenerateStatsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
