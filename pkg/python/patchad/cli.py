"""
Command line interface

``patchad train|score|eval|synth|bench|diag``. Every command writes a run
manifest next to its outputs. Errors are reported on standard error and mapped
to exit codes: 1 for configuration, 2 for data, 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import attrs
import numpy as np

import patchad
from patchad.bench import bench, latency_scaling
from patchad.checkpoint import load_checkpoint, save_checkpoint
from patchad.config import load_json, resolve_seed
from patchad.data import (
    LabeledSeries,
    gather_windows,
    load_binary,
    load_csv,
    normalize,
    save_binary,
    save_series,
    window_starts,
    zscore_fit,
)
from patchad.diagnostics import branch_contrast, feature_entropy_report, variance_report
from patchad.errors import ConfigError, DataError, PatchADError
from patchad.io import atomic_write, load_scores, save_scores
from patchad.metrics import evaluate
from patchad.scoring import score_full_series, threshold_by_ratio
from patchad.spot import GPDFit, spot_threshold
from patchad.synthetic import SynthSpec, synth_generate
from patchad.trainer import TrainConfig, train

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@attrs.frozen
class RunManifest:
    """Everything needed to replay a command"""

    command: str
    argv: tuple[str, ...]
    config: dict[str, Any]
    inputs: dict[str, str]
    outputs: dict[str, str]
    seed: int | None
    version: str
    wall_time: float

    def write(self, path: Path) -> None:
        with atomic_write(path) as fh:
            json.dump(attrs.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def manifest_path(output: Path) -> Path:
    """
    ``manifest.json`` inside an output directory, ``<stem>.manifest.json``
    beside a file
    """
    if output.suffix == "":
        return output / "manifest.json"
    return output.with_name(f"{output.stem}.manifest.json")


def read_series(
    path: str | os.PathLike[str], label_column: str | None = None
) -> LabeledSeries:
    """Load a ``.pads`` binary series or a CSV"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    if path.suffix == ".pads":
        return load_binary(path)
    return load_csv(path, label_column)


def write_series(path: str | os.PathLike[str], series: LabeledSeries) -> None:
    if Path(path).suffix == ".pads":
        save_binary(path, series)
    else:
        save_series(path, series)


def _write_json(path: Path, value: Any) -> None:
    with atomic_write(path) as fh:
        json.dump(value, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _train_config(args: argparse.Namespace, series: LabeledSeries) -> TrainConfig:
    parameters = load_json(args.config) if args.config else {}
    model = dict(parameters.get("model", {}))
    model.setdefault("channels", series.channels)
    if model["channels"] != series.channels:
        raise DataError(
            f"config expects {model['channels']} channels, data has {series.channels}"
        )
    configured_seed = parameters.get("seed")
    parameters = {
        **parameters,
        "model": model,
        "seed": resolve_seed(args.seed, configured_seed),
    }
    if args.epochs is not None:
        parameters["epochs"] = args.epochs
    return TrainConfig.from_parameters(parameters)


def cmd_train(args: argparse.Namespace) -> dict[str, Any]:
    raw = read_series(args.data, args.label_column)
    config = _train_config(args, raw)
    series = normalize(raw, zscore_fit(raw))
    out = Path(args.out)
    checkpoint = out / "model.padc"
    model, log = train(series, config, checkpoint_path=checkpoint)
    save_checkpoint(checkpoint, model, series.stats)
    log.write_jsonl(out / "train_log.jsonl")
    return {
        "config": config.to_parameters(),
        "seed": config.seed,
        "inputs": {"data": str(args.data)},
        "outputs": {"checkpoint": str(checkpoint), "log": str(out / "train_log.jsonl")},
        "manifest": manifest_path(out),
    }


def _score(args: argparse.Namespace, path: str, model, stats) -> np.ndarray:
    series = read_series(path, args.label_column)
    if series.channels != model.config.channels:
        raise DataError(
            f"{path}: model expects {model.config.channels} channels, "
            f"got {series.channels}"
        )
    if stats is not None:
        series = normalize(series, stats)
    return score_full_series(series, model, stride=args.stride).scores


def cmd_score(args: argparse.Namespace) -> dict[str, Any]:
    if args.spot and not args.calib:
        raise ConfigError("--spot needs a --calib file")
    loaded = load_checkpoint(args.model)
    scores = _score(args, args.data, loaded.model, loaded.stats)
    inputs = {"model": str(args.model), "data": str(args.data)}
    if args.spot:
        calibration = _score(args, args.calib, loaded.model, loaded.stats)
        result = spot_threshold(
            calibration, scores, q=args.q, level=args.level, fit=args.fit
        )
        flags, threshold = result.flags, result.thresholds
        inputs["calib"] = str(args.calib)
    else:
        threshold, flags = threshold_by_ratio(scores, args.sigma)
    out = Path(args.out)
    save_scores(out, scores, flags, threshold)
    logger.info("Flagged %s of %s points", int(flags.sum()), flags.size)
    return {
        "config": {
            "sigma": None if args.spot else args.sigma,
            "spot": args.spot,
            "q": args.q,
            "level": args.level,
            "fit": args.fit,
            "stride": args.stride,
            "model": loaded.model.config.to_parameters(),
        },
        "seed": None,
        "inputs": inputs,
        "outputs": {"scores": str(out)},
        "manifest": manifest_path(out),
    }


def cmd_eval(args: argparse.Namespace) -> dict[str, Any]:
    frame = load_scores(args.scores)
    labels = read_series(args.labels, args.label_column).labels
    if labels is None:
        raise DataError(f"{args.labels}: no label column {args.label_column!r}")
    if labels.shape[0] != len(frame):
        raise DataError(f"{len(frame)} scores but {labels.shape[0]} labels")
    scores = frame["score"].to_numpy()

    if args.sigma:
        reports = [
            evaluate(scores, labels, sigma=s, max_buffer=args.vus_buffer)
            for s in args.sigma
        ]
    else:
        threshold = frame["threshold"].to_numpy()
        constant = np.unique(threshold).size == 1
        reports = [
            evaluate(
                scores,
                labels,
                flags=frame["flag"].to_numpy(),
                threshold=float(threshold[0]) if constant else None,
                max_buffer=args.vus_buffer,
            )
        ]
    for report in reports:
        header = (
            "flags from score file"
            if report.sigma is None
            else f"sigma = {report.sigma}"
        )
        print(f"# {header}\n{report.to_table()}\n")

    out = Path(args.out)
    payload = [r.to_parameters() for r in reports]
    _write_json(out, payload if args.sigma and len(args.sigma) > 1 else payload[0])
    return {
        "config": {"sigma": args.sigma, "vus_buffer": args.vus_buffer},
        "seed": None,
        "inputs": {"scores": str(args.scores), "labels": str(args.labels)},
        "outputs": {"report": str(out)},
        "manifest": manifest_path(out),
    }


def cmd_synth(args: argparse.Namespace) -> dict[str, Any]:
    parameters = load_json(args.spec)
    parameters["seed"] = resolve_seed(args.seed, parameters.get("seed"))
    spec = SynthSpec.from_parameters(parameters)
    series = synth_generate(spec)
    out = Path(args.out)
    write_series(out, series)
    return {
        "config": spec.to_parameters(),
        "seed": spec.seed,
        "inputs": {"spec": str(args.spec)},
        "outputs": {"series": str(out)},
        "manifest": manifest_path(out),
    }


def cmd_bench(args: argparse.Namespace) -> dict[str, Any]:
    config = load_checkpoint(args.model).model.config
    result: dict[str, Any] = {"single": attrs.asdict(bench(config, args.iterations))}
    if args.window_sizes:
        fit = latency_scaling(config, args.window_sizes, args.iterations)
        result["scaling"] = attrs.asdict(fit)
        print(
            f"latency ~ {fit.slope:.3g} s/step * window + {fit.intercept:.3g} s, "
            f"R^2 = {fit.r_squared:.4f}"
        )
    single = result["single"]
    print(
        f"params {single['param_count']}  flops/window {single['flops']}  "
        f"latency {single['latency'] * 1e3:.3f} ms"
    )
    out = Path(args.out)
    _write_json(out, result)
    return {
        "config": {
            "model": config.to_parameters(),
            "window_sizes": args.window_sizes,
            "iterations": args.iterations,
        },
        "seed": None,
        "inputs": {"model": str(args.model)},
        "outputs": {"report": str(out)},
        "manifest": manifest_path(out),
    }


def cmd_diag(args: argparse.Namespace) -> dict[str, Any]:
    loaded = load_checkpoint(args.model)
    model = loaded.model
    series = read_series(args.data, args.label_column)
    if loaded.stats is not None:
        series = normalize(series, loaded.stats)
    window = model.config.window
    starts = window_starts(series.length, window, window)
    windows = gather_windows(series.values, starts, window)
    entropy = feature_entropy_report(model, windows)
    result: dict[str, Any] = {"entropy": {str(k): v for k, v in entropy.items()}}
    if series.labels is not None:
        labels = np.stack([series.labels[s : s + window] for s in starts])
        variance = variance_report(model, windows, labels)
        result["variance"] = [attrs.asdict(r) for r in variance]
        dirty = labels.any(axis=1)
        if dirty.any() and not dirty.all():
            contrast = branch_contrast(model, windows[dirty], windows[~dirty])
            result["contrast"] = {str(k): v for k, v in contrast.items()}
    print(json.dumps(result, indent=2, sort_keys=True))
    out = Path(args.out)
    _write_json(out, result)
    return {
        "config": {"model": model.config.to_parameters()},
        "seed": None,
        "inputs": {"model": str(args.model), "data": str(args.data)},
        "outputs": {"report": str(out)},
        "manifest": manifest_path(out),
    }


def build_parser() -> argparse.ArgumentParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="patchad",
        description="Patch-based MLP-Mixer anomaly detection",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=patchad.__version__)
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="verbosity of the log on standard error",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=help_text, description=help_text, formatter_class=formatter
        )
        p.set_defaults(handler=handler)
        return p

    p = add("train", cmd_train, "train a model on a series")
    p.add_argument("--data", required=True, help="training series (.csv or .pads)")
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--seed", type=int, help="overrides PATCHAD_SEED and the config seed"
    )
    p.add_argument("--epochs", type=int, help="overrides the config epochs")
    p.add_argument("--label-column", help="column to drop from the channels")

    p = add("score", cmd_score, "score a series with a trained model")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="series to score")
    p.add_argument("--out", required=True, help="score CSV to write")
    p.add_argument("--sigma", type=float, default=1.0, help="anomaly ratio in percent")
    p.add_argument(
        "--spot", action="store_true", help="threshold with SPOT instead of a ratio"
    )
    p.add_argument("--calib", help="calibration series for SPOT")
    p.add_argument("--q", type=float, default=1e-4, help="SPOT risk")
    p.add_argument("--level", type=float, default=0.98, help="SPOT initial quantile")
    p.add_argument(
        "--fit",
        default=GPDFit.GRIMSHAW.value,
        choices=[f.value for f in GPDFit],
        help="SPOT tail estimator",
    )
    p.add_argument(
        "--stride",
        type=int,
        help="window stride in [1, window], the window length if not given",
    )
    p.add_argument("--label-column", help="column to drop from the channels")

    p = add("eval", cmd_eval, "evaluate scores against labels")
    p.add_argument("--scores", required=True, help="score CSV")
    p.add_argument("--labels", required=True, help="series with a label column")
    p.add_argument("--label-column", default="label", help="name of the label column")
    p.add_argument(
        "--sigma",
        type=float,
        nargs="+",
        help="one report per anomaly ratio; flags from the score file if not given",
    )
    p.add_argument(
        "--vus-buffer",
        type=int,
        help="largest VUS buffer, 4x the mean segment length if not given",
    )
    p.add_argument("--out", required=True, help="report JSON to write")

    p = add("synth", cmd_synth, "generate a synthetic labelled series")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True, help="series to write (.csv or .pads)")
    p.add_argument(
        "--seed",
        type=int,
        help="overrides PATCHAD_SEED and the seed in the synthetic spec",
    )

    p = add("bench", cmd_bench, "parameter count, FLOPs and latency of a model")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument(
        "--window-sizes",
        type=int,
        nargs="*",
        help="window lengths for the latency scaling fit; "
        "lengths not divisible by every patch size are skipped",
    )
    p.add_argument(
        "--iterations",
        type=int,
        default=100,
        help="timed forward passes per window length",
    )
    p.add_argument("--out", required=True, help="report JSON to write")

    p = add("diag", cmd_diag, "entropy and variance diagnostics of the two views")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="series to diagnose")
    p.add_argument("--label-column", help="label column enabling the variance report")
    p.add_argument("--out", required=True, help="report JSON to write")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)

    began = time.perf_counter()
    try:
        result = args.handler(args)
        RunManifest(
            command=args.command,
            argv=tuple(argv),
            config=result["config"],
            inputs=result["inputs"],
            outputs=result["outputs"],
            seed=result["seed"],
            version=patchad.__version__,
            wall_time=time.perf_counter() - began,
        ).write(result["manifest"])
    except PatchADError as exc:
        print(f"patchad {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
