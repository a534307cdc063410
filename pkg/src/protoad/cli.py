"""Command-line pipeline: generate, train, score, eval, explain, sweep.

Every subcommand writes exactly one ``manifest.json`` into its output
directory. Manifests hold only deterministic content (resolved config, input
and output hashes with paths relative to the output directory), so reruns
with identical seeds and inputs are byte-identical; wall-clock timings go to
a ``timings.json`` sidecar instead.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import (
    CsvFormatError,
    generate_synthetic,
    fit_normalizer,
    load_csv,
    make_windows,
    write_csv,
)
from .explain import build_report, export_latent, write_prototype_svg
from .model import (
    CheckpointError,
    ProtoADModel,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
)
from .scoring import ScoreSeries, auc_orientation, auc_score, score_series
from .training import train

ARTIFACT_VERSION = 1


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


class Stage:
    """Collects per-stage wall-clock seconds for the timing sidecar."""

    def __init__(self) -> None:
        self.seconds: dict[str, float] = {}
        self._name: str | None = None
        self._t0 = 0.0

    def __call__(self, name: str) -> "Stage":
        self._name = name
        return self

    def __enter__(self) -> "Stage":
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        assert self._name is not None
        self.seconds[self._name] = self.seconds.get(self._name, 0.0) + (
            time.perf_counter() - self._t0
        )
        self._name = None


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _finish_run(
    out_dir: Path,
    command: str,
    config: dict,
    seed: int,
    inputs: list[Path],
    outputs: list[Path],
    stage: Stage,
) -> None:
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": [{"path": p.name, "sha256": _sha256(p)} for p in inputs],
        "outputs": [
            {"path": str(p.relative_to(out_dir)), "sha256": _sha256(p)} for p in outputs
        ],
    }
    _write_json(out_dir / "manifest.json", manifest)
    _write_json(out_dir / "timings.json", {"seconds": stage.seconds})


def _write_scores_csv(path: Path, scores: ScoreSeries) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("origin,score,label\n")
        for o, s, y in zip(scores.origins, scores.scores, scores.labels):
            fh.write(f"{int(o)},{repr(float(s))},{int(y)}\n")


def _read_scores_csv(path: Path) -> ScoreSeries:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: no score rows")
    return ScoreSeries(
        origins=np.array([int(r["origin"]) for r in rows]),
        scores=np.array([float(r["score"]) for r in rows]),
        labels=np.array([int(r["label"]) for r in rows]),
    )


# ---------------------------------------------------------------------------
# config resolution: CLI flags > JSON config file > dataclass defaults

_FLAG_TO_FIELD = {
    "k": "num_prototypes",
    "m": "hidden_size",
    "window_length": "window_length",
    "stride": "stride",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "learning_rate",
    "dropout": "dropout",
    "lambda_e": "lambda_e",
    "lambda_d": "lambda_d",
    "lambda_r": "lambda_r",
    "d_min": "d_min",
    "decoder_order": "decoder_order",
    "score": "score_mode",
    "seed": "seed",
}


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError(f"{args.config}: config file must hold a JSON object")
        raw.update(file_cfg)
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            raw[field_name] = value
    if getattr(args, "no_normalize", False):
        raw["normalize"] = False
    return TrainConfig.from_dict(raw)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="number of prototypes (0 disables the layer)")
    p.add_argument("--m", type=int, help="LSTM hidden size")
    p.add_argument("--window-length", type=int, dest="window_length")
    p.add_argument("--stride", type=int, help="window stride (default: window length)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lambda-e", type=float, dest="lambda_e")
    p.add_argument("--lambda-d", type=float, dest="lambda_d")
    p.add_argument("--lambda-r", type=float, dest="lambda_r")
    p.add_argument("--d-min", type=float, dest="d_min")
    p.add_argument("--decoder-order", choices=("forward", "reversed"), dest="decoder_order")
    p.add_argument("--score", choices=("mahalanobis", "paper-density"))
    p.add_argument("--no-normalize", action="store_true", dest="no_normalize")


def _add_shared_flags(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    if with_input:
        p.add_argument("--input", type=Path, required=True, help="input CSV")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, help="JSON config file (flags win)")
    p.add_argument("--label-column", default=None, help="label column name in input CSVs")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args: argparse.Namespace) -> None:
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    stage = Stage()
    with stage("generate"):
        train_set, test_set = generate_synthetic(
            total_length=args.total_length,
            period=args.period,
            noise_max=args.noise_max,
            anomaly_gap=args.anomaly_gap,
            seed=seed,
            alpha_low=args.alpha_low,
            alpha_high=args.alpha_high,
        )
    train_path = out / "train.csv"
    test_path = out / "test.csv"
    with stage("write"):
        write_csv(train_set, train_path)
        write_csv(test_set, test_path)
    config = {
        "total_length": args.total_length,
        "period": args.period,
        "noise_max": args.noise_max,
        "anomaly_gap": args.anomaly_gap,
        "alpha_low": args.alpha_low,
        "alpha_high": args.alpha_high,
    }
    _finish_run(out, "generate", config, seed, [], [train_path, test_path], stage)
    print(f"wrote {train_path} ({train_set.length} rows) and {test_path} ({test_set.length} rows)")


def cmd_train(args: argparse.Namespace) -> None:
    cfg = _resolve_config(args)
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    stage = Stage()
    with stage("load"):
        data = load_csv(args.input, label_column=args.label_column)
    with stage("train"):
        normalizer = fit_normalizer(data) if cfg.normalize else None
        series = normalizer.apply(data) if normalizer else data
        windows = make_windows(series, cfg.window_length, cfg.stride)
        model, report = train(windows, cfg)
        model.normalizer = normalizer
    ckpt_path = out / "checkpoint.json"
    with stage("save"):
        save_checkpoint(model, ckpt_path)
        report.checkpoint_path = ckpt_path.name
        _write_json(out / "train_report.json", report.to_dict())
    _finish_run(out, "train", asdict(cfg), cfg.seed, [args.input], [ckpt_path], stage)
    last = report.epochs[-1]
    print(
        f"{report.kind}: {cfg.epochs} epochs on {windows.count} windows, "
        f"final loss {last.total:.6f} (error {last.error:.6f})"
    )


def _score_common(args: argparse.Namespace, want_metrics: bool) -> None:
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    stage = Stage()
    inputs: list[Path] = []
    if getattr(args, "scores", None):
        if not want_metrics:
            raise ValueError("--scores is only meaningful for eval")
        with stage("load"):
            scores = _read_scores_csv(args.scores)
        inputs.append(args.scores)
        config: dict = {"source": "scores-csv"}
        seed = args.seed if args.seed is not None else 0
        outputs: list[Path] = []
    else:
        if args.input is None or args.checkpoint is None:
            raise ValueError("need --checkpoint and --input (or --scores for eval)")
        with stage("load"):
            model = load_checkpoint(args.checkpoint)
            data = load_csv(args.input, label_column=args.label_column)
        with stage("score"):
            scores = score_series(model, data)
        scores_path = out / "scores.csv"
        _write_scores_csv(scores_path, scores)
        inputs += [args.checkpoint, args.input]
        config = asdict(model.config)
        seed = model.config.seed
        outputs = [scores_path]
    if want_metrics:
        with stage("eval"):
            oriented = auc_orientation(scores.mode) * scores.scores
            value = auc_score(oriented, scores.labels)
        metrics = {
            "auc": value,
            "num_windows": int(scores.labels.size),
            "num_anomalous_windows": int((scores.labels == 1).sum()),
            "score_mode": scores.mode,
            "config": config,
            "wall_clock_seconds": sum(stage.seconds.values()),
        }
        _write_json(out / "metrics.json", metrics)
        print(f"AUC {value:.4f} over {scores.labels.size} windows")
    else:
        print(f"scored {scores.labels.size} windows")
    _finish_run(out, "eval" if want_metrics else "score", config, seed, inputs, outputs, stage)


def cmd_score(args: argparse.Namespace) -> None:
    _score_common(args, want_metrics=False)


def cmd_eval(args: argparse.Namespace) -> None:
    _score_common(args, want_metrics=True)


def cmd_explain(args: argparse.Namespace) -> None:
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    stage = Stage()
    with stage("load"):
        model = load_checkpoint(args.checkpoint)
        train_data = load_csv(args.train_input, label_column=args.label_column)
        test_data = load_csv(args.input, label_column=args.label_column)
    cfg = model.config
    with stage("explain"):
        raw_train_windows = make_windows(train_data, cfg.window_length, cfg.stride)
        if model.normalizer is not None:
            train_windows = make_windows(
                model.normalizer.apply(train_data), cfg.window_length, cfg.stride
            )
            test_windows = make_windows(
                model.normalizer.apply(test_data), cfg.window_length, cfg.stride
            )
        else:
            train_windows = raw_train_windows
            test_windows = make_windows(test_data, cfg.window_length, cfg.stride)
        report = build_report(
            model, train_windows, test_windows, display_train_windows=raw_train_windows.windows
        )
    outputs = []
    with stage("write"):
        report_path = out / "explanation.json"
        _write_json(report_path, report.to_dict())
        outputs.append(report_path)

        proto_windows_path = out / "prototypes.csv"
        d = model.input_dim
        with open(proto_windows_path, "w", newline="") as fh:
            header = ["prototype", "origin", "offset"] + [f"dim_{j}" for j in range(d)]
            fh.write(",".join(header) + "\n")
            for p in report.projections:
                for offset in range(p.window.shape[0]):
                    cells = [str(p.prototype), str(p.origin), str(offset)]
                    cells += [repr(float(v)) for v in p.window[offset]]
                    fh.write(",".join(cells) + "\n")
        outputs.append(proto_windows_path)

        latent_proto_path = out / "prototypes_latent.csv"
        with open(latent_proto_path, "w", newline="") as fh:
            fh.write(",".join(f"z_{j}" for j in range(model.hidden_size)) + "\n")
            for row in model.prototypes.vectors:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        _write_json(
            out / "prototypes_latent.json",
            {"d_min": model.prototypes.d_min, "seed": cfg.seed, "count": model.prototypes.count},
        )
        outputs += [latent_proto_path, out / "prototypes_latent.json"]

        latent_path = out / "latent.csv"
        export_latent(model, test_windows, latent_path)
        outputs.append(latent_path)

        if args.svg and model.input_dim == 1:
            windows_by_origin = {
                int(o): w for o, w in zip(test_windows.origins, test_windows.windows)
            }
            for p in report.projections:
                svg_path = out / f"prototype_{p.prototype}.svg"
                write_prototype_svg(p, report.assignments, windows_by_origin, svg_path)
                outputs.append(svg_path)
    _finish_run(
        out,
        "explain",
        asdict(cfg),
        cfg.seed,
        [args.checkpoint, args.train_input, args.input],
        outputs,
        stage,
    )
    print(
        f"projected {len(report.projections)} prototypes, "
        f"assigned {len(report.assignments)} test windows"
    )


def _parse_grid(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"grid must be comma-separated integers, got {text!r}") from None


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = _resolve_config(args)
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    m_grid = _parse_grid(args.m_grid)
    k_grid = _parse_grid(args.k_grid)
    stage = Stage()
    with stage("load"):
        train_data = load_csv(args.input, label_column=args.label_column)
        test_data = load_csv(args.test_input, label_column=args.label_column)
    rows = []
    for m in m_grid:
        for k in k_grid:
            cell_cfg = TrainConfig.from_dict({**asdict(cfg), "hidden_size": m, "num_prototypes": k})
            with stage(f"cell_m{m}_k{k}"):
                normalizer = fit_normalizer(train_data) if cell_cfg.normalize else None
                series = normalizer.apply(train_data) if normalizer else train_data
                windows = make_windows(series, cell_cfg.window_length, cell_cfg.stride)
                model, report = train(windows, cell_cfg)
                model.normalizer = normalizer
                scores = score_series(model, test_data)
                value = auc_score(auc_orientation(scores.mode) * scores.scores, scores.labels)
                epoch_seconds = float(np.mean([e.seconds for e in report.epochs]))
            rows.append((m, k, value, epoch_seconds))
            print(f"m={m} k={k}: auc {value:.4f}, {epoch_seconds:.3f}s/epoch")
    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", newline="") as fh:
        fh.write("m,k,auc,seconds\n")
        for m, k, value, secs in rows:
            fh.write(f"{m},{k},{repr(value)},{repr(secs)}\n")
    _finish_run(
        out,
        "sweep",
        {**asdict(cfg), "m_grid": m_grid, "k_grid": k_grid},
        cfg.seed,
        [args.input, args.test_input],
        [sweep_path],
        stage,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoad",
        description="LSTM-autoencoder anomaly detection with prototype explanations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic sine train/test CSV pair")
    _add_shared_flags(p, with_input=False)
    p.add_argument("--total-length", type=int, default=20000, dest="total_length")
    p.add_argument("--period", type=int, default=100)
    p.add_argument("--noise-max", type=float, default=0.1, dest="noise_max")
    p.add_argument("--anomaly-gap", type=int, default=100, dest="anomaly_gap")
    p.add_argument("--alpha-low", type=float, default=0.0, dest="alpha_low")
    p.add_argument("--alpha-high", type=float, default=1.0, dest="alpha_high")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a detector on a regular-data CSV")
    _add_shared_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a CSV with a trained checkpoint")
    _add_shared_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="score and compute window-level AUC")
    _add_shared_flags(p, with_input=False)
    p.add_argument("--input", type=Path, help="test CSV (with --checkpoint)")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--scores", type=Path, help="reuse an existing scores CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="project prototypes and assign test windows")
    _add_shared_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--train-input", type=Path, required=True, dest="train_input")
    p.add_argument("--svg", action="store_true", help="emit per-prototype SVGs (d=1 only)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("sweep", help="grid over hidden size and prototype count")
    _add_shared_flags(p)
    _add_train_flags(p)
    p.add_argument("--test-input", type=Path, required=True, dest="test_input")
    p.add_argument("--m-grid", required=True, dest="m_grid", help="e.g. 10,50,100")
    p.add_argument("--k-grid", required=True, dest="k_grid", help="e.g. 0,5,10")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError, CsvFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
