"""Command-line front end: train, convert, eval, analyze, verify-theorem,
plus a generator for the built-in synthetic digit set.

Configuration comes from an optional flat ``key=value`` file (``--config``)
with explicit command-line flags taking precedence.  Exit codes:

    0   success
    2   configuration problem (bad flags, bad config file, bad parameters)
    3   data problem (missing or malformed dataset / checkpoint bytes)
    4   invariant violation (conversion or pairing mismatch, training
        divergence, theorem counterexample)
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    error_type_I_distribution,
    error_type_II_distribution,
    random_theorem_sweep,
    report_summary,
    srp_effect_report,
    theorem_failures,
    verify_theorem1,
    write_report_csv,
    write_report_json,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import (
    DatasetHandle,
    load_csv_dataset,
    load_idx_pair,
    materialize_idx,
    standardization_stats,
    standardize,
    synthetic_digits,
)
from .engine import (
    TraceRecorder,
    conversion_report,
    convert,
    snn_forced_phi,
    snn_simulate,
    srp_inference,
)
from .errors import (
    ConversionError,
    DataFormatError,
    DataValidationError,
    PairingError,
    ParameterError,
    ShapeError,
    TrainingDivergenceError,
)
from .network import ann_forward, cnn_preset, mlp_preset
from .training import TrainConfig, accuracy, init_network, prepare_inputs, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


@dataclass
class RunConfig:
    """Merged settings shared by every command."""
    command: str
    model: str | None = None
    data: str | None = None
    timesteps: tuple = (1, 2, 4, 8)
    tau: int = 4
    quant_steps: int = 4
    seed: int = 0
    out: str | None = None

    def require(self, *fields) -> None:
        for name in fields:
            value = getattr(self, name)
            if value is None:
                raise ParameterError(f"{self.command}: --{name} is required")
            if name in ("model", "data") and not Path(value).exists():
                raise FileNotFoundError(f"{self.command}: {name} path not found: {value}")


# ---------------------------------------------------------------------------
# config file + flag merging


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(part) for part in str(text).split(","))
    except ValueError:
        raise ParameterError(f"expected comma-separated integers, got {text!r}") from None


def _parse_float_list(text: str) -> tuple:
    try:
        return tuple(float(part) for part in str(text).split(","))
    except ValueError:
        raise ParameterError(f"expected comma-separated numbers, got {text!r}") from None


_CASTS = {
    "timesteps": _parse_int_list,
    "tau": int,
    "quant_steps": int,
    "seed": int,
    "epochs": int,
    "batch_size": int,
    "limit": int,
    "learning_rate": float,
    "momentum": float,
    "weight_decay": float,
    "srp": _parse_bool,
    "even_timing": _parse_bool,
    "arch": str,
    "out": str,
    "data": str,
    "model": str,
    "split": str,
    "report": str,
    "trace": str,
    "trace_sample": int,
    "draws": int,
    "weights": _parse_float_list,
    "counts": _parse_int_list,
    "theta": float,
    "train_count": int,
    "test_count": int,
    "noise": float,
}


def parse_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; blank lines skipped."""
    p = Path(path)
    if not p.exists():
        raise ParameterError(f"config file not found: {path}")
    values = {}
    for line_no, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParameterError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CASTS:
            raise ParameterError(f"{path}:{line_no}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _merge(args: argparse.Namespace) -> argparse.Namespace:
    """Fill flag values the user did not pass from the config file."""
    config = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for key, raw in config.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, _CASTS[key](raw))
    return args


def _get(args, key, default):
    value = getattr(args, key, None)
    return default if value is None else value


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        model=getattr(args, "model", None),
        data=getattr(args, "data", None),
        timesteps=_get(args, "timesteps", (1, 2, 4, 8)),
        tau=_get(args, "tau", 4),
        quant_steps=_get(args, "quant_steps", 4),
        seed=_get(args, "seed", 0),
        out=getattr(args, "out", None),
    )


# ---------------------------------------------------------------------------
# dataset plumbing


def _load_dataset(path, split: str) -> DatasetHandle:
    p = Path(path)
    if p.is_dir():
        images = p / f"{split}-images-idx3-ubyte"
        labels = p / f"{split}-labels-idx1-ubyte"
        if not images.exists() or not labels.exists():
            raise FileNotFoundError(f"no IDX pair for split {split!r} under {p}")
        return load_idx_pair(images, labels, name=split)
    if not p.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    if p.suffix == ".csv":
        return load_csv_dataset(p, name=p.stem)
    raise DataFormatError(f"cannot tell dataset format from {path!r}; "
                          "pass a directory of IDX files or a .csv file")


def _model_inputs(net, handle: DatasetHandle) -> np.ndarray:
    images = handle.images
    if net.normalization:
        images = standardize(images, net.normalization)
    return prepare_inputs(images, net.input_shape)


def _scores_accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(scores, axis=1) == labels))


# ---------------------------------------------------------------------------
# commands


def _ensure_parent(path) -> None:
    """Create missing parent directories for an output path."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def cmd_make_data(args) -> int:
    cfg = _run_config(args)
    cfg.require("out")
    n_train = _get(args, "train_count", 2000)
    n_test = _get(args, "test_count", 500)
    noise = _get(args, "noise", 0.15)
    train_set = synthetic_digits(n_train, seed=cfg.seed, noise=noise)
    test_set = synthetic_digits(n_test, seed=cfg.seed + 1, noise=noise)
    for prefix, handle in (("train", train_set), ("test", test_set)):
        image_path, label_path = materialize_idx(handle, cfg.out, prefix)
        print(f"wrote {image_path}")
        print(f"wrote {label_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    cfg.require("data")
    out = cfg.out or "model.ckpt"
    arch = _get(args, "arch", "mlp")
    if arch not in ("mlp", "cnn"):
        raise ParameterError(f"unknown architecture {arch!r}")

    handle = _load_dataset(cfg.data, _get(args, "split", "train"))
    limit = getattr(args, "limit", None)
    if limit:
        handle = handle.subset(slice(0, limit))

    net = mlp_preset(cfg.quant_steps) if arch == "mlp" else cnn_preset(cfg.quant_steps)
    net.normalization = standardization_stats(handle.images)
    init_network(net, cfg.seed)

    x = _model_inputs(net, handle)
    train_cfg = TrainConfig(
        learning_rate=_get(args, "learning_rate", 0.1),
        momentum=_get(args, "momentum", 0.9),
        weight_decay=_get(args, "weight_decay", 5e-4),
        epochs=_get(args, "epochs", 20),
        batch_size=_get(args, "batch_size", 64),
    )
    history = train(net, x, handle.labels, train_cfg, seed=cfg.seed)
    for epoch, (loss, acc) in enumerate(zip(history.loss, history.train_accuracy)):
        print(f"epoch {epoch + 1}/{train_cfg.epochs} loss {loss:.4f} acc {acc:.4f}")

    _ensure_parent(out)
    save_checkpoint(net, out, model_type="ann")
    final = accuracy(net, x, handle.labels)
    print(f"train accuracy {final:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_convert(args) -> int:
    cfg = _run_config(args)
    cfg.require("model")
    out = cfg.out or "model-snn.ckpt"
    net, header = load_checkpoint(cfg.model)
    if header.get("model_type") != "ann":
        raise ParameterError(f"{cfg.model}: expected an ANN checkpoint, "
                             f"got model_type={header.get('model_type')!r}")
    snn = convert(net)
    _ensure_parent(out)
    save_checkpoint(net, out, model_type="snn")
    print(f"wrote {out}")
    report_path = getattr(args, "report", None)
    if report_path:
        report = conversion_report(snn, timesteps=cfg.timesteps[0], tau=cfg.tau)
        _ensure_parent(report_path)
        with open(report_path, "w") as fh:
            json.dump(dataclasses.asdict(report), fh, indent=2, sort_keys=True)
        print(f"wrote {report_path}")
    return EXIT_OK


def _write_metrics(path, rows) -> None:
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        fh.write("T,acc_ann,acc_snn,acc_srp\n")
        for timesteps, acc_ann, acc_snn, acc_srp in rows:
            srp_field = "" if acc_srp is None else f"{acc_srp:.6f}"
            fh.write(f"{timesteps},{acc_ann:.6f},{acc_snn:.6f},{srp_field}\n")


def load_metrics_csv(path) -> list:
    """Round-trip reader for the eval CSV; empty SRP cells become None."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["T", "acc_ann", "acc_snn", "acc_srp"]:
            raise DataFormatError(f"{path}: unexpected header {reader.fieldnames}")
        for record in reader:
            rows.append((
                int(record["T"]),
                float(record["acc_ann"]),
                float(record["acc_snn"]),
                float(record["acc_srp"]) if record["acc_srp"] else None,
            ))
    return rows


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    cfg.require("model", "data")
    out = cfg.out or "metrics.csv"
    use_srp = bool(_get(args, "srp", False))
    even_timing = bool(_get(args, "even_timing", False))

    net, _ = load_checkpoint(cfg.model)
    snn = convert(net)
    handle = _load_dataset(cfg.data, _get(args, "split", "test"))
    limit = getattr(args, "limit", None)
    if limit:
        handle = handle.subset(slice(0, limit))
    x = _model_inputs(net, handle)
    labels = handle.labels

    logits, _ = ann_forward(net, x)
    acc_ann = _scores_accuracy(logits, labels)

    rows = []
    for timesteps in cfg.timesteps:
        if even_timing:
            scores, _ = snn_forced_phi(snn, x, timesteps)
        else:
            scores = snn_simulate(snn, x, timesteps, record_spikes=False).scores
        acc_snn = _scores_accuracy(scores, labels)
        acc_srp = None
        if use_srp:
            srp = srp_inference(snn, x, cfg.tau, timesteps)
            acc_srp = _scores_accuracy(srp.scores, labels)
        rows.append((timesteps, acc_ann, acc_snn, acc_srp))
        srp_text = "" if acc_srp is None else f" srp {acc_srp:.4f}"
        print(f"T={timesteps} ann {acc_ann:.4f} snn {acc_snn:.4f}{srp_text}")

    _write_metrics(out, rows)
    print(f"wrote {out}")

    trace_path = getattr(args, "trace", None)
    if trace_path:
        sample = _get(args, "trace_sample", 0)
        if not 0 <= sample < len(handle):
            raise ParameterError(f"trace sample {sample} outside dataset of {len(handle)}")
        recorder = TraceRecorder()
        snn_simulate(snn, x[sample:sample + 1], cfg.timesteps[0],
                     record_spikes=False, trace=recorder)
        _ensure_parent(trace_path)
        recorder.write_csv(trace_path)
        print(f"wrote {trace_path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _run_config(args)
    cfg.require("model", "data")
    out_dir = Path(cfg.out or "analysis")
    out_dir.mkdir(parents=True, exist_ok=True)
    timesteps = cfg.timesteps[0]
    use_srp = bool(_get(args, "srp", False))

    net, _ = load_checkpoint(cfg.model)
    snn = convert(net)
    handle = _load_dataset(cfg.data, _get(args, "split", "test"))
    limit = _get(args, "limit", 256)
    if limit:
        handle = handle.subset(slice(0, limit))
    x = _model_inputs(net, handle)

    reports = {
        "type_I": error_type_I_distribution(net, snn, x, timesteps),
        "type_II": error_type_II_distribution(net, snn, x, timesteps),
    }
    for name, report in reports.items():
        csv_path = out_dir / f"{name}.csv"
        json_path = out_dir / f"{name}.json"
        write_report_csv(report, csv_path)
        write_report_json(report, json_path)
        print(f"wrote {csv_path}")
        print(f"wrote {json_path}")

    if use_srp:
        effect = srp_effect_report(net, snn, x, cfg.tau, timesteps)
        write_report_csv(effect.before, out_dir / "srp_before.csv")
        write_report_csv(effect.after, out_dir / "srp_after.csv")
        payload = {
            "tau": cfg.tau,
            "timesteps": timesteps,
            "before": report_summary(effect.before),
            "after": report_summary(effect.after),
        }
        with open(out_dir / "srp_effect.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        print(f"wrote {out_dir / 'srp_effect.json'}")
    return EXIT_OK


def cmd_verify_theorem(args) -> int:
    cfg = _run_config(args)
    timesteps_list = getattr(args, "timesteps", None) or (2, 4, 6)
    weights = getattr(args, "weights", None)
    summary: dict
    if weights is not None:
        counts = getattr(args, "counts", None)
        if counts is None:
            raise ParameterError("--counts is required when --weights is given")
        timesteps = timesteps_list[0]
        theta = _get(args, "theta", 1.0)
        verdicts = verify_theorem1(weights, timesteps, counts, theta=theta)
        failures = theorem_failures(verdicts)
        total = len(verdicts)
        print(f"instance: weights={list(weights)} counts={list(counts)} "
              f"T={timesteps} theta={theta}")
        print(f"checked {total} spike-timing placements, {len(failures)} violations")
        summary = {"mode": "instance", "placements": total,
                   "violations": len(failures),
                   "a": verdicts[0].a if verdicts else None}
    else:
        draws = _get(args, "draws", 100)
        total, failures = random_theorem_sweep(draws, timesteps_list, seed=cfg.seed)
        print(f"checked {total} placements over {draws} draws x T in "
              f"{list(timesteps_list)}, {len(failures)} violations")
        summary = {"mode": "sweep", "draws": draws, "placements": total,
                   "violations": len(failures)}

    for bad in failures[:5]:
        print(f"violation: timings={bad.timings} phi={bad.phi} "
              f"v_final={bad.v_final} a={bad.a} clause={bad.clause}",
              file=sys.stderr)
    if cfg.out:
        _ensure_parent(cfg.out)
        with open(cfg.out, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        print(f"wrote {cfg.out}")
    return EXIT_INVARIANT if failures else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snnconv",
        description="Train quantized-activation networks, convert them to "
                    "spiking networks, and analyze spike-timing errors.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("make-data", help="generate the synthetic digit set")
    common(p)
    p.add_argument("--train-count", type=int, default=None, dest="train_count")
    p.add_argument("--test-count", type=int, default=None, dest="test_count")
    p.add_argument("--noise", type=float, default=None)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train", help="train a quantized-activation network")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--arch", default=None)
    p.add_argument("--quant-steps", type=int, default=None, dest="quant_steps")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None, dest="weight_decay")
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert a trained network to spiking form")
    common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--timesteps", type=_parse_int_list, default=None)
    p.add_argument("--report", default=None, help="also write a conversion report JSON")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("eval", help="evaluate accuracy over timestep counts")
    common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--timesteps", type=_parse_int_list, default=None)
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--srp", action="store_true", default=None)
    p.add_argument("--even-timing", action="store_true", default=None,
                   dest="even_timing", help="replace simulation by forced even timing")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--trace", default=None, help="write a per-step trace CSV")
    p.add_argument("--trace-sample", type=int, default=None, dest="trace_sample")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="emit spike-timing error reports")
    common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--timesteps", type=_parse_int_list, default=None,
                   help="first value is used")
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--srp", action="store_true", default=None,
                   help="add before/after masking reports")
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify-theorem",
                       help="exhaustively check the residual-potential theorem")
    common(p)
    p.add_argument("--timesteps", type=_parse_int_list, default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--weights", type=_parse_float_list, default=None,
                   help="check one explicit instance instead of a random sweep")
    p.add_argument("--counts", type=_parse_int_list, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.set_defaults(func=cmd_verify_theorem)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _merge(args)
        return args.func(args)
    except (ParameterError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, DataValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConversionError, PairingError, TrainingDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
