"""``flowvae`` command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from flowvae.checkpoint import load_model, save_model
from flowvae.classifiers import train_lbd, train_llc
from flowvae.config import PRESET_OVERRIDES, RunConfig, load_config_file
from flowvae.data.csvio import infer_schema, read_csv, save_csv
from flowvae.data.dataset import Dataset
from flowvae.data.schema import FEATURE_SETS
from flowvae.data.synthetic import BUILTIN_SPECS, SyntheticSpec, gen_synthetic
from flowvae.errors import ConfigError, DataError, DivergedError, FlowVaeError, SchemaError
from flowvae.gate import GateState, run_gate_sim
from flowvae.metrics import (
    binary_collapse,
    confusion_matrix,
    per_class_accuracy,
    permutation_importance,
    throughput_bench,
    write_confusion_csv,
    write_log,
)
from flowvae.pipeline import benign_only, prepare
from flowvae.presets import PRESETS
from flowvae.rng import RngStream
from flowvae.vae import build_vae_for_preset, reconstruction_scores

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
SOURCE_DRAW, TEST_DRAW = 100, 101


# ---------------------------------------------------------------- argument parsing

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [run] and [preset] sections")
    common.add_argument("--seed", type=int, help="random seed (falls back to $FLOWVAE_SEED)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dump-config", action="store_true", help="print the effective config and exit")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--train", help="training CSV")
    data.add_argument("--val", help="validation CSV (default: 60/40 split of --train)")
    data.add_argument("--test", help="test CSV")
    data.add_argument("--synthetic", help="builtin spec (" + ", ".join(BUILTIN_SPECS) + ") or spec JSON file")
    data.add_argument("--batch-size", type=int)

    preset = argparse.ArgumentParser(add_help=False)
    preset.add_argument("--preset", help="preset name: " + ", ".join(PRESETS))
    for key in PRESET_OVERRIDES:
        flag = "--losses" if key == "losses_enabled" else "--" + key.replace("_", "-")
        preset.add_argument(flag, dest="ov_" + key, metavar=key.upper(), help=f"override preset {key}")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--checkpoint", help="trained model file")

    p = argparse.ArgumentParser(prog="flowvae", description="VAE-based DoS/DDoS flow detection")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("train-llc", parents=[common, data, preset], help="train the latent-layer classifier")
    s.add_argument("--log-interval", type=int)
    s = sub.add_parser("train-lbd", parents=[common, data, preset], help="train the two-stage loss-based detector")
    s.add_argument("--log-interval", type=int)
    s.add_argument("--lr2", type=float, help="stage-2 learning rate (default: preset LR)")
    sub.add_parser("evaluate", parents=[common, data, model], help="confusion matrices for a checkpoint")
    s = sub.add_parser("bench", parents=[common, data, model, preset], help="inference throughput")
    s.add_argument("--iterations", type=int)
    s = sub.add_parser("gate-sim", parents=[common, data, model], help="blacklist + capacity gate simulation")
    s.add_argument("--threshold", type=float)
    s.add_argument("--capacity", type=int, help="admitted flows per window (default: unbounded)")
    s.add_argument("--window", type=int, help="flows per window (default: one window)")
    s.add_argument("--oracle", action="store_true", default=None, help="use the trace labels as a perfect classifier")
    s = sub.add_parser("gen-synth", parents=[common, data], help="write a synthetic dataset CSV")
    s.add_argument("--output", help="CSV path (default: OUT/synthetic.csv)")
    s.add_argument("--spec-out", help="also write the spec as JSON")
    s = sub.add_parser("importance", parents=[common, data, model], help="permutation feature importance")
    s.add_argument("--repeats", type=int)
    return p


def build_config(args: argparse.Namespace) -> RunConfig:
    """File values first, then any flag given on the command line."""
    cfg = load_config_file(args.config) if args.config else RunConfig()
    cfg.command = args.command
    for name in ("seed", "out", "train", "val", "test", "synthetic", "batch_size", "log_interval",
                 "checkpoint", "lr2", "threshold", "capacity", "window", "iterations", "repeats",
                 "oracle", "preset", "output", "spec_out"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    for key, parse in PRESET_OVERRIDES.items():
        value = getattr(args, "ov_" + key, None)
        if value is not None:
            try:
                cfg.overrides[key] = parse(value)
            except ValueError:
                raise ConfigError(f"bad value for --{key.replace('_', '-')}: {value!r}") from None
    return cfg


# ---------------------------------------------------------------- data sources

def _synthetic_spec(cfg: RunConfig) -> SyntheticSpec:
    name = cfg.synthetic
    if name in BUILTIN_SPECS:
        return BUILTIN_SPECS[name](seed=cfg.seed)
    path = Path(name)
    if not path.is_file():
        raise ConfigError(f"--synthetic must be one of {', '.join(BUILTIN_SPECS)} or a JSON spec file")
    try:
        return SyntheticSpec.from_json(path.read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad synthetic spec {path}: {exc}") from None


def _load(path: str) -> Dataset:
    ds, summary = read_csv(path, infer_schema(path))
    if summary.skip_count:
        print(summary.report(), file=sys.stderr)
    if len(ds) == 0:
        raise DataError(f"{path}: no usable rows")
    return ds


def load_sources(cfg: RunConfig):
    """``(source, val, test)``; synthetic runs draw source and test independently."""
    cfg.check_data_source()
    if cfg.synthetic:
        spec = _synthetic_spec(cfg)
        rng = RngStream(cfg.seed)
        return gen_synthetic(spec, rng.fork(SOURCE_DRAW)), None, gen_synthetic(spec, rng.fork(TEST_DRAW))
    return (_load(cfg.train) if cfg.train else None, _load(cfg.val) if cfg.val else None,
            _load(cfg.test) if cfg.test else None)


def _eval_data(cfg: RunConfig) -> Dataset:
    """The dataset an evaluation-style command runs on: test, else val, else train."""
    source, val, test = load_sources(cfg)
    for ds in (test, val, source):
        if ds is not None:
            return ds
    raise ConfigError("no evaluation data given")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- reports

def _write_confusions(model, ds: Dataset, out: Path, tag: str) -> list[str]:
    preds = model.predict(np.ascontiguousarray(ds.features))
    cm = confusion_matrix(preds, ds.labels, len(model.class_names), model.class_names)
    write_confusion_csv(cm, out / f"confusion_{tag}_counts.csv")
    write_confusion_csv(cm, out / f"confusion_{tag}_rates.csv", rates=True)
    lines = _accuracy_lines(cm, tag)
    if len(model.class_names) > 2:
        bcm = binary_collapse(cm, model.schema.benign_index)
        write_confusion_csv(bcm, out / f"confusion_{tag}_binary_counts.csv")
        write_confusion_csv(bcm, out / f"confusion_{tag}_binary_rates.csv", rates=True)
        lines += _accuracy_lines(bcm, tag + " binary")
    return lines


def _accuracy_lines(cm, tag: str) -> list[str]:
    per, overall = per_class_accuracy(cm)
    lines = [f"[{tag}] overall accuracy: {'n/a' if overall is None else f'{overall:.6f}'}"]
    for name, acc in zip(cm.class_names, per):
        lines.append(f"[{tag}]   {name}: {'n/a' if acc is None else f'{acc:.6f}'}")
    return lines


def _finish(out: Path, name: str, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    (out / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_train_llc(cfg: RunConfig) -> int:
    preset = cfg.resolved_preset()
    if preset.kind != "llc":
        raise ConfigError(f"preset {preset.name!r} is an LBD preset; use train-lbd")
    rng = RngStream(cfg.resolve_seed())
    source, val, test = load_sources(cfg)
    if source is None:
        raise ConfigError("train-llc needs --train or --synthetic")
    data = prepare(source, preset, rng.fork(1), val=val, test=test)
    model, rows = train_llc(data.train, data.val, preset, rng.fork(2), scaling=data.scaling, test=data.test,
                            batch_size=cfg.batch_size, log_interval=cfg.log_interval)
    out = _out(cfg)
    save_model(model, out / "model.fvae")
    write_log(rows, out / "train_log.csv", cfg.log_interval)
    (out / "config.ini").write_text(cfg.dump(), encoding="utf-8")
    lines = [f"preset: {preset.name}", f"steps: {preset.steps}", f"train rows: {len(data.train)}"]
    lines += _write_confusions(model, data.val, out, "val")
    if data.test is not None:
        lines += _write_confusions(model, data.test, out, "test")
    _finish(out, "summary.txt", lines)
    return EXIT_OK


def cmd_train_lbd(cfg: RunConfig) -> int:
    preset = cfg.resolved_preset()
    if preset.kind != "lbd":
        raise ConfigError(f"preset {preset.name!r} is an LLC preset; use train-llc")
    rng = RngStream(cfg.resolve_seed())
    source, val, test = load_sources(cfg)
    if source is None:
        raise ConfigError("train-lbd needs --train or --synthetic")
    data = prepare(source, preset, rng.fork(1), val=val, test=test)
    stage1, stage2 = benign_only(data.train), data.train
    model, rows1, rows2 = train_lbd(stage1, stage2, preset, rng.fork(2), scaling=data.scaling,
                                    lr2=cfg.lr2, batch_size=cfg.batch_size, log_interval=cfg.log_interval)
    out = _out(cfg)
    save_model(model, out / "model.fvae")
    write_log(rows1, out / "stage1_log.csv", cfg.log_interval)
    write_log(rows2, out / "stage2_log.csv", cfg.log_interval)
    (out / "config.ini").write_text(cfg.dump(), encoding="utf-8")
    lines = [f"preset: {preset.name}",
             f"stage 1: steps 1-{preset.steps1}, {len(stage1)} benign rows",
             f"stage 2: steps 1-{preset.steps2}, {len(stage2)} mixed rows",
             f"detector: w={model.head.w!r} b={model.head.b!r}"]
    for tag, ds in (("val", data.val), ("test", data.test)):
        if ds is None or len(ds) == 0:
            continue
        r = reconstruction_scores(np.ascontiguousarray(ds.features), model.vae)
        benign = ds.is_benign()
        mb = float(r[benign].mean()) if benign.any() else float("nan")
        mm = float(r[~benign].mean()) if (~benign).any() else float("nan")
        lines.append(f"[{tag}] mean rloss benign: {mb:.6g}  malicious: {mm:.6g}  ratio: {mm / mb:.4g}")
        lines += _write_confusions(model, ds, out, tag)
    _finish(out, "summary.txt", lines)
    return EXIT_OK


def _need_checkpoint(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ConfigError("--checkpoint is required")
    if not Path(cfg.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {cfg.checkpoint}")
    return load_model(cfg.checkpoint)


def cmd_evaluate(cfg: RunConfig) -> int:
    model = _need_checkpoint(cfg)
    cfg.resolve_seed()
    ds = model.prepare(_eval_data(cfg))
    out = _out(cfg)
    _finish(out, "evaluation.txt", [f"rows: {len(ds)}"] + _write_confusions(model, ds, out, "eval"))
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    rng = RngStream(cfg.resolve_seed())
    if cfg.checkpoint:
        model = load_model(cfg.checkpoint)
        width = model.vae.n_in
        forward = model.infer
    else:
        preset = cfg.resolved_preset()
        width = len(FEATURE_SETS[preset.feature_set])
        vae = build_vae_for_preset(width, preset, rng.fork(1))
        forward = lambda x: reconstruction_scores(x, vae)  # noqa: E731
    batch = rng.fork(2).normal((cfg.batch_size, width))
    result = throughput_bench(forward, batch, iterations=cfg.iterations)
    out = _out(cfg)
    _finish(out, "bench.txt", [result.report()])
    return EXIT_OK


def cmd_gate_sim(cfg: RunConfig) -> int:
    cfg.resolve_seed()
    raw = _eval_data(cfg)
    if cfg.oracle:
        trace = raw
        benign = trace.is_benign().astype(np.float64)
        model = lambda x: benign  # noqa: E731
    else:
        m = _need_checkpoint(cfg)
        trace, model = m.prepare(raw), m
    state = GateState(cfg.threshold, cfg.capacity, cfg.window)
    report = run_gate_sim(trace, model, state)
    out = _out(cfg)
    report.write_csv(out / "gate_reasons.csv")
    _finish(out, "gate_report.txt", [report.text()])
    return EXIT_OK


def cmd_gen_synth(cfg: RunConfig) -> int:
    cfg.resolve_seed()
    if not cfg.synthetic:
        raise ConfigError("gen-synth needs --synthetic")
    spec = _synthetic_spec(cfg)
    ds = gen_synthetic(spec, RngStream(cfg.seed).fork(SOURCE_DRAW))
    path = Path(cfg.output) if cfg.output else _out(cfg) / "synthetic.csv"
    save_csv(ds, path)
    if cfg.spec_out:
        Path(cfg.spec_out).write_text(spec.to_json(), encoding="utf-8")
    print(f"wrote {len(ds)} flows x {ds.width} features to {path}")
    return EXIT_OK


def cmd_importance(cfg: RunConfig) -> int:
    model = _need_checkpoint(cfg)
    rng = RngStream(cfg.resolve_seed())
    ds = model.prepare(_eval_data(cfg))
    report = permutation_importance(model, np.ascontiguousarray(ds.features), ds.labels, rng.fork(1),
                                    cfg.repeats, model.schema.features)
    out = _out(cfg)
    with open(out / "importance.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "accuracy_drop"])
        for rank, (name, score) in enumerate(report.ranked(), start=1):
            w.writerow([rank, name, repr(score)])
    lines = [f"baseline accuracy: {report.baseline:.6f}"]
    lines += [f"{rank:3d}. {name}: {score:.6f}" for rank, (name, score) in enumerate(report.ranked()[:10], 1)]
    _finish(out, "importance.txt", lines)
    return EXIT_OK


COMMANDS = {
    "train-llc": cmd_train_llc,
    "train-lbd": cmd_train_lbd,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "gate-sim": cmd_gate_sim,
    "gen-synth": cmd_gen_synth,
    "importance": cmd_importance,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        rows = getattr(exc, "rows", None)
        if rows:
            shown = ", ".join(map(str, rows[:50]))
            print(f"offending rows: {shown}{' ...' if len(rows) > 50 else ''}", file=sys.stderr)
        return EXIT_DATA
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FlowVaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
