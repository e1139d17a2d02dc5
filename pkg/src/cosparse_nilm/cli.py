"""Command-line pipeline: ``synth``, ``train``, ``disaggregate``, ``evaluate``, ``benchmark``.

Every command writes ``resolved_config.json`` next to its outputs; passing
that file back through ``--config`` reproduces the run. Precedence is CLI
flag > config file > default. Failures exit nonzero with a single stderr
line ``error: <category>: <message>``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .analysis_train import Hyperparams
from .benchmark import testing_mode_sweep, training_mode_sweep, write_results
from .datapipe import (
    MANIFEST_NAME,
    load_house_csv,
    load_preset,
    read_manifest,
    split_training_mode,
    synth_generate,
    validate_synth_config,
    write_house,
)
from .errors import ConfigError, NilmError, SchemaError
from .metrics import MetricsReport, disaggregation_accuracy, normalized_error
from .pipeline import (
    MODELS,
    apply,
    fit,
    load_artifacts,
    read_estimate_csv,
    save_artifacts,
    write_estimate_csv,
    write_traces_csv,
)
from .synthesis import SynthControls

RESOLVED = "resolved_config.json"
HYPER_FLAGS = {
    "lam": ("--lambda", float),
    "mu": ("--mu", float),
    "eta": ("--eta", float),
    "gamma": ("--gamma", float),
    "atoms": ("--atoms", int),
    "max_outer": ("--max-outer", int),
    "tol": ("--tol", float),
    "ls_eps": ("--ls-eps", float),
    "bregman_variant": ("--bregman-variant", str),
    "incoherence_variant": ("--incoherence-variant", str),
    "b_init": ("--b-init", str),
    "inner_iters": ("--inner-iters", int),
    "inner_tol": ("--inner-tol", float),
}


class UsageError(NilmError):
    category = "usage"


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config: file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {p} (line {exc.lineno}): {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config: {p} must hold a JSON object")
    return cfg


def _pick(flag, cfg, key, default=None):
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _hyper(args, cfg) -> Hyperparams:
    base = dict(cfg.get("hyper", {}))
    if "seed" not in base:
        base["seed"] = 0
    for name, (flag, _) in HYPER_FLAGS.items():
        v = getattr(args, flag.lstrip("-").replace("-", "_"), None)
        if v is not None:
            base["lambda" if name == "lam" else name] = v
    if args.seed is not None:
        base["seed"] = args.seed
    if getattr(args, "no_clip", False):
        base["clip"] = False
    return Hyperparams.from_dict(base)


def _out_dir(args, cfg):
    out = _pick(args.out, cfg, "out")
    if out is None:
        raise UsageError("--out is required")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_synth(args):
    cfg = _load_config(args.config)
    if cfg.get("command") == "synth":
        synth_cfg, seed = cfg["synth"], cfg.get("seed", 0)
    elif args.preset:
        synth_cfg, seed = load_preset(args.preset), 0
    elif cfg:
        synth_cfg, seed = cfg, cfg.get("seed", 0)
    else:
        raise UsageError("synth needs --config FILE or --preset NAME")
    if args.seed is not None:
        seed = args.seed
    synth_cfg = {k: v for k, v in synth_cfg.items() if k != "seed"}
    resolved = validate_synth_config(synth_cfg)
    out = _out_dir(args, {})
    ds = synth_generate(resolved, seed)
    write_house(ds, out)
    report = {
        "house_id": ds.house_id,
        "seed": seed,
        "days": ds.days,
        "slots_per_day": ds.slots_per_day,
        "appliances": [
            {"label": k, "energy_wh": float(dm.values.sum() * ds.slot_seconds / 3600.0),
             "active_fraction": float(np.mean(dm.values > 0))}
            for k, dm in ds.appliances
        ],
    }
    _dump(report, out / "generation_report.json")
    _dump({"command": "synth", "seed": seed, "synth": resolved}, out / RESOLVED)
    return 0


def _dataset_path(args, cfg):
    path = _pick(args.dataset, cfg, "dataset")
    if path is None:
        raise UsageError("--dataset is required")
    return str(Path(path).resolve())


def cmd_train(args):
    cfg = _load_config(args.config)
    model = _pick(args.model, cfg, "model", "simple")
    if model not in MODELS:
        raise UsageError(f"unknown model {model!r}; valid models: {', '.join(MODELS)}")
    dataset = _dataset_path(args, cfg)
    h = _hyper(args, cfg)
    synth = SynthControls(**{**cfg.get("synth", {}), "atoms": h.atoms, "seed": h.seed})
    fraction = _pick(args.train_fraction, cfg, "train_fraction")
    out = _out_dir(args, cfg)
    ds = load_house_csv(dataset)
    split = None
    if fraction is not None:
        split = split_training_mode(ds, float(fraction), h.seed)
        ds = split.train
    try:
        art = fit(model, ds.matrices, ds.labels, h, synth if model == "synthesis" else None)
    except NilmError as exc:
        where = getattr(exc, "appliance", None)
        it = getattr(exc, "iteration", None)
        if where is not None or it is not None:
            raise type(exc)(f"{exc} [appliance={where}, iteration={it}]") from None
        raise
    save_artifacts(art, out / "artifacts.json")
    write_traces_csv(art, out / "traces.csv")
    if split is not None:
        _dump({"train_days": split.train.day_labels, "test_days": split.test.day_labels}, out / "split.json")
    resolved = {"command": "train", "dataset": dataset, "model": model, "hyper": h.to_dict(),
                "train_fraction": fraction}
    if model == "synthesis":
        resolved["synth"] = dataclasses.asdict(synth)
    _dump(resolved, out / RESOLVED)
    return 0


def cmd_disaggregate(args):
    cfg = _load_config(args.config)
    art_path = _pick(args.artifacts, cfg, "artifacts")
    if art_path is None:
        raise UsageError("--artifacts is required")
    art_path = str(Path(art_path).resolve())
    dataset = _dataset_path(args, cfg)
    days_path = _pick(args.days, cfg, "days")
    art = load_artifacts(art_path)
    cfg_h = dict(art.hyper.to_dict())
    cfg_h.update(cfg.get("hyper", {}))
    h = _hyper(args, {"hyper": cfg_h})
    out = _out_dir(args, cfg)
    ds = load_house_csv(dataset)
    if set(art.appliances) != set(ds.labels):
        raise SchemaError(
            "appliance mismatch: only in artifacts "
            f"{sorted(set(art.appliances) - set(ds.labels))}, only in dataset "
            f"{sorted(set(ds.labels) - set(art.appliances))}"
        )
    if days_path is not None:
        days_path = str(Path(days_path).resolve())
        wanted = json.loads(Path(days_path).read_text())["test_days"]
        pos = {k: j for j, k in enumerate(ds.day_labels)}
        missing = [k for k in wanted if k not in pos]
        if missing:
            raise SchemaError(f"days not in dataset: {missing}")
        ds = ds.select_days([pos[k] for k in wanted])
    res = apply(art, ds.aggregate.values, h)
    files = {}
    for label, est in zip(art.appliances, res.estimates):
        fname = f"{label}.csv"
        write_estimate_csv(out / fname, est, ds.day_labels)
        files[label] = fname
    report = {
        "model": art.model,
        "appliances": art.appliances,
        "files": files,
        "day_labels": ds.day_labels,
        "objective_trace": res.objective_trace,
        "iterations": res.iterations,
        "converged": res.converged,
        "sum_residual": res.sum_residual,
        "clipped": res.clipped,
        "clipped_fraction": dict(zip(art.appliances, res.clipped_fraction)),
    }
    _dump(report, out / "report.json")
    resolved = {"command": "disaggregate", "artifacts": art_path, "dataset": dataset,
                "days": days_path, "hyper": h.to_dict()}
    _dump(resolved, out / RESOLVED)
    return 0


def cmd_evaluate(args):
    cfg = _load_config(args.config)
    est_dir = _pick(args.estimates, cfg, "estimates")
    truth = _pick(args.truth, cfg, "truth")
    out_path = _pick(args.out, cfg, "out")
    if est_dir is None or truth is None or out_path is None:
        raise UsageError("evaluate needs --estimates, --truth and --out")
    est_dir, truth = Path(est_dir).resolve(), Path(truth).resolve()
    out_path = Path(out_path)
    report_path = est_dir / "report.json"
    if report_path.exists():
        files = json.loads(report_path.read_text())["files"]
    else:
        files = {p.stem: p.name for p in sorted(est_dir.glob("*.csv"))}
    if not files:
        raise SchemaError(f"no estimate files in {est_dir}")
    manifest = read_manifest(truth)
    truth_base = truth if truth.is_dir() else truth.parent
    truth_files = {a["label"]: a["file"] for a in manifest["appliances"]}
    for label in files:
        if label not in truth_files or not (truth_base / truth_files[label]).exists():
            raise SchemaError(f"missing truth for appliance {label!r}")
    ds = load_house_csv(truth)
    est, tru, labels, days = [], [], [], None
    for label, fname in files.items():
        vals, dl = read_estimate_csv(est_dir / fname)
        days = days or dl
        if dl != days:
            raise SchemaError(f"estimate {fname} covers different days")
        est.append(vals)
        labels.append(label)
    pos = {k: j for j, k in enumerate(ds.day_labels)}
    missing = [k for k in days if k not in pos]
    if missing:
        raise SchemaError(f"truth lacks days {missing}")
    cols = [pos[k] for k in days]
    agg = ds.aggregate.values[:, cols]
    for label, e in zip(labels, est):
        t = ds.appliance(label).values[:, cols]
        if t.shape != e.shape:
            raise SchemaError(f"shape mismatch for {label!r}: estimate {e.shape}, truth {t.shape}")
        tru.append(t)
    acc = disaggregation_accuracy(est, tru, agg)
    nes = [normalized_error(e, t) if np.sum(t) > 0 else math.nan for e, t in zip(est, tru)]
    rep = MetricsReport(acc, labels, nes, acc, 0.0, 1, {"coverage": ds.coverage, "days": len(days)})
    json_path = out_path if out_path.suffix == ".json" else out_path.with_suffix(".json")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    _dump(rep.to_dict(), json_path)
    with open(json_path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rep.csv_header())
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in rep.csv_row()])
    resolved = {"command": "evaluate", "estimates": str(est_dir), "truth": str(truth), "out": str(json_path)}
    _dump(resolved, json_path.with_name(json_path.stem + "." + RESOLVED))
    return 0


def _house_from_spec(spec, default_seed):
    if isinstance(spec, str):
        return load_house_csv(spec)
    if "preset" in spec:
        return synth_generate(load_preset(spec["preset"]), spec.get("seed", default_seed))
    if "synth" in spec:
        return synth_generate(spec["synth"], spec.get("seed", default_seed))
    if "dataset" in spec:
        return load_house_csv(spec["dataset"])
    raise ConfigError("house entries need 'preset', 'synth' or 'dataset'")


def cmd_benchmark(args):
    cfg = _load_config(args.config)
    if not cfg:
        raise UsageError("benchmark needs --config FILE")
    cfg = dict(cfg)
    cfg.pop("command", None)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    protocol = cfg.get("protocol", "training_mode")
    models = cfg.get("models", ["simple", "distinctive", "disaggregating", "synthesis"])
    h = Hyperparams.from_dict({**cfg.get("hyper", {})})
    synth = cfg.get("synth", {})
    workers = int(args.workers if args.workers is not None else cfg.get("workers", 1))
    alpha = cfg.get("alpha", 0.01)
    out = _out_dir(args, {})
    if protocol == "training_mode":
        ds = _house_from_spec(cfg.get("house", {"preset": cfg.get("preset", "noisy")}), seed)
        fractions = [float(f) for f in cfg.get("fractions", [0.1, 0.2, 0.3, 0.4, 0.5])]
        reps = int(cfg.get("replications", 10))
        res = training_mode_sweep(ds, fractions, models, reps, seed, h, synth, workers, alpha)
    elif protocol == "testing_mode":
        houses = [_house_from_spec(s, seed + k) for k, s in enumerate(cfg.get("houses", []))]
        res = testing_mode_sweep(houses, models, seed, h, synth, workers, alpha)
    else:
        raise ConfigError(f"protocol: unknown protocol {protocol!r}")
    write_results(res, out)
    resolved = {**cfg, "command": "benchmark", "seed": seed, "protocol": protocol, "models": models,
                "hyper": h.to_dict(), "alpha": alpha}
    resolved.pop("workers", None)
    _dump(resolved, out / RESOLVED)
    if res.all_failed:
        raise NilmError("every benchmark cell failed; see results.csv")
    return 0


# -- argument parsing -----------------------------------------------------------


def _common(p, out_help="output directory"):
    p.add_argument("--config", help="JSON config or a resolved_config.json snapshot")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=out_help)


def _hyper_flags(p):
    for name, (flag, typ) in HYPER_FLAGS.items():
        p.add_argument(flag, type=typ, dest=flag.lstrip("-").replace("-", "_"))


def build_parser():
    parser = argparse.ArgumentParser(prog="cosparse-nilm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({_backend.name} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic house")
    _common(p)
    p.add_argument("--preset", help="built-in config: disjoint or noisy")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="learn per-appliance dictionaries")
    _common(p)
    p.add_argument("--dataset", help="house directory or manifest")
    p.add_argument("--model", help=f"one of {', '.join(MODELS)}")
    p.add_argument("--train-fraction", type=float, help="train on a random fraction of days (writes split.json)")
    _hyper_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("disaggregate", help="split the aggregate with trained dictionaries")
    _common(p)
    p.add_argument("--artifacts", help="artifacts.json from train")
    p.add_argument("--dataset", help="house directory or manifest")
    p.add_argument("--days", help="split.json; restrict to its test days")
    p.add_argument("--no-clip", action="store_true", help="keep negative estimates")
    _hyper_flags(p)
    p.set_defaults(func=cmd_disaggregate)

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    _common(p, "report path (.json; a .csv row is written alongside)")
    p.add_argument("--estimates", help="output directory of disaggregate")
    p.add_argument("--truth", help="house directory or manifest with sub-metered channels")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="accuracy sweep over training volume and models")
    _common(p)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except NilmError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError) as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
