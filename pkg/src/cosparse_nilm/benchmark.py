"""Accuracy sweeps over training volume, models and random splits.

One cell = (training fraction, model, replication): split the days, train,
disaggregate the test aggregate, score it. Every model sees the same split in
a given replication so results can be compared with paired t-tests. Cells
run in a process pool and are collected back in (fraction, model,
replication) order; a failing cell is recorded and the sweep moves on.
"""
from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis_train import Hyperparams
from .errors import ConfigError, NilmError
from .metrics import disaggregation_accuracy, normalized_error, paired_t_test, summarize_splits
from .pipeline import MODELS, apply, fit
from .synthesis import SynthControls


@dataclass
class Cell:
    fraction: float
    model: str
    replication: int
    split_seed: int
    status: str = "ok"
    accuracy: float = math.nan
    normalized_errors: list = field(default_factory=list)
    train_house: str = ""
    test_house: str = ""


def replication_seed(seed: int, replication: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(replication)]).generate_state(1)[0])


def score(est, test):
    acc = disaggregation_accuracy(est, test.matrices, test.aggregate.values)
    nes = []
    for e, t in zip(est, test.matrices):
        nes.append(normalized_error(e, t) if np.sum(t) > 0 else math.nan)
    return acc, nes


def run_cell(args):
    """Train on ``train``, disaggregate ``test``; never raises for solver failures."""
    cell, train, test, h, synth = args
    try:
        art = fit(cell.model, train.matrices, train.labels, h.replace(seed=cell.split_seed),
                  SynthControls(**{**synth, "seed": cell.split_seed}) if cell.model == "synthesis" else None)
        res = apply(art, test.aggregate.values)
        cell.accuracy, cell.normalized_errors = score(res.estimates, test)
    except (NilmError, ArithmeticError, np.linalg.LinAlgError) as exc:
        cell.status = f"failed:{getattr(exc, 'category', type(exc).__name__)}"
        cell.normalized_errors = [math.nan] * len(test.labels)
    return cell


def _map(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class SweepResult:
    cells: list
    labels: list
    summary: list
    ttests: list
    protocol: str = "training_mode"

    @property
    def all_failed(self) -> bool:
        return all(c.status != "ok" for c in self.cells)


def training_mode_sweep(ds, fractions, models, replications, seed=0, h=Hyperparams(), synth=None,
                        workers=1, alpha=0.01) -> SweepResult:
    """Random day splits of one house at each training fraction."""
    from .datapipe import split_training_mode

    synth = dict(synth or {})
    _check_models(models)
    jobs = []
    for frac, model, rep in itertools.product(fractions, models, range(replications)):
        s = replication_seed(seed, rep)
        split = split_training_mode(ds, frac, s)
        jobs.append((Cell(float(frac), model, rep, s, train_house=ds.house_id, test_house=ds.house_id),
                     split.train, split.test, h, synth))
    cells = _map(run_cell, jobs, workers)
    return _finish(cells, ds.labels, fractions, models, alpha, "training_mode")


def testing_mode_sweep(houses, models, seed=0, h=Hyperparams(), synth=None, workers=1,
                       alpha=0.01) -> SweepResult:
    """Train on each house in turn and test on every other house."""
    from .datapipe import split_testing_mode

    synth = dict(synth or {})
    _check_models(models)
    jobs = []
    labels = None
    for k in range(len(houses)):
        split = split_testing_mode(houses, k)
        labels = labels or split.report["shared"]
        for model in models:
            for j, test in enumerate(split.test):
                jobs.append((Cell(math.nan, model, k, replication_seed(seed, k),
                                  train_house=split.train.house_id, test_house=test.house_id),
                             split.train, test, h, synth))
    cells = _map(run_cell, jobs, workers)
    return _finish(cells, labels, [math.nan], models, alpha, "testing_mode")


def _check_models(models):
    bad = [m for m in models if m not in MODELS]
    if bad or not models:
        raise ConfigError(f"models: unknown {bad}; valid models: {', '.join(MODELS)}")


def _same(a, b):
    return (math.isnan(a) and math.isnan(b)) or a == b


def _finish(cells, labels, fractions, models, alpha, protocol):
    summary, ttests = [], []
    for frac in fractions:
        by_model = {}
        for m in models:
            sel = [c for c in cells if _same(c.fraction, frac) and c.model == m]
            ok = [c.accuracy for c in sel if c.status == "ok"]
            row = {"fraction": frac, "model": m, "cells": len(sel), "ok": len(ok),
                   "mean_accuracy": math.nan, "std_accuracy": math.nan}
            if ok:
                s = summarize_splits(ok)
                row["mean_accuracy"], row["std_accuracy"] = s.mean, s.std
            summary.append(row)
            by_model[m] = {(c.replication, c.test_house): c for c in sel}
        for a, b in itertools.combinations(models, 2):
            keys = sorted(k for k in by_model[a] if k in by_model[b]
                          and by_model[a][k].status == "ok" and by_model[b][k].status == "ok")
            row = {"fraction": frac, "model_a": a, "model_b": b, "pairs": len(keys),
                   "t": math.nan, "significant": False, "alpha": alpha}
            if len(keys) >= 2:
                tt = paired_t_test([by_model[a][k].accuracy for k in keys],
                                   [by_model[b][k].accuracy for k in keys], alpha)
                row["t"], row["significant"] = tt.t, tt.significant
            ttests.append(row)
    return SweepResult(cells, list(labels), summary, ttests, protocol)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_results(res: SweepResult, out_dir):
    """Write ``results.csv`` (one row per cell), ``summary.csv`` and ``ttests.csv``."""
    with open(out_dir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fraction", "model", "replication", "split_seed", "train_house", "test_house",
                    "status", "accuracy"] + [f"ne_{k}" for k in res.labels])
        for c in res.cells:
            w.writerow([_fmt(c.fraction), c.model, c.replication, c.split_seed, c.train_house,
                        c.test_house, c.status, _fmt(c.accuracy)] + [_fmt(v) for v in c.normalized_errors])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = ["fraction", "model", "cells", "ok", "mean_accuracy", "std_accuracy"]
        w.writerow(keys)
        for row in res.summary:
            w.writerow([_fmt(row[k]) for k in keys])
    with open(out_dir / "ttests.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = ["fraction", "model_a", "model_b", "pairs", "t", "significant", "alpha"]
        w.writerow(keys)
        for row in res.ttests:
            w.writerow([_fmt(row[k]) for k in keys])
    if res.protocol == "testing_mode":
        _write_house_table(res, out_dir)


def _write_house_table(res, out_dir):
    """Per test-house mean accuracy by model (rows = houses, columns = models)."""
    models = list(dict.fromkeys(c.model for c in res.cells))
    houses = list(dict.fromkeys(c.test_house for c in res.cells))
    with open(out_dir / "house_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["house"] + models)
        for hname in houses:
            row = [hname]
            for m in models:
                acc = [c.accuracy for c in res.cells if c.test_house == hname and c.model == m and c.status == "ok"]
                row.append(repr(float(np.mean(acc))) if acc else "nan")
            w.writerow(row)
