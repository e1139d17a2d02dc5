"""Model fitting/application and the on-disk formats between CLI stages.

Train artifacts are a versioned JSON document (``format``/``version`` keys)
with the hyperparameter snapshot, appliance order, row-major dictionary
entries and final residuals. Estimates are one CSV per appliance: a header
``slot,<day label>...`` followed by one row per time slot, in watts.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .analysis_train import TRAINERS, AnalysisDict, Hyperparams, TrainArtifacts, TrainTrace
from .disagg import disaggregate
from .errors import InvalidArgument, ParseError, SchemaError
from .synthesis import SynthControls, SynthesisDict, SynthTrace, disaggregate_synthesis, train_synthesis

ARTIFACT_FORMAT = "cosparse-nilm/train-artifacts"
ARTIFACT_VERSION = 1
MODELS = ("simple", "distinctive", "disaggregating", "synthesis")


def fit(model, xs, labels, h: Hyperparams = Hyperparams(), synth: SynthControls | None = None) -> TrainArtifacts:
    """Train ``model`` on per-appliance day matrices ``xs`` (all d x n_i)."""
    if model not in MODELS:
        raise InvalidArgument(f"unknown model {model!r}; valid models: {', '.join(MODELS)}")
    labels = [str(k) for k in labels]
    if model != "synthesis":
        return TRAINERS[model](xs, h, labels)
    synth = synth or SynthControls(atoms=h.atoms, seed=h.seed)
    dicts, traces = [], {}
    for i, (x, k) in enumerate(zip(xs, labels)):
        c = dataclasses.replace(synth, seed=synth.seed + i)
        d, _, tr = train_synthesis(x, c.atoms, h.lam, c, appliance_id=k)
        dicts.append(d)
        traces[k] = tr
    return TrainArtifacts("synthesis", dicts, h, traces, synth)


def apply(art: TrainArtifacts, x_agg, h: Hyperparams | None = None):
    """Disaggregate ``x_agg`` with trained artifacts; ``h`` overrides the stored hyperparameters."""
    h = h or art.hyper
    if art.model == "synthesis":
        synth = dataclasses.replace(art.synth or SynthControls(), clip=h.clip)
        return disaggregate_synthesis(x_agg, art.dicts, h.lam, synth)
    return disaggregate(x_agg, art.dicts, h)


def _final_residual(trace):
    if isinstance(trace, TrainTrace):
        v = trace.final_residual
    else:
        v = trace.objective[-1] if trace.objective else float("nan")
    return v if np.isfinite(v) else None


def artifacts_to_dict(art: TrainArtifacts) -> dict:
    mats = [d.op if isinstance(d, AnalysisDict) else d.basis for d in art.dicts]
    out = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "model": art.model,
        "hyper": art.hyper.to_dict(),
        "appliances": art.appliances,
        "slots_per_day": int(mats[0].shape[1] if art.model != "synthesis" else mats[0].shape[0]),
        "dictionaries": [
            {"appliance": d.appliance_id, "rows": int(m.shape[0]), "cols": int(m.shape[1]),
             "entries": [float(v) for v in m.reshape(-1)]}
            for d, m in zip(art.dicts, mats)
        ],
        "final_residuals": {k: _final_residual(t) for k, t in art.traces.items()},
        "iterations": {k: t.iterations for k, t in art.traces.items()},
    }
    if art.model == "synthesis":
        out["synth"] = dataclasses.asdict(art.synth or SynthControls())
    return out


def artifacts_from_dict(doc: dict) -> TrainArtifacts:
    if not isinstance(doc, dict) or doc.get("format") != ARTIFACT_FORMAT:
        raise SchemaError(f"not a train-artifacts document (format != {ARTIFACT_FORMAT!r})")
    if doc.get("version") != ARTIFACT_VERSION:
        raise SchemaError(f"unsupported artifacts version {doc.get('version')!r}")
    model = doc.get("model")
    if model not in MODELS:
        raise SchemaError(f"unknown model {model!r}")
    try:
        h = Hyperparams.from_dict(doc["hyper"])
        dicts = []
        for entry in doc["dictionaries"]:
            m = np.asarray(entry["entries"], dtype=np.float64)
            if m.size != entry["rows"] * entry["cols"]:
                raise SchemaError(f"dictionary for {entry['appliance']!r} has a wrong entry count")
            m = m.reshape(entry["rows"], entry["cols"])
            cls = SynthesisDict if model == "synthesis" else AnalysisDict
            dicts.append(cls(str(entry["appliance"]), m))
        residuals = doc.get("final_residuals", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed artifacts document: {exc!r}") from None
    traces = {}
    for d in dicts:
        v = residuals.get(d.appliance_id)
        v = float("nan") if v is None else float(v)
        traces[d.appliance_id] = (SynthTrace(objective=[v]) if model == "synthesis"
                                  else TrainTrace(residual=[v]))
    synth = SynthControls(**doc.get("synth", {})) if model == "synthesis" else None
    return TrainArtifacts(model, dicts, h, traces, synth)


def save_artifacts(art: TrainArtifacts, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(artifacts_to_dict(art), indent=1) + "\n")
    return path


def load_artifacts(path) -> TrainArtifacts:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                         line=exc.lineno) from None
    return artifacts_from_dict(doc)


def write_traces_csv(art: TrainArtifacts, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["appliance", "iteration", "objective", "residual"])
        for k, t in art.traces.items():
            res = getattr(t, "residual", None) or [float("nan")] * len(t.objective)
            for it, (o, r) in enumerate(zip(t.objective, res), start=1):
                w.writerow([k, it, repr(float(o)), repr(float(r))])


def write_estimate_csv(path, values, day_labels):
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        fh.write("slot," + ",".join(day_labels) + "\n")
        for s, row in enumerate(values):
            fh.write(f"{s}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_estimate_csv(path):
    """Returns ``(values d x n, day_labels)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "slot":
        raise SchemaError(f"{path}:1: expected header starting with 'slot'", line=1)
    labels = rows[0][1:]
    vals = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(labels) + 1:
            raise ParseError(f"{path}:{lineno}: expected {len(labels) + 1} fields", line=lineno)
        try:
            vals.append([float(v) for v in row[1:]])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric value", line=lineno) from None
    if not vals:
        raise SchemaError(f"{path}: no slots")
    return np.array(vals), labels
