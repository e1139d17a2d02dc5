"""Smart-meter ingestion, day matrices, evaluation splits and synthetic houses.

Channel files are CSV with header ``timestamp,watts`` (UTC epoch seconds,
decimal watts). A house is a directory with a ``manifest.json`` mapping
channel files to appliance labels and to the aggregate (mains) channel.
Days are cut at UTC midnight.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, EmptyDataError, InvalidArgument, ParseError, ProtocolError, SchemaError

SECONDS_PER_DAY = 86400
MANIFEST_NAME = "manifest.json"
HOUSE_FORMAT = "cosparse-nilm/house"
SIGNATURES = ("two_state", "multi_state", "periodic_cycler", "continuous_varying")


@dataclass
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray
    channel_id: str = "channel"
    missing: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps.shape != self.values.shape or self.timestamps.ndim != 1:
            raise InvalidArgument("timestamps and values must be 1-D and of equal length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidArgument("timestamps must be strictly increasing")
        if self.missing is None:
            self.missing = np.zeros(self.values.shape, dtype=bool)

    def __len__(self):
        return len(self.timestamps)


@dataclass
class DayMatrix:
    values: np.ndarray
    day_labels: list
    channel_id: str = "channel"
    dropped_days: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.day_labels):
            raise InvalidArgument("values must be d x n with one label per day")
        if len(set(self.day_labels)) != len(self.day_labels):
            raise InvalidArgument("day labels must be distinct")

    @property
    def slots_per_day(self) -> int:
        return self.values.shape[0]

    @property
    def days(self) -> int:
        return self.values.shape[1]

    def select(self, columns) -> "DayMatrix":
        columns = list(columns)
        return DayMatrix(self.values[:, columns].copy(), [self.day_labels[c] for c in columns], self.channel_id)


@dataclass
class HouseDataset:
    house_id: str
    appliances: list  # (label, DayMatrix) pairs in a fixed order
    aggregate: DayMatrix
    coverage: float = 1.0
    slot_seconds: int = 600

    def __post_init__(self):
        for label, dm in self.appliances:
            if dm.values.shape != self.aggregate.values.shape or dm.day_labels != self.aggregate.day_labels:
                raise InvalidArgument(f"appliance {label!r} does not share the aggregate's days/slots")

    @property
    def labels(self) -> list:
        return [label for label, _ in self.appliances]

    @property
    def matrices(self) -> list:
        return [dm.values for _, dm in self.appliances]

    @property
    def day_labels(self) -> list:
        return self.aggregate.day_labels

    @property
    def slots_per_day(self) -> int:
        return self.aggregate.slots_per_day

    @property
    def days(self) -> int:
        return self.aggregate.days

    def appliance(self, label) -> DayMatrix:
        for k, dm in self.appliances:
            if k == label:
                return dm
        raise KeyError(label)

    def select_days(self, columns) -> "HouseDataset":
        columns = sorted(columns)
        return HouseDataset(
            self.house_id,
            [(k, dm.select(columns)) for k, dm in self.appliances],
            self.aggregate.select(columns),
            _coverage([dm.values[:, columns] for _, dm in self.appliances], self.aggregate.values[:, columns]),
            self.slot_seconds,
        )

    def restrict(self, labels) -> "HouseDataset":
        keep = [(k, dm) for k, dm in self.appliances if k in set(labels)]
        return HouseDataset(
            self.house_id, keep, self.aggregate,
            _coverage([dm.values for _, dm in keep], self.aggregate.values), self.slot_seconds,
        )


def _coverage(apps, agg) -> float:
    total = float(np.sum(agg))
    if total <= 0:
        return 0.0
    return float(min(1.0, max(0.0, sum(float(np.sum(a)) for a in apps) / total)))


def resample_mean(ts: TimeSeries, slot_seconds: int, sample_seconds: int | None = None) -> TimeSeries:
    """Average ``ts`` over epoch-aligned windows of ``slot_seconds``.

    Output timestamps are window starts covering the span of ``ts``. A window
    holding fewer than half of the expected ``slot_seconds / sample_seconds``
    samples is marked missing (value NaN). ``sample_seconds`` defaults to the
    median spacing of the input.
    """
    slot_seconds = int(slot_seconds)
    if slot_seconds < 1:
        raise InvalidArgument("slot_seconds must be >= 1")
    if len(ts) == 0:
        raise InvalidArgument("cannot resample an empty series")
    if sample_seconds is None:
        sample_seconds = int(np.median(np.diff(ts.timestamps))) if len(ts) > 1 else slot_seconds
    expected = slot_seconds / max(1, sample_seconds)
    win = ts.timestamps // slot_seconds
    first, last = int(win[0]), int(win[-1])
    nwin = last - first + 1
    idx = win - first
    ok = ~ts.missing
    counts = np.bincount(idx[ok], minlength=nwin)
    sums = np.bincount(idx[ok], weights=ts.values[ok], minlength=nwin)
    missing = counts < 0.5 * expected
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts
    means[missing] = np.nan
    stamps = (np.arange(nwin, dtype=np.int64) + first) * slot_seconds
    return TimeSeries(stamps, means, ts.channel_id, missing)


def day_label(day_index: int) -> str:
    return (_dt.date(1970, 1, 1) + _dt.timedelta(days=int(day_index))).isoformat()


def day_index(label: str) -> int:
    return (_dt.date.fromisoformat(label) - _dt.date(1970, 1, 1)).days


def build_day_matrix(ts: TimeSeries, slots_per_day: int = 144) -> DayMatrix:
    """Arrange a resampled series into a slots-by-days matrix (UTC days).

    Days with any missing or absent slot are dropped and listed in
    ``dropped_days``.
    """
    slots_per_day = int(slots_per_day)
    if slots_per_day < 1 or SECONDS_PER_DAY % slots_per_day:
        raise InvalidArgument(f"slots_per_day must divide {SECONDS_PER_DAY}")
    slot_seconds = SECONDS_PER_DAY // slots_per_day
    if np.any(ts.timestamps % slot_seconds):
        raise InvalidArgument("series is not aligned to the slot grid; resample first")
    days = ts.timestamps // SECONDS_PER_DAY
    slots = (ts.timestamps % SECONDS_PER_DAY) // slot_seconds
    cols, labels, dropped = [], [], []
    for day in np.unique(days):
        sel = days == day
        col = np.full(slots_per_day, np.nan)
        col[slots[sel]] = np.where(ts.missing[sel], np.nan, ts.values[sel])
        if np.all(np.isfinite(col)):
            cols.append(col)
            labels.append(day_label(day))
        else:
            dropped.append(day_label(day))
    if not cols:
        raise EmptyDataError(f"channel {ts.channel_id!r} has no complete day")
    return DayMatrix(np.column_stack(cols), labels, ts.channel_id, dropped)


def read_channel_csv(path, channel_id=None) -> TimeSeries:
    """Parse a ``timestamp,watts`` file; errors name the offending line."""
    path = Path(path)
    channel_id = channel_id or path.stem
    stamps, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["timestamp", "watts"]:
            raise SchemaError(f"{path}:1: expected header 'timestamp,watts', got {','.join(header)!r}", line=1)
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}", line=lineno)
            try:
                t = int(row[0])
                v = float(row[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cannot parse {row!r}", line=lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"{path}:{lineno}: non-finite value", line=lineno)
            if prev is not None and t <= prev:
                kind = "duplicate" if t == prev else "out-of-order"
                raise SchemaError(f"{path}:{lineno}: {kind} timestamp {t}", line=lineno)
            prev = t
            stamps.append(t)
            values.append(v)
    if not stamps:
        raise EmptyDataError(f"{path}: no data rows")
    return TimeSeries(np.array(stamps, dtype=np.int64), np.array(values), channel_id)


def write_channel_csv(path, timestamps, values):
    with open(path, "w", newline="") as fh:
        fh.write("timestamp,watts\n")
        for t, v in zip(timestamps, values):
            fh.write(f"{int(t)},{float(v)!r}\n")


def _manifest_path(path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_manifest(path) -> dict:
    mpath = _manifest_path(path)
    if not mpath.exists():
        raise EmptyDataError(f"{mpath}: manifest not found")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{mpath}: invalid JSON ({exc})", line=exc.lineno) from None
    for key in ("aggregate", "appliances"):
        if key not in manifest:
            raise SchemaError(f"{mpath}: manifest lacks {key!r}")
    return manifest


def load_house_csv(path) -> HouseDataset:
    """Load a house from its manifest (or the directory holding it).

    Every channel is resampled to the manifest's ``slot_seconds`` and cut into
    complete UTC days; only days complete on all channels are kept.
    """
    mpath = _manifest_path(path)
    manifest = read_manifest(mpath)
    base = mpath.parent
    slot_seconds = int(manifest.get("slot_seconds", 600))
    slots_per_day = int(manifest.get("slots_per_day", SECONDS_PER_DAY // slot_seconds))
    if slot_seconds * slots_per_day != SECONDS_PER_DAY:
        raise SchemaError(f"{mpath}: slot_seconds * slots_per_day must equal one day")
    channels = [("__aggregate__", manifest["aggregate"])] + [
        (a["label"], a["file"]) for a in manifest["appliances"]
    ]
    mats = {}
    for label, fname in channels:
        ts = read_channel_csv(base / fname, label)
        mats[label] = build_day_matrix(resample_mean(ts, slot_seconds), slots_per_day)
    common = set.intersection(*(set(dm.day_labels) for dm in mats.values()))
    if not common:
        raise EmptyDataError(f"{mpath}: no day is complete on every channel")
    order = sorted(common)

    def align(dm):
        pos = {k: j for j, k in enumerate(dm.day_labels)}
        return dm.select([pos[k] for k in order])

    agg = align(mats["__aggregate__"])
    agg.channel_id = "aggregate"
    apps = [(label, align(mats[label])) for label, _ in channels[1:]]
    return HouseDataset(
        str(manifest.get("house_id", base.name)),
        apps,
        agg,
        _coverage([dm.values for _, dm in apps], agg.values),
        slot_seconds,
    )


def write_house(ds: HouseDataset, out_dir, extra=None) -> Path:
    """Write channel CSVs and a manifest; values use shortest round-trip repr."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    slot = ds.slot_seconds
    stamps = np.array(
        [day_index(k) * SECONDS_PER_DAY + s * slot for k in ds.day_labels for s in range(ds.slots_per_day)],
        dtype=np.int64,
    )

    def flat(dm):
        return dm.values.T.reshape(-1)

    write_channel_csv(out / "aggregate.csv", stamps, flat(ds.aggregate))
    entries = []
    for k, (label, dm) in enumerate(ds.appliances):
        fname = f"appliance_{k:02d}_{_safe(label)}.csv"
        write_channel_csv(out / fname, stamps, flat(dm))
        entries.append({"label": label, "file": fname})
    manifest = {
        "format": HOUSE_FORMAT,
        "version": 1,
        "house_id": ds.house_id,
        "slot_seconds": slot,
        "slots_per_day": ds.slots_per_day,
        "aggregate": "aggregate.csv",
        "appliances": entries,
    }
    if extra:
        manifest.update(extra)
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def _safe(label):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in str(label))


class Split(NamedTuple):
    train: object
    test: object
    report: dict


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def split_training_mode(ds: HouseDataset, fraction: float, seed: int) -> Split:
    """Random day split: ``round_half_up(fraction * n)`` days train, the rest test."""
    if not 0 < fraction < 1:
        raise InvalidArgument(f"fraction must be in (0, 1), got {fraction}")
    n = ds.days
    k = round_half_up(fraction * n)
    if k < 1 or k > n - 1:
        raise InvalidArgument(f"fraction {fraction} of {n} days leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    train_cols = sorted(int(c) for c in perm[:k])
    test_cols = sorted(int(c) for c in perm[k:])
    return Split(ds.select_days(train_cols), ds.select_days(test_cols),
                 {"train_days": train_cols, "test_days": test_cols})


def split_testing_mode(houses, train_house: int) -> Split:
    """Train on one whole house, test on the others, over the appliances all houses share."""
    houses = list(houses)
    if len(houses) < 2:
        raise ProtocolError("testing mode needs at least 2 houses")
    if not 0 <= train_house < len(houses):
        raise InvalidArgument(f"train_house {train_house} out of range")
    if len({h.slots_per_day for h in houses}) != 1:
        raise ProtocolError("houses disagree on slots per day")
    sets = [set(h.labels) for h in houses]
    shared = set.intersection(*sets)
    if not shared:
        raise ProtocolError("no appliance is present in every house")
    dropped = sorted(set.union(*sets) - shared)
    order = [k for k in houses[train_house].labels if k in shared]
    restricted = []
    for h in houses:
        r = h.restrict(shared)
        r.appliances = [(k, r.appliance(k)) for k in order]
        restricted.append(r)
    test = [h for j, h in enumerate(restricted) if j != train_house]
    return Split(restricted[train_house], test, {"shared": order, "dropped": dropped})


# -- synthetic houses --------------------------------------------------------


def _cfg_error(field_name, msg):
    return ConfigError(f"{field_name}: {msg}")


def _num(spec, key, where, default=None, lo=None, hi=None, integer=False):
    if key not in spec:
        if default is None:
            raise _cfg_error(f"{where}.{key}", "missing")
        return default
    v = spec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise _cfg_error(f"{where}.{key}", f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise _cfg_error(f"{where}.{key}", f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise _cfg_error(f"{where}.{key}", f"must be >= {lo}")
    if hi is not None and v > hi:
        raise _cfg_error(f"{where}.{key}", f"must be <= {hi}")
    return int(v) if integer else float(v)


def validate_synth_config(cfg) -> dict:
    """Check a synthetic-house config and fill defaults; raises ``ConfigError`` naming the field."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    out = {
        "house_id": str(cfg.get("house_id", "synthetic")),
        "days": _num(cfg, "days", "config", lo=1, integer=True),
        "slots_per_day": _num(cfg, "slots_per_day", "config", 144, lo=1, integer=True),
        "start_date": str(cfg.get("start_date", "2020-01-01")),
        "noise": _num(cfg, "noise", "config", 0.0, lo=0),
    }
    if SECONDS_PER_DAY % out["slots_per_day"]:
        raise _cfg_error("config.slots_per_day", f"must divide {SECONDS_PER_DAY}")
    try:
        _dt.date.fromisoformat(out["start_date"])
    except ValueError:
        raise _cfg_error("config.start_date", "expected YYYY-MM-DD") from None
    apps = cfg.get("appliances")
    if not isinstance(apps, list) or not apps:
        raise _cfg_error("config.appliances", "expected a non-empty list")
    d = out["slots_per_day"]
    seen = set()
    out["appliances"] = []
    for k, a in enumerate(apps):
        where = f"appliances[{k}]"
        if not isinstance(a, dict):
            raise _cfg_error(where, "expected an object")
        label = str(a.get("label", f"appliance_{k}"))
        if label in seen:
            raise _cfg_error(f"{where}.label", f"duplicate label {label!r}")
        seen.add(label)
        kind = a.get("type")
        if kind not in SIGNATURES:
            raise _cfg_error(f"{where}.type", f"must be one of {SIGNATURES}")
        band = a.get("band", [0, d])
        if (not isinstance(band, list) or len(band) != 2 or not all(isinstance(b, int) for b in band)
                or not 0 <= band[0] < band[1] <= d):
            raise _cfg_error(f"{where}.band", f"expected [start, end) with 0 <= start < end <= {d}")
        spec = {
            "label": label,
            "type": kind,
            "band": list(band),
            "noise": _num(a, "noise", where, out["noise"], lo=0),
            "day_prob": _num(a, "day_prob", where, 1.0, lo=0, hi=1),
        }
        if kind in ("two_state", "multi_state"):
            spec["duty"] = _num(a, "duty", where, lo=0, hi=1)
            spec["occurrences"] = _num(a, "occurrences", where, 1, lo=1, integer=True)
        if kind == "two_state":
            spec["power"] = _num(a, "power", where, lo=0)
        elif kind == "multi_state":
            levels = a.get("levels")
            if not isinstance(levels, list) or not levels or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0 for v in levels
            ):
                raise _cfg_error(f"{where}.levels", "expected a non-empty list of nonnegative watts")
            spec["levels"] = [float(v) for v in levels]
        elif kind == "periodic_cycler":
            spec["power"] = _num(a, "power", where, lo=0)
            spec["period"] = _num(a, "period", where, lo=1, integer=True)
            spec["duty"] = _num(a, "duty", where, lo=0, hi=1)
        else:
            spec["base"] = _num(a, "base", where, lo=0)
            spec["amplitude"] = _num(a, "amplitude", where, 0.0, lo=0)
            spec["period"] = _num(a, "period", where, float(band[1] - band[0]), lo=1)
        out["appliances"].append(spec)
    return out


def _runs(rng, a, b, duty, occurrences):
    """Boolean mask of ``occurrences`` on-runs covering about ``duty`` of ``[a, b)``."""
    mask = np.zeros(b - a, dtype=bool)
    length = round_half_up(duty * (b - a) / occurrences)
    if length == 0:
        return mask, []
    starts = []
    for _ in range(occurrences):
        s = int(rng.integers(0, b - a - length + 1))
        mask[s:s + length] = True
        starts.append(s)
    return mask, starts


def _signature_day(spec, d, rng):
    col = np.zeros(d)
    a, b = spec["band"]
    if rng.random() >= spec["day_prob"]:
        return col
    kind = spec["type"]
    if kind == "two_state":
        mask, _ = _runs(rng, a, b, spec["duty"], spec["occurrences"])
        col[a:b][mask] = spec["power"]
    elif kind == "multi_state":
        length = round_half_up(spec["duty"] * (b - a) / spec["occurrences"])
        levels = np.asarray(spec["levels"])
        for _ in range(spec["occurrences"]):
            if length == 0:
                break
            s = a + int(rng.integers(0, b - a - length + 1))
            phase = np.minimum((np.arange(length) * len(levels)) // length, len(levels) - 1)
            col[s:s + length] = levels[phase]
    elif kind == "periodic_cycler":
        period = spec["period"]
        on = round_half_up(spec["duty"] * period)
        offset = int(rng.integers(0, period))
        t = np.arange(b - a)
        col[a:b][((t + offset) % period) < on] = spec["power"]
    else:
        t = np.arange(b - a)
        shift = rng.uniform(0, 2 * np.pi)
        wave = spec["base"] + spec["amplitude"] * np.sin(2 * np.pi * t / spec["period"] + shift)
        col[a:b] = np.maximum(wave, 0.0)
    return col


def synth_generate(cfg, seed: int) -> HouseDataset:
    """Deterministic synthetic house from a signature config.

    Each appliance draws from its own child of ``SeedSequence(seed)``, adds
    Gaussian noise truncated at zero, and is rounded to milliwatts. The
    aggregate is the exact element-wise sum of the appliance matrices.
    """
    cfg = validate_synth_config(cfg)
    d, n = cfg["slots_per_day"], cfg["days"]
    start = day_index(cfg["start_date"])
    labels = [day_label(start + k) for k in range(n)]
    children = np.random.SeedSequence(int(seed)).spawn(len(cfg["appliances"]))
    apps = []
    for spec, child in zip(cfg["appliances"], children):
        rng = np.random.default_rng(child)
        m = np.column_stack([_signature_day(spec, d, rng) for _ in range(n)])
        if spec["noise"] > 0:
            m = np.maximum(m + spec["noise"] * rng.standard_normal(m.shape), 0.0)
        m = np.round(m, 3) + 0.0
        apps.append((spec["label"], DayMatrix(m, list(labels), spec["label"])))
    agg = np.zeros((d, n))
    for _, dm in apps:
        agg = agg + dm.values
    return HouseDataset(
        cfg["house_id"], apps, DayMatrix(agg, list(labels), "aggregate"), 1.0, SECONDS_PER_DAY // d
    )


PRESET_DIR = Path(__file__).parent / "presets"


def load_preset(name: str) -> dict:
    path = PRESET_DIR / f"{name}.json"
    if not path.exists():
        available = sorted(p.stem for p in PRESET_DIR.glob("*.json"))
        raise ConfigError(f"preset: unknown preset {name!r}; available {available}")
    return json.loads(path.read_text())
