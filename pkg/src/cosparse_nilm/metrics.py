"""Evaluation metrics, split summaries and paired t-tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument, UndefinedMetricError

# two-sided Student t critical values, df = 1..200 (index df - 1)
_T975 = (
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004,
    2.262157, 2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905,
    2.109816, 2.100922, 2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
    2.059539, 2.055529, 2.051831, 2.048407, 2.045230, 2.042272, 2.039513, 2.036933,
    2.034515, 2.032245, 2.030108, 2.028094, 2.026192, 2.024394, 2.022691, 2.021075,
    2.019541, 2.018082, 2.016692, 2.015368, 2.014103, 2.012896, 2.011741, 2.010635,
    2.009575, 2.008559, 2.007584, 2.006647, 2.005746, 2.004879, 2.004045, 2.003241,
    2.002465, 2.001717, 2.000995, 2.000298, 1.999624, 1.998972, 1.998341, 1.997730,
    1.997138, 1.996564, 1.996008, 1.995469, 1.994945, 1.994437, 1.993943, 1.993464,
    1.992997, 1.992543, 1.992102, 1.991673, 1.991254, 1.990847, 1.990450, 1.990063,
    1.989686, 1.989319, 1.988960, 1.988610, 1.988268, 1.987934, 1.987608, 1.987290,
    1.986979, 1.986675, 1.986377, 1.986086, 1.985802, 1.985523, 1.985251, 1.984984,
    1.984723, 1.984467, 1.984217, 1.983972, 1.983731, 1.983495, 1.983264, 1.983038,
    1.982815, 1.982597, 1.982383, 1.982173, 1.981967, 1.981765, 1.981567, 1.981372,
    1.981180, 1.980992, 1.980808, 1.980626, 1.980448, 1.980272, 1.980100, 1.979930,
    1.979764, 1.979600, 1.979439, 1.979280, 1.979124, 1.978971, 1.978820, 1.978671,
    1.978524, 1.978380, 1.978239, 1.978099, 1.977961, 1.977826, 1.977692, 1.977561,
    1.977431, 1.977304, 1.977178, 1.977054, 1.976931, 1.976811, 1.976692, 1.976575,
    1.976460, 1.976346, 1.976233, 1.976122, 1.976013, 1.975905, 1.975799, 1.975694,
    1.975590, 1.975488, 1.975387, 1.975288, 1.975189, 1.975092, 1.974996, 1.974902,
    1.974808, 1.974716, 1.974625, 1.974535, 1.974446, 1.974358, 1.974271, 1.974185,
    1.974100, 1.974017, 1.973934, 1.973852, 1.973771, 1.973691, 1.973612, 1.973534,
    1.973457, 1.973381, 1.973305, 1.973231, 1.973157, 1.973084, 1.973012, 1.972941,
    1.972870, 1.972800, 1.972731, 1.972663, 1.972595, 1.972528, 1.972462, 1.972396,
    1.972332, 1.972268, 1.972204, 1.972141, 1.972079, 1.972017, 1.971957, 1.971896,
)

_T995 = (
    63.656741, 9.924843, 5.840909, 4.604095, 4.032143, 3.707428, 3.499483, 3.355387,
    3.249836, 3.169273, 3.105807, 3.054540, 3.012276, 2.976843, 2.946713, 2.920782,
    2.898231, 2.878440, 2.860935, 2.845340, 2.831360, 2.818756, 2.807336, 2.796940,
    2.787436, 2.778715, 2.770683, 2.763262, 2.756386, 2.749996, 2.744042, 2.738481,
    2.733277, 2.728394, 2.723806, 2.719485, 2.715409, 2.711558, 2.707913, 2.704459,
    2.701181, 2.698066, 2.695102, 2.692278, 2.689585, 2.687013, 2.684556, 2.682204,
    2.679952, 2.677793, 2.675722, 2.673734, 2.671823, 2.669985, 2.668216, 2.666512,
    2.664870, 2.663287, 2.661759, 2.660283, 2.658857, 2.657479, 2.656145, 2.654854,
    2.653604, 2.652394, 2.651220, 2.650081, 2.648977, 2.647905, 2.646863, 2.645852,
    2.644869, 2.643913, 2.642983, 2.642078, 2.641198, 2.640340, 2.639505, 2.638691,
    2.637897, 2.637123, 2.636369, 2.635632, 2.634914, 2.634212, 2.633527, 2.632858,
    2.632204, 2.631565, 2.630940, 2.630330, 2.629732, 2.629148, 2.628576, 2.628016,
    2.627468, 2.626931, 2.626405, 2.625891, 2.625386, 2.624891, 2.624407, 2.623932,
    2.623465, 2.623008, 2.622560, 2.622120, 2.621688, 2.621265, 2.620849, 2.620440,
    2.620039, 2.619645, 2.619258, 2.618878, 2.618504, 2.618137, 2.617776, 2.617421,
    2.617072, 2.616729, 2.616392, 2.616060, 2.615733, 2.615412, 2.615096, 2.614785,
    2.614479, 2.614177, 2.613880, 2.613588, 2.613300, 2.613017, 2.612738, 2.612463,
    2.612192, 2.611925, 2.611662, 2.611403, 2.611147, 2.610895, 2.610647, 2.610402,
    2.610161, 2.609923, 2.609688, 2.609456, 2.609228, 2.609003, 2.608780, 2.608561,
    2.608344, 2.608131, 2.607920, 2.607712, 2.607506, 2.607304, 2.607103, 2.606906,
    2.606711, 2.606518, 2.606328, 2.606140, 2.605954, 2.605770, 2.605589, 2.605410,
    2.605233, 2.605058, 2.604886, 2.604715, 2.604546, 2.604379, 2.604215, 2.604052,
    2.603891, 2.603731, 2.603574, 2.603418, 2.603264, 2.603112, 2.602961, 2.602813,
    2.602665, 2.602520, 2.602376, 2.602233, 2.602092, 2.601952, 2.601814, 2.601678,
    2.601543, 2.601409, 2.601276, 2.601145, 2.601016, 2.600887, 2.600760, 2.600634,
)
CRITICAL = {0.05: _T975, 0.01: _T995}


def _arr(m):
    return np.asarray(m.values if hasattr(m, "values") else m, dtype=np.float64)


def disaggregation_accuracy(est, truth, aggregate) -> float:
    """``1 - sum_t sum_n |est - truth| / (2 sum_t aggregate_t)``.

    The denominator uses the metered aggregate, so unmetered load counts
    against the estimates when the appliances do not cover the mains.
    """
    est = [_arr(e) for e in est]
    truth = [_arr(t) for t in truth]
    agg = _arr(aggregate)
    if len(est) != len(truth) or not est:
        raise InvalidArgument("need matching, non-empty lists of estimates and truths")
    for e, t in zip(est, truth):
        if e.shape != t.shape or e.shape != agg.shape:
            raise InvalidArgument(f"shape mismatch: estimate {e.shape}, truth {t.shape}, aggregate {agg.shape}")
    # correctly rounded sums: exact 1.0 / 0.5 results survive long series
    denom = 2.0 * math.fsum(agg.ravel())
    if denom <= 0:
        raise UndefinedMetricError("aggregate has no energy; accuracy undefined")
    err = math.fsum(math.fsum(np.abs(e - t).ravel()) for e, t in zip(est, truth))
    return 1.0 - err / denom


def normalized_error(est, truth) -> float:
    """``sum |est - truth| / sum truth`` for one appliance."""
    e, t = _arr(est), _arr(truth)
    if e.shape != t.shape:
        raise InvalidArgument(f"shape mismatch: {e.shape} vs {t.shape}")
    denom = float(np.sum(t))
    if denom <= 0:
        raise UndefinedMetricError("truth has no energy; normalized error undefined")
    return float(np.sum(np.abs(e - t))) / denom


class SplitSummary(NamedTuple):
    mean: float
    std: float
    std_defined: bool = True


def summarize_splits(values) -> SplitSummary:
    """Mean and sample (n - 1) standard deviation; a single value reports std 0, flagged."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise InvalidArgument("no values to summarise")
    if v.size == 1:
        return SplitSummary(float(v[0]), 0.0, False)
    return SplitSummary(float(v.mean()), float(v.std(ddof=1)), True)


class TTest(NamedTuple):
    t: float
    significant: bool
    df: int
    critical: float


def t_critical(df: int, alpha: float) -> float:
    if alpha not in CRITICAL:
        raise InvalidArgument(f"alpha must be one of {sorted(CRITICAL)}")
    if df < 1:
        raise InvalidArgument("df must be >= 1")
    table = CRITICAL[alpha]
    # beyond the table the df=200 value is the conservative choice
    return table[min(df, len(table)) - 1]


def paired_t_test(a, b, alpha=0.01) -> TTest:
    """Two-sided paired t-test on ``a - b``.

    All-zero differences give ``t = 0``; zero spread with a nonzero mean gives
    ``t = +-inf`` and counts as significant.
    """
    a = np.asarray(list(a), dtype=np.float64)
    b = np.asarray(list(b), dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise InvalidArgument("need two equal-length samples of size >= 2")
    diff = a - b
    df = diff.size - 1
    crit = t_critical(df, alpha)
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0:
        if mean == 0:
            return TTest(0.0, False, df, crit)
        return TTest(math.copysign(math.inf, mean), True, df, crit)
    t = mean / (sd / math.sqrt(diff.size))
    return TTest(t, abs(t) > crit, df, crit)


@dataclass
class MetricsReport:
    accuracy: float
    appliances: list
    per_appliance_normalized_error: list
    mean_accuracy: float
    std_accuracy: float = 0.0
    split_count: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "split_count": self.split_count,
            "appliances": list(self.appliances),
            "per_appliance_normalized_error": list(self.per_appliance_normalized_error),
        }
        out.update(self.extra)
        return out

    def csv_header(self) -> list:
        return ["accuracy", "mean_accuracy", "std_accuracy", "split_count"] + [
            f"ne_{k}" for k in self.appliances
        ]

    def csv_row(self) -> list:
        return [self.accuracy, self.mean_accuracy, self.std_accuracy, self.split_count] + list(
            self.per_appliance_normalized_error
        )


def evaluate(est, truth, aggregate, labels) -> MetricsReport:
    """Single-split report: accuracy plus per-appliance normalized error (NaN for idle appliances)."""
    acc = disaggregation_accuracy(est, truth, aggregate)
    nes = []
    for e, t in zip(est, truth):
        try:
            nes.append(normalized_error(e, t))
        except UndefinedMetricError:
            nes.append(float("nan"))
    return MetricsReport(acc, list(labels), nes, acc, 0.0, 1)
