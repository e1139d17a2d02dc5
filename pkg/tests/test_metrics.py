import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cosparse_nilm.errors import InvalidArgument, UndefinedMetricError
from cosparse_nilm.metrics import (
    CRITICAL,
    disaggregation_accuracy,
    evaluate,
    normalized_error,
    paired_t_test,
    summarize_splits,
    t_critical,
)


def parts(rng, count=3, shape=(6, 4)):
    truth = [np.abs(rng.normal(size=shape)) for _ in range(count)]
    return truth, sum(truth)


def test_accuracy_perfect_and_zero(rng):
    truth, agg = parts(rng)
    assert disaggregation_accuracy(truth, truth, agg) == 1.0
    zeros = [np.zeros_like(t) for t in truth]
    assert disaggregation_accuracy(zeros, truth, agg) == pytest.approx(0.5, abs=1e-15)


def test_accuracy_hand_example():
    acc = disaggregation_accuracy([np.array([[3.0]]), np.array([[3.0]])],
                                  [np.array([[2.0]]), np.array([[3.0]])], np.array([[5.0]]))
    assert acc == pytest.approx(0.9, abs=1e-15)


def test_accuracy_errors():
    with pytest.raises(UndefinedMetricError):
        disaggregation_accuracy([np.zeros((2, 2))], [np.zeros((2, 2))], np.zeros((2, 2)))
    with pytest.raises(InvalidArgument):
        disaggregation_accuracy([np.zeros((2, 2))], [np.zeros((2, 3))], np.ones((2, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
def test_accuracy_joint_scaling(seed, c):
    r = np.random.default_rng(seed)
    truth, agg = parts(r)
    est = [np.abs(r.normal(size=t.shape)) for t in truth]
    a = disaggregation_accuracy(est, truth, agg)
    b = disaggregation_accuracy([c * e for e in est], [c * t for t in truth], c * agg)
    assert abs(a - b) <= 1e-12
    assert a <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_normalized_error_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    t, e = np.abs(r.normal(size=(8, 3))), np.abs(r.normal(size=(8, 3)))
    perm = r.permutation(8)
    assert normalized_error(e[perm], t[perm]) == pytest.approx(normalized_error(e, t), rel=1e-13)


def test_normalized_error_examples(rng):
    t = np.abs(rng.normal(size=(4, 3))) + 0.1
    assert normalized_error(t, t) == 0.0
    assert normalized_error(np.zeros_like(t), t) == 1.0
    assert normalized_error(2 * t, t) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(UndefinedMetricError):
        normalized_error(t, np.zeros_like(t))


def test_summaries():
    assert summarize_splits([0.5, 0.5, 0.5])[:2] == (0.5, 0.0)
    s = summarize_splits([0, 1])
    assert s.mean == 0.5 and s.std == pytest.approx(math.sqrt(0.5))
    one = summarize_splits([0.7])
    assert (one.mean, one.std, one.std_defined) == (0.7, 0.0, False)
    with pytest.raises(InvalidArgument):
        summarize_splits([])


def test_ttest_examples():
    t = paired_t_test([0.4, 0.5, 0.6], [0.4, 0.5, 0.6])
    assert t.t == 0.0 and not t.significant
    t = paired_t_test([1, -1, 1, -1], [0, 0, 0, 0])
    assert t.t == 0.0 and not t.significant
    t = paired_t_test([1, 2, 3], [0, 0, 0], alpha=0.05)
    assert t.t == pytest.approx(3.4641, abs=1e-4)
    assert t.df == 2 and t.critical == pytest.approx(4.302653, abs=1e-6)
    assert not t.significant
    inf = paired_t_test([2, 2, 2], [1, 1, 1])
    assert math.isinf(inf.t) and inf.significant


def test_critical_table():
    # textbook values
    assert t_critical(1, 0.05) == pytest.approx(12.706205, abs=1e-6)
    assert t_critical(10, 0.01) == pytest.approx(3.169273, abs=1e-6)
    assert t_critical(500, 0.05) == CRITICAL[0.05][-1]
    assert all(a > b for a, b in zip(CRITICAL[0.01], CRITICAL[0.01][1:]))
    with pytest.raises(InvalidArgument):
        t_critical(3, 0.1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=30), st.floats(-0.5, 0.5))
def test_ttest_shift_invariant(a, shift):
    a = np.array(a)
    b = np.zeros_like(a)
    t1 = paired_t_test(a, b)
    t2 = paired_t_test(a + shift, b + shift)
    if math.isfinite(t1.t) and abs(t1.t) < 1e6:
        assert t2.t == pytest.approx(t1.t, rel=1e-6, abs=1e-6)


def test_evaluate_report(rng):
    truth, agg = parts(rng, 2)
    truth[1] = np.zeros_like(truth[1])
    rep = evaluate(truth, truth, agg, ["a", "b"])
    assert rep.accuracy == 1.0
    assert rep.per_appliance_normalized_error[0] == 0.0 and math.isnan(rep.per_appliance_normalized_error[1])
    assert rep.csv_header()[-2:] == ["ne_a", "ne_b"]
    assert len(rep.csv_row()) == len(rep.csv_header())
