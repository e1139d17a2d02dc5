import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cosparse_nilm import _backend, _pykernels
from cosparse_nilm.errors import InvalidArgument, NumericalFailure, RankDeficiencyError
from cosparse_nilm.numkernels import (
    nonneg_ista,
    proxy_bregman_update,
    relative_eps,
    ridge_factor,
    ridge_solve,
    seeded_gaussian,
    soft_threshold,
    sylvester_solve,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def kron_sylvester(a, c, e):
    p, d = e.shape
    op = np.kron(np.eye(d), a) + np.kron(c.T, np.eye(p))
    return np.linalg.solve(op, e.reshape(-1, order="F")).reshape((p, d), order="F")


def spd(rng, k):
    m = rng.normal(size=(k, k))
    return m @ m.T + k * np.eye(k)


@pytest.mark.parametrize("v,theta,out", [(1.0, 0.3, 0.7), (-0.2, 0.3, 0.0), (-1.5, 0.5, -1.0)])
def test_soft_threshold_examples(v, theta, out):
    assert soft_threshold(np.array([[v]]), theta)[0, 0] == pytest.approx(out, abs=1e-15)


@pytest.mark.parametrize("theta", [-0.1, math.nan, math.inf])
def test_soft_threshold_rejects_bad_theta(theta):
    with pytest.raises(InvalidArgument):
        soft_threshold(np.ones((2, 2)), theta)


@given(hnp.arrays(np.float64, (4, 5), elements=finite), st.floats(0, 1e3))
def test_soft_threshold_closed_form(m, theta):
    got = soft_threshold(m, theta)
    want = np.sign(m) * np.maximum(np.abs(m) - theta, 0.0)
    np.testing.assert_array_equal(got, want)
    assert np.all(np.abs(got) <= np.abs(m))


@given(hnp.arrays(np.float64, (3, 4), elements=finite), st.floats(0, 1e3))
def test_soft_threshold_zero_theta_is_identity(m, _):
    np.testing.assert_array_equal(soft_threshold(m, 0.0), m)


def test_backends_bitwise_equal(rng):
    m = rng.normal(size=(50, 70)) * 3
    b = rng.normal(size=m.shape)
    for kern in (_backend.kernels, _pykernels):
        assert kern.soft_threshold(m, 0.7).shape == m.shape
    np.testing.assert_array_equal(_backend.kernels.soft_threshold(m, 0.7), _pykernels.soft_threshold(m, 0.7))
    for lit in (False, True):
        z1, b1 = _backend.kernels.proxy_bregman(m, b, 0.4, lit)
        z2, b2 = _pykernels.proxy_bregman(m, b, 0.4, lit)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(b1, b2)


def test_backend_ista_matches_fallback(rng):
    basis = np.abs(rng.normal(size=(12, 5)))
    x = np.abs(rng.normal(size=(12, 7)))
    g, dtx = basis.T @ basis, basis.T @ x
    step = 0.99 / np.linalg.norm(basis, 2) ** 2
    z1, k1 = _backend.kernels.nonneg_ista(g, dtx, np.zeros((5, 7)), step, 0.05, 200, 1e-10)
    z2, k2 = _pykernels.nonneg_ista(g, dtx, np.zeros((5, 7)), step, 0.05, 200, 1e-10)
    assert k1 == k2
    np.testing.assert_allclose(z1, z2, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("variant", ["standard", "paper_literal"])
def test_proxy_bregman_update(variant, rng):
    dx, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    z, bn = proxy_bregman_update(dx, b, 0.2, variant)
    np.testing.assert_array_equal(z, soft_threshold(dx + b, 0.2))
    want = b + dx - z if variant == "standard" else z - dx - b
    np.testing.assert_allclose(bn, want, rtol=0, atol=1e-15)


def test_ridge_examples(rng):
    y = rng.normal(size=(4, 3))
    np.testing.assert_allclose(ridge_solve(np.eye(4), y), y, atol=1e-14)
    np.testing.assert_array_equal(ridge_solve(rng.normal(size=(5, 3)), np.zeros((5, 2)), 0.1), 0.0)
    a = np.array([[1.0, 0], [0, 1], [1, 1]])
    np.testing.assert_allclose(ridge_solve(a, np.array([[1.0], [1], [2]])), [[1.0], [1.0]], atol=1e-14)


def test_ridge_rank_deficient_needs_eps():
    a = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(RankDeficiencyError, match="eps > 0"):
        ridge_solve(a, np.ones((3, 1)), 0.0)
    w = ridge_solve(a, np.ones((3, 1)), 1e-6)
    assert np.all(np.isfinite(w))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.integers(0, 5), st.floats(0, 10))
def test_ridge_normal_equations(seed, k, extra, eps):
    r = np.random.default_rng(seed)
    a = r.normal(size=(k + extra + 1, k))
    y = r.normal(size=(a.shape[0], 2))
    w = ridge_solve(a, y, eps + 1e-9)
    resid = a.T @ (a @ w - y) + (eps + 1e-9) * w
    assert np.linalg.norm(resid) <= 1e-8 * max(1.0, np.linalg.norm(a.T @ y))


def test_ridge_factor_reuse(rng):
    a = rng.normal(size=(9, 4))
    f = ridge_factor(a, 0.5)
    y = rng.normal(size=(9, 3))
    np.testing.assert_allclose(f.solve(y), ridge_solve(a, y, 0.5), rtol=1e-12)
    np.testing.assert_allclose(f.solve_normal(a.T @ y), f.solve(y), rtol=1e-12)


def test_relative_eps():
    assert relative_eps(np.diag([2.0, 4.0]), 1e-3) == pytest.approx(3e-3)
    assert relative_eps(np.zeros((2, 2)), 1e-3) == 1e-3


def test_sylvester_identities(rng):
    e = rng.normal(size=(3, 5))
    np.testing.assert_allclose(sylvester_solve(np.eye(3), np.zeros((5, 5)), e), e, atol=1e-12)
    np.testing.assert_allclose(sylvester_solve(np.zeros((3, 3)), np.eye(5), e), e, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_sylvester_kronecker_oracle(seed):
    r = np.random.default_rng(seed)
    a, c, e = spd(r, 3), spd(r, 4), r.normal(size=(3, 4))
    want = kron_sylvester(a, c, e)
    got = sylvester_solve(a, c, e)
    assert np.linalg.norm(got - want) <= 1e-8 * np.linalg.norm(want)


def test_sylvester_errors():
    with pytest.raises(InvalidArgument):
        sylvester_solve(np.full((2, 2), np.nan), np.eye(2), np.ones((2, 2)))
    # a = -c on the spectrum makes the operator singular
    with pytest.raises(NumericalFailure, match="singular"):
        sylvester_solve(-np.eye(2), np.eye(2), np.ones((2, 2)))


def test_seeded_gaussian_contract():
    a, b = seeded_gaussian(3, 5, 42), seeded_gaussian(3, 5, 42)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    one = seeded_gaussian(1, 1, 9)
    assert one.shape == (1, 1) and np.isfinite(one[0, 0])


def test_nonneg_ista_stays_nonnegative(rng):
    basis = rng.normal(size=(8, 4))
    x = rng.normal(size=(8, 3))
    step = 0.99 / np.linalg.norm(basis, 2) ** 2
    z, it = nonneg_ista(basis.T @ basis, basis.T @ x, np.zeros((4, 3)), step, 0.1, 500, 1e-12)
    assert np.all(z >= 0) and 1 <= it <= 500


def test_sylvester_reports_residual_for_nonsymmetric_operand():
    a = np.array([[1.0, 5.0], [0.0, 1.0]])
    with pytest.raises(NumericalFailure, match="residual"):
        sylvester_solve(a, np.eye(2), np.ones((2, 2)))


edge = st.sampled_from([0.0, -0.0, 0.5, -0.5, 1e-300, -1e-300]) | finite


@given(hnp.arrays(np.float64, (3, 6), elements=edge), hnp.arrays(np.float64, (3, 6), elements=edge),
       st.sampled_from([0.0, 0.5, 1.0]), st.booleans())
def test_backends_bitwise_on_edge_values(m, b, theta, literal):
    a = _backend.kernels.soft_threshold(m, theta)
    c = _pykernels.soft_threshold(m, theta)
    assert a.tobytes() == c.tobytes()
    for x, y in zip(_backend.kernels.proxy_bregman(m, b, theta, literal), _pykernels.proxy_bregman(m, b, theta, literal)):
        assert x.tobytes() == y.tobytes()


@pytest.mark.parametrize("pure,want", [("1", "numpy")])
def test_fallback_selected_by_env(pure, want):
    import os
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "from cosparse_nilm import _backend; print(_backend.name)"],
                         env=dict(os.environ, COSPARSE_NILM_PURE=pure), capture_output=True, text=True, check=True)
    assert out.stdout.strip() == want
