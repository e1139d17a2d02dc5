import numpy as np
import pytest

from cosparse_nilm.errors import InvalidArgument, NumericalFailure
from cosparse_nilm.synthesis import (
    SynthControls,
    SynthesisDict,
    code_nonneg,
    disaggregate_synthesis,
    shrinkage_step,
    synthesis_objective,
    train_synthesis,
)


def test_zero_data():
    d, z, tr = train_synthesis(np.zeros((6, 4)), 3, 0.1)
    np.testing.assert_array_equal(z, 0.0)
    assert tr.objective[-1] == 0.0


def test_identity_init_exact_fit(rng):
    x = np.abs(rng.normal(size=(5, 7)))
    ctl = SynthControls(inner_max=5000, inner_tol=1e-14, max_outer=5)
    d, z, tr = train_synthesis(x, 5, 0.0, ctl, init=np.eye(5))
    assert np.linalg.norm(x - d.basis @ z) <= 1e-6 * np.linalg.norm(x)


def test_rank_one_monotone(rng):
    x = np.outer(np.abs(rng.normal(size=10)), np.abs(rng.normal(size=5)))
    d, z, tr = train_synthesis(x, 3, 0.1)
    t = np.array(tr.objective)
    assert t[-1] <= t[0]
    assert np.all(np.diff(t) <= 1e-10 * np.abs(t[:-1]))


def test_basis_columns_unit_and_codes_nonnegative(rng):
    x = np.abs(rng.normal(size=(12, 9)))
    d, z, _ = train_synthesis(x, 4, 0.1)
    used = np.any(z > 0, axis=1)
    np.testing.assert_allclose(np.linalg.norm(d.basis[:, used], axis=0), 1.0, atol=1e-12)
    assert np.all(z >= 0)


def test_step_bound_enforced(rng):
    basis = rng.normal(size=(6, 3))
    bound = 1.0 / np.linalg.norm(basis, 2) ** 2
    with pytest.raises(NumericalFailure, match="bound"):
        code_nonneg(rng.normal(size=(6, 2)), basis, 0.1, step=2 * bound)
    assert shrinkage_step(basis) == pytest.approx(0.99 * bound)


def test_exact_atom_match(rng):
    col = np.abs(rng.normal(size=(8, 1)))
    basis = np.hstack([col / np.linalg.norm(col), np.abs(rng.normal(size=(8, 2)))])
    basis /= np.linalg.norm(basis, axis=0)
    ctl = SynthControls(code_max=20000, code_tol=1e-14)
    res = disaggregate_synthesis(col, [SynthesisDict("a", basis)], 1e-8, ctl)
    assert np.linalg.norm(res.estimates[0] - col) <= 1e-4 * np.linalg.norm(col)


def test_zero_aggregate(rng):
    dicts = [SynthesisDict(str(k), np.abs(rng.normal(size=(5, 2)))) for k in range(2)]
    res = disaggregate_synthesis(np.zeros((5, 3)), dicts, 0.1)
    for e in res.estimates:
        np.testing.assert_array_equal(e, 0.0)


def test_orthogonal_atoms_recover_coefficients():
    a1 = np.zeros((6, 1))
    a1[:3] = 1 / np.sqrt(3)
    a2 = np.zeros((6, 1))
    a2[3:] = 1 / np.sqrt(3)
    x = 2 * a1 + 3 * a2
    ctl = SynthControls(code_max=20000, code_tol=1e-14)
    res = disaggregate_synthesis(x, [SynthesisDict("a", a1), SynthesisDict("b", a2)], 1e-6, ctl)
    assert res.codes[0][0, 0] == pytest.approx(2.0, abs=1e-3)
    assert res.codes[1][0, 0] == pytest.approx(3.0, abs=1e-3)


def test_objective_formula(rng):
    x, b, z = rng.normal(size=(4, 3)), rng.normal(size=(4, 2)), rng.normal(size=(2, 3))
    want = np.sum((x - b @ z) ** 2) + 0.3 * np.sum(np.abs(z))
    assert synthesis_objective(x, b, z, 0.3) == pytest.approx(want, rel=1e-14)


def test_controls_validation():
    with pytest.raises(InvalidArgument):
        SynthControls(atoms=0)
    with pytest.raises(InvalidArgument):
        train_synthesis(np.ones((3, 2)), 2, -1.0)
    with pytest.raises(InvalidArgument):
        train_synthesis(np.ones((3, 2)), 2, 0.1, init=np.ones((2, 2)))


def test_seeded_reproducible(rng):
    x = np.abs(rng.normal(size=(7, 5)))
    a = train_synthesis(x, 3, 0.1, SynthControls(seed=4))[0].basis
    b = train_synthesis(x, 3, 0.1, SynthControls(seed=4))[0].basis
    np.testing.assert_array_equal(a, b)
