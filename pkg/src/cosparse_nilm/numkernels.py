"""Dense numeric kernels shared by the solvers.

Problem sizes here are small (a handful of atoms, ~144 slots per day, a few
hundred days), so everything is a direct dense method.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from . import _backend
from .errors import InvalidArgument, NumericalFailure, RankDeficiencyError

__all__ = [
    "as_matrix",
    "soft_threshold",
    "proxy_bregman_update",
    "ridge_factor",
    "ridge_solve",
    "relative_eps",
    "sylvester_solve",
    "seeded_gaussian",
    "nonneg_ista",
]

SYLVESTER_RTOL = 1e-8


def as_matrix(m, name="matrix"):
    """Return ``m`` as a finite, C-contiguous 2-D float64 array."""
    a = np.ascontiguousarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidArgument(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return a


def _check_theta(theta):
    theta = float(theta)
    if not np.isfinite(theta) or theta < 0:
        raise InvalidArgument(f"threshold must be finite and >= 0, got {theta}")
    return theta


def soft_threshold(m, theta):
    """Element-wise ``sign(m) * max(|m| - theta, 0)``."""
    return _backend.kernels.soft_threshold(as_matrix(m), _check_theta(theta))


def proxy_bregman_update(dx, b, theta, variant="standard"):
    """Fused proxy and Bregman step.

    Returns ``z = soft_threshold(dx + b, theta)`` and the new Bregman
    variable: ``b + dx - z`` for ``standard``, ``z - dx - b`` for
    ``paper_literal``.
    """
    if variant not in ("standard", "paper_literal"):
        raise InvalidArgument(f"unknown bregman variant {variant!r}")
    dx = np.ascontiguousarray(dx, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if dx.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {dx.shape} vs {b.shape}")
    return _backend.kernels.proxy_bregman(dx, b, _check_theta(theta), variant == "paper_literal")


def relative_eps(normal, rel):
    """Tikhonov shift ``rel * trace(normal) / k``; falls back to ``rel`` for a zero matrix."""
    k = normal.shape[0]
    scale = float(np.trace(normal)) / k
    return rel * scale if scale > 0 else float(rel)


class ridge_factor:
    """Cholesky factor of ``a.T a + eps I`` reusable across right-hand sides.

    ``solve(y)`` returns the minimiser of ``||y - a W||_F^2 + eps ||W||_F^2``.
    """

    def __init__(self, a, eps=0.0):
        a = as_matrix(a, "a")
        eps = float(eps)
        if not np.isfinite(eps) or eps < 0:
            raise InvalidArgument(f"eps must be finite and >= 0, got {eps}")
        self.a = a
        normal = a.T @ a
        if eps:
            normal[np.diag_indices_from(normal)] += eps
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                self._cho = sla.cho_factor(normal, lower=False, check_finite=False)
            if eps == 0:
                d = np.abs(np.diag(self._cho[0]))
                if d.min() <= np.sqrt(np.finfo(float).eps) * d.max():
                    raise np.linalg.LinAlgError("ill-conditioned normal matrix")
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            raise RankDeficiencyError(
                f"normal matrix of a {a.shape[0]}x{a.shape[1]} system is singular ({exc}); "
                "pass eps > 0"
            ) from None

    def solve(self, y):
        y = as_matrix(y, "y")
        if y.shape[0] != self.a.shape[0]:
            raise InvalidArgument(f"a has {self.a.shape[0]} rows but y has {y.shape[0]}")
        return sla.cho_solve(self._cho, self.a.T @ y, check_finite=False)

    def solve_normal(self, rhs):
        """Solve with a precomputed ``a.T y``."""
        return sla.cho_solve(self._cho, rhs, check_finite=False)


def ridge_solve(a, y, eps=0.0):
    """Minimise ``||y - a W||_F^2 + eps ||W||_F^2`` over ``W``.

    Solves ``(a.T a + eps I) W = a.T y``. Right-sided problems
    ``min_D ||R - D X||`` are passed transposed: ``ridge_solve(X.T, R.T).T``.

    Raises
    ------
    RankDeficiencyError
        ``eps == 0`` and ``a`` does not have full column rank.
    """
    return ridge_factor(a, eps).solve(y)


def sylvester_solve(a, c, e):
    """Solve ``a D + D c = e`` for symmetric ``a`` (p x p) and ``c`` (d x d).

    Both operands are diagonalised (``a = U La U.T``, ``c = V Lc V.T``), so the
    system decouples into ``(La_k + Lc_l) Dt_kl = (U.T e V)_kl``.
    """
    a = as_matrix(a, "a")
    c = as_matrix(c, "c")
    e = as_matrix(e, "e")
    p, d = e.shape
    if a.shape != (p, p) or c.shape != (d, d):
        raise InvalidArgument(f"incompatible shapes a{a.shape}, c{c.shape}, e{e.shape}")
    la, u = np.linalg.eigh((a + a.T) / 2)
    lc, v = np.linalg.eigh((c + c.T) / 2)
    denom = la[:, None] + lc[None, :]
    if np.any(denom == 0):
        raise NumericalFailure("a and -c share an eigenvalue; the Sylvester operator is singular")
    dsol = u @ ((u.T @ e @ v) / denom) @ v.T
    res = np.linalg.norm(a @ dsol + dsol @ c - e)
    if not np.isfinite(res) or res > SYLVESTER_RTOL * max(1.0, np.linalg.norm(e)):
        raise NumericalFailure(f"Sylvester residual {res:.3e} above tolerance")
    return dsol


def seeded_gaussian(p, d, seed):
    """``p x d`` standard-normal matrix with unit-norm rows, reproducible per seed."""
    p, d = int(p), int(d)
    if p < 1 or d < 1:
        raise InvalidArgument(f"shape must be positive, got ({p}, {d})")
    m = np.random.default_rng(seed).standard_normal((p, d))
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def nonneg_ista(gram, dtx, z0, step, lam, max_iter=500, tol=1e-8):
    """Projected iterative shrinkage for ``min_{Z>=0} ||X - D Z||^2 / 2 + lam' ||Z||_1``.

    Works on the Gram form: ``gram = D.T D`` and ``dtx = D.T X``. Each
    iteration is ``Z <- max(Z - step (gram Z - dtx) - step lam, 0)``; it stops
    once the relative update falls below ``tol``. Returns ``(Z, iterations)``.
    """
    gram = as_matrix(gram, "gram")
    dtx = as_matrix(dtx, "dtx")
    z0 = as_matrix(z0, "z0")
    if gram.shape[0] != gram.shape[1] or dtx.shape[0] != gram.shape[0] or z0.shape != dtx.shape:
        raise InvalidArgument("incompatible shapes for nonneg_ista")
    return _backend.kernels.nonneg_ista(
        gram, dtx, z0, float(step), float(lam), int(max_iter), float(tol)
    )
