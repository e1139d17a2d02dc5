"""Synthesis sparse-coding baseline.

Each appliance gets a basis ``D_i`` (d x m, unit-norm columns) learned from
``||X_i - D_i Z_i||_F^2 + lam ||Z_i||_1`` with ``Z_i >= 0``. Disaggregation
codes the aggregate against the concatenated bases and reads back
``Xh_i = D_i Z_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disagg import DisaggResult, clip_nonnegative
from .errors import InvalidArgument, NumericalFailure
from .numkernels import as_matrix, nonneg_ista, relative_eps, ridge_solve, seeded_gaussian

STEP_SAFETY = 0.99


@dataclass(frozen=True)
class SynthControls:
    atoms: int = 3
    max_outer: int = 50
    tol: float = 1e-6
    inner_max: int = 300
    inner_tol: float = 1e-6
    code_max: int = 5000
    code_tol: float = 1e-9
    ls_eps: float = 1e-8
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if self.atoms < 1 or self.max_outer < 1 or self.inner_max < 1 or self.code_max < 1:
            raise InvalidArgument("atom and iteration counts must be >= 1")
        if not (self.tol > 0 and self.inner_tol >= 0 and self.code_tol >= 0 and self.ls_eps >= 0):
            raise InvalidArgument("tolerances must be nonnegative (tol > 0)")


@dataclass
class SynthesisDict:
    appliance_id: str
    basis: np.ndarray

    @property
    def atoms(self) -> int:
        return self.basis.shape[1]


@dataclass
class SynthTrace:
    objective: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def synthesis_objective(x, basis, codes, lam) -> float:
    """``||X - D Z||_F^2 + lam ||Z||_1``."""
    r = x - basis @ codes
    return float(np.sum(r * r)) + lam * float(np.sum(np.abs(codes)))


def shrinkage_step(basis) -> float:
    """Step size ``0.99 / sigma_max(D)^2`` for the projected shrinkage."""
    s = np.linalg.norm(basis, 2)
    if not np.isfinite(s):
        raise NumericalFailure("basis has non-finite spectral norm")
    if s == 0:
        return 1.0
    return STEP_SAFETY / (s * s)


def code_nonneg(x, basis, lam, z0=None, max_iter=500, tol=1e-8, step=None):
    """Nonnegative sparse codes of ``x`` against ``basis``; returns ``(Z, iterations)``.

    The iteration works on the half-scaled objective, so the threshold is
    ``step * lam / 2``. A ``step`` above ``1 / sigma_max^2`` is rejected since
    descent is no longer guaranteed.
    """
    bound = 1.0 / max(np.linalg.norm(basis, 2) ** 2, np.finfo(float).tiny)
    if step is None:
        step = shrinkage_step(basis)
    elif step > bound:
        raise NumericalFailure(f"shrinkage step {step:.3e} exceeds the bound 1/sigma_max^2 = {bound:.3e}")
    if z0 is None:
        z0 = np.zeros((basis.shape[1], x.shape[1]))
    return nonneg_ista(basis.T @ basis, basis.T @ x, z0, step, lam / 2.0, max_iter, tol)


def train_synthesis(x, m=None, lam=0.1, controls: SynthControls = SynthControls(), init=None,
                    appliance_id="appliance"):
    """Learn a nonnegative-code synthesis basis; returns ``(SynthesisDict, codes, SynthTrace)``.

    Alternates a code step (projected shrinkage to ``inner_tol``) with a
    least-squares basis step followed by column renormalisation, the scale
    being moved into the codes; a basis step that would raise the objective is
    skipped, so the recorded trace never increases. ``init`` overrides the seeded random start.
    """
    x = as_matrix(x, "x")
    m = controls.atoms if m is None else int(m)
    if m < 1:
        raise InvalidArgument("m must be >= 1")
    if lam < 0:
        raise InvalidArgument("lam must be >= 0")
    d = x.shape[0]
    if init is None:
        basis = np.abs(seeded_gaussian(m, d, controls.seed)).T.copy()
    else:
        basis = as_matrix(init, "init").copy()
        if basis.shape != (d, m):
            raise InvalidArgument(f"init must have shape ({d}, {m})")
        norms = np.linalg.norm(basis, axis=0)
        basis[:, norms > 0] /= norms[norms > 0]

    trace = SynthTrace()
    codes, _ = code_nonneg(x, basis, lam, max_iter=controls.inner_max, tol=controls.inner_tol)
    prev = synthesis_objective(x, basis, codes, lam)
    trace.objective.append(prev)
    for it in range(1, controls.max_outer + 1):
        live = np.any(codes > 0, axis=1)
        if np.any(live):
            zl = codes[live]
            eps = relative_eps(zl @ zl.T, controls.ls_eps)
            new = ridge_solve(zl.T, x.T, eps).T
            norms = np.linalg.norm(new, axis=0)
            ok = norms > 0
            idx = np.flatnonzero(live)[ok]
            cand_b, cand_z = basis.copy(), codes.copy()
            cand_b[:, idx] = new[:, ok] / norms[ok]
            cand_z[idx] *= norms[ok][:, None]
            # renormalisation rescales the l1 term; keep the old basis if that costs more than it gains
            if synthesis_objective(x, cand_b, cand_z, lam) <= prev:
                basis, codes = cand_b, cand_z
        codes, _ = code_nonneg(x, basis, lam, z0=codes, max_iter=controls.inner_max, tol=controls.inner_tol)
        obj = synthesis_objective(x, basis, codes, lam)
        if not np.isfinite(obj):
            raise NumericalFailure(f"synthesis objective non-finite at iteration {it}")
        trace.objective.append(obj)
        trace.iterations = it
        if obj == prev or abs(obj - prev) <= controls.tol * abs(prev):
            trace.converged = True
            break
        prev = obj
    return SynthesisDict(appliance_id, basis), codes, trace


def disaggregate_synthesis(x_agg, dicts, lam=0.1, controls: SynthControls = SynthControls(),
                           chunk=100) -> DisaggResult:
    """Code ``x_agg`` against the concatenated bases and split it per appliance."""
    x = as_matrix(x_agg, "x_agg")
    bases = [d.basis if isinstance(d, SynthesisDict) else as_matrix(d) for d in dicts]
    if not bases:
        raise InvalidArgument("need at least one dictionary")
    for b in bases:
        if b.shape[0] != x.shape[0]:
            raise InvalidArgument(f"basis has {b.shape[0]} slots, aggregate has {x.shape[0]}")
    full = np.hstack(bases)
    step = shrinkage_step(full)
    gram, dtx = full.T @ full, full.T @ x
    z = np.zeros((full.shape[1], x.shape[1]))
    res = DisaggResult(estimates=[])
    res.objective_trace.append(synthesis_objective(x, full, z, lam))
    done = 0
    while done < controls.code_max:
        n = min(chunk, controls.code_max - done)
        z, used = nonneg_ista(gram, dtx, z, step, lam / 2.0, n, controls.code_tol)
        done += used
        res.objective_trace.append(synthesis_objective(x, full, z, lam))
        if used < n:
            res.converged = True
            break
    res.iterations = done
    bounds = np.cumsum([0] + [b.shape[1] for b in bases])
    res.codes = [z[bounds[k]:bounds[k + 1]] for k in range(len(bases))]
    est = [b @ c for b, c in zip(bases, res.codes)]
    if controls.clip:
        est, res.clipped_fraction = clip_nonnegative(est)
        res.clipped = True
    else:
        res.clipped_fraction = [0.0] * len(est)
    res.estimates = est
    nx = np.linalg.norm(x)
    res.sum_residual = float(np.linalg.norm(x - sum(est)) / nx) if nx > 0 else 0.0
    return res
