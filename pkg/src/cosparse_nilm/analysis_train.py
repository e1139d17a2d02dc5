"""Split Bregman trainers for per-appliance analysis dictionaries.

Three formulations share one engine:

* simple -- each appliance learns ``D_i`` alone from
  ``||X_i - Xh_i||^2 + lam ||D_i Xh_i||_1``;
* distinctive -- adds ``eta * sum_{j != i} ||D_i^T D_j - I||^2`` so the
  dictionaries of different appliances repel each other;
* disaggregating -- further adds ``gamma * sum_{j != i} ||D_j Xh_i||^2`` so
  that other appliances' operators see dense (non-sparse) responses.

Each outer iteration sweeps the appliances in index order (Gauss-Seidel) and
for each one performs a dictionary step, an estimate step, a proxy step and a
Bregman update, all in closed form.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidArgument, NilmError
from .numkernels import (
    as_matrix,
    proxy_bregman_update,
    relative_eps,
    ridge_solve,
    seeded_gaussian,
    soft_threshold,
    sylvester_solve,
)

MODES = ("simple", "distinctive", "disaggregating")
BREGMAN_VARIANTS = ("standard", "paper_literal")
INCOHERENCE_VARIANTS = ("literal_dxd", "cross_gram_pxp")
B_INITS = ("ones", "zeros")


@dataclass(frozen=True)
class Hyperparams:
    """Solver settings shared by training and disaggregation.

    ``lam`` is serialised as ``lambda``. ``inner_iters``, ``inner_tol`` and
    ``clip`` only affect disaggregation.
    """

    lam: float = 0.1
    mu: float = 0.5
    eta: float = 0.2
    gamma: float = 0.05
    atoms: int = 3
    max_outer: int = 100
    tol: float = 1e-6
    ls_eps: float = 1e-8
    seed: int = 0
    bregman_variant: str = "standard"
    incoherence_variant: str = "literal_dxd"
    b_init: str = "ones"
    inner_iters: int = 1
    inner_tol: float = 0.0
    clip: bool = True

    def __post_init__(self):
        for name in ("lam", "mu", "eta", "gamma", "ls_eps", "inner_tol"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgument(f"{name} must be finite and >= 0, got {v}")
        if not self.tol > 0:
            raise InvalidArgument(f"tol must be > 0, got {self.tol}")
        if self.atoms < 1 or self.max_outer < 1 or self.inner_iters < 1:
            raise InvalidArgument("atoms, max_outer and inner_iters must be >= 1")
        if self.bregman_variant not in BREGMAN_VARIANTS:
            raise InvalidArgument(f"bregman_variant must be one of {BREGMAN_VARIANTS}")
        if self.incoherence_variant not in INCOHERENCE_VARIANTS:
            raise InvalidArgument(f"incoherence_variant must be one of {INCOHERENCE_VARIANTS}")
        if self.b_init not in B_INITS:
            raise InvalidArgument(f"b_init must be one of {B_INITS}")

    def require_solvable(self):
        if not self.mu > 0:
            raise InvalidArgument("mu must be > 0 to run a solver")

    def replace(self, **changes) -> "Hyperparams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AnalysisDict:
    appliance_id: str
    op: np.ndarray

    @property
    def atoms(self) -> int:
        return self.op.shape[0]

    @property
    def slots(self) -> int:
        return self.op.shape[1]


@dataclass
class TrainTrace:
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual[-1] if self.residual else float("nan")


@dataclass
class TrainState:
    """All Split Bregman variables of one training run."""

    data: list
    dicts: list
    estimates: list
    proxies: list
    bregmans: list
    iteration: int = 0
    objective_trace: list = field(default_factory=list)

    @property
    def n_appliances(self) -> int:
        return len(self.data)

    def check(self):
        for x, dd, xh, z, b in zip(self.data, self.dicts, self.estimates, self.proxies, self.bregmans):
            p, d = dd.shape
            if x.shape != xh.shape or xh.shape[0] != d or z.shape != (p, xh.shape[1]) or b.shape != z.shape:
                raise InvalidArgument("inconsistent TrainState shapes")


@dataclass
class TrainArtifacts:
    model: str
    dicts: list
    hyper: Hyperparams
    traces: dict
    synth: object = None  # SynthControls for the synthesis baseline

    @property
    def appliances(self) -> list:
        return [d.appliance_id for d in self.dicts]

    @property
    def final_residuals(self) -> dict:
        return {k: t.final_residual for k, t in self.traces.items()}


def appliance_seed(seed: int, index: int) -> int:
    """Initialisation seed of appliance ``index`` in a multi-appliance run."""
    return int(seed) + int(index)


def init_state(xs, h: Hyperparams, seeds=None) -> TrainState:
    """Initial variables: ``Xh = X``, ``B = 1`` (or 0), random unit-row ``D``, ``Z = D Xh``."""
    xs = [as_matrix(x, f"x[{i}]") for i, x in enumerate(xs)]
    if not xs:
        raise InvalidArgument("need at least one appliance")
    d = xs[0].shape[0]
    if any(x.shape[0] != d for x in xs):
        raise InvalidArgument("all appliances must share the slot count")
    if seeds is None:
        seeds = [appliance_seed(h.seed, i) for i in range(len(xs))]
    dicts = [seeded_gaussian(h.atoms, d, s) for s in seeds]
    fill = np.ones if h.b_init == "ones" else np.zeros
    return TrainState(
        data=xs,
        dicts=dicts,
        estimates=[x.copy() for x in xs],
        proxies=[dd @ x for dd, x in zip(dicts, xs)],
        bregmans=[fill((h.atoms, x.shape[1])) for x in xs],
    )


def _pair_penalty(di, dj, variant):
    if variant == "literal_dxd":
        g = di.T @ dj
    else:
        g = di @ dj.T
    g[np.diag_indices_from(g)] -= 1.0
    return float(np.sum(g * g))


def incoherence(dicts, i, variant="literal_dxd") -> float:
    """``sum_{j != i} ||D_i^T D_j - I||_F^2`` (or ``||D_i D_j^T - I||`` for ``cross_gram_pxp``)."""
    return sum(_pair_penalty(dicts[i], dj, variant) for j, dj in enumerate(dicts) if j != i)


def cross_energy(dicts, estimates, i) -> float:
    """``sum_{j != i} ||D_j Xh_i||_F^2``."""
    return sum(float(np.sum((dj @ estimates[i]) ** 2)) for j, dj in enumerate(dicts) if j != i)


def _coupling(mode, h):
    if mode not in MODES:
        raise InvalidArgument(f"unknown mode {mode!r}; expected one of {MODES}")
    eta = h.eta if mode in ("distinctive", "disaggregating") else 0.0
    gamma = h.gamma if mode == "disaggregating" else 0.0
    return eta, gamma


def _appliance_terms(state, i, eta, gamma, variant):
    d, xh = state.dicts[i], state.estimates[i]
    fid = float(np.sum((state.data[i] - xh) ** 2))
    pen = eta * incoherence(state.dicts, i, variant) if eta else 0.0
    cross = gamma * cross_energy(state.dicts, state.estimates, i) if gamma else 0.0
    return fid, pen + cross


def augmented_objective(state: TrainState, h: Hyperparams, mode: str, appliance=None) -> float:
    """Augmented Lagrangian of appliance ``appliance`` (summed over all when ``None``).

    For appliance ``i``::

        ||X_i - Xh_i||^2 + lam ||Z_i||_1 + eta sum_{j!=i} ||D_i^T D_j - I||^2
            + gamma sum_{j!=i} ||D_j Xh_i||^2 + mu ||Z_i - D_i Xh_i - B_i||^2

    with the coupling terms dropped according to ``mode``. Each block step of
    the trainer is an exact minimiser of this quantity for its appliance.
    """
    eta, gamma = _coupling(mode, h)
    state.check()
    idx = range(state.n_appliances) if appliance is None else [appliance]
    total = 0.0
    for i in idx:
        fid, coupling = _appliance_terms(state, i, eta, gamma, h.incoherence_variant)
        z = state.proxies[i]
        r = z - state.dicts[i] @ state.estimates[i] - state.bregmans[i]
        total += fid + h.lam * float(np.sum(np.abs(z))) + coupling + h.mu * float(np.sum(r * r))
    return total


def training_objective(state: TrainState, h: Hyperparams, mode: str) -> float:
    """Un-augmented objective: fidelity + ``lam ||D_i Xh_i||_1`` + coupling, summed."""
    eta, gamma = _coupling(mode, h)
    total = 0.0
    for i in range(state.n_appliances):
        fid, coupling = _appliance_terms(state, i, eta, gamma, h.incoherence_variant)
        total += fid + h.lam * float(np.sum(np.abs(state.dicts[i] @ state.estimates[i]))) + coupling
    return total


def dictionary_step(state: TrainState, i: int, h: Hyperparams, eta: float):
    xh = state.estimates[i]
    r = state.proxies[i] - state.bregmans[i]
    if eta == 0 or state.n_appliances == 1:
        eps = relative_eps(xh @ xh.T, h.ls_eps)
        state.dicts[i] = ridge_solve(xh.T, r.T, eps).T
        return
    others = [dj for j, dj in enumerate(state.dicts) if j != i]
    c = h.mu * (xh @ xh.T)
    rhs = h.mu * (r @ xh.T) + eta * sum(others)
    if h.incoherence_variant == "literal_dxd":
        a = eta * sum(dj @ dj.T for dj in others)
        eps = relative_eps(c, h.ls_eps)
        c[np.diag_indices_from(c)] += eps
        state.dicts[i] = sylvester_solve(a, c, rhs)
    else:
        c += eta * sum(dj.T @ dj for dj in others)
        eps = relative_eps(c, h.ls_eps)
        c[np.diag_indices_from(c)] += eps
        state.dicts[i] = np.linalg.solve(c, rhs.T).T


def estimate_step(state: TrainState, i: int, h: Hyperparams, gamma: float):
    d_i = state.dicts[i]
    x = state.data[i]
    r = state.proxies[i] - state.bregmans[i]
    sm = np.sqrt(h.mu)
    eye = np.eye(x.shape[0])
    if gamma == 0 or state.n_appliances == 1:
        a = np.vstack([eye, sm * d_i])
        y = np.vstack([x, sm * r])
    else:
        stack = np.vstack([dj for j, dj in enumerate(state.dicts) if j != i])
        a = np.vstack([eye, np.sqrt(gamma) * stack, sm * d_i])
        y = np.vstack([x, np.zeros((stack.shape[0], x.shape[1])), sm * r])
    state.estimates[i] = ridge_solve(a, y, 0.0)


def proxy_step(state: TrainState, i: int, h: Hyperparams):
    v = state.dicts[i] @ state.estimates[i] + state.bregmans[i]
    state.proxies[i] = soft_threshold(v, h.lam / (2 * h.mu))


def bregman_step(state: TrainState, i: int, h: Hyperparams):
    dx = state.dicts[i] @ state.estimates[i]
    if h.bregman_variant == "standard":
        state.bregmans[i] = state.bregmans[i] + dx - state.proxies[i]
    else:
        state.bregmans[i] = state.proxies[i] - dx - state.bregmans[i]


def _proxy_and_bregman(state, i, h):
    state.proxies[i], state.bregmans[i] = proxy_bregman_update(
        state.dicts[i] @ state.estimates[i], state.bregmans[i], h.lam / (2 * h.mu), h.bregman_variant
    )


def constraint_residual(state: TrainState, i: int) -> float:
    z = state.proxies[i]
    return float(np.linalg.norm(z - state.dicts[i] @ state.estimates[i]) / max(1.0, np.linalg.norm(z)))


def _converged(prev, cur, tol):
    if prev == cur:
        return True
    return abs(cur - prev) <= tol * abs(prev)


def run_training(xs, h: Hyperparams, mode: str, ids=None, seeds=None):
    """Run the coupled Split Bregman loop; returns the final state and per-appliance traces."""
    h.require_solvable()
    eta, gamma = _coupling(mode, h)
    if mode != "simple" and len(xs) < 2:
        raise InvalidArgument(f"{mode} training needs at least 2 appliances")
    state = init_state(xs, h, seeds)
    n = state.n_appliances
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    traces = {k: TrainTrace() for k in ids}
    prev = None
    for it in range(1, h.max_outer + 1):
        for i in range(n):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    dictionary_step(state, i, h, eta)
                    estimate_step(state, i, h, gamma)
                    _proxy_and_bregman(state, i, h)
            except (NilmError, np.linalg.LinAlgError, ValueError) as exc:
                # inputs were validated up front, so a failure here is numeric breakdown
                raise DivergenceError(
                    f"solver broke down at iteration {it} (appliance {ids[i]}): {exc}",
                    iteration=it,
                    appliance=ids[i],
                ) from exc
        state.iteration = it
        with np.errstate(over="ignore", invalid="ignore"):
            obj = training_objective(state, h, mode)
        if not np.isfinite(obj):
            bad = next((ids[i] for i in range(n) if not np.all(np.isfinite(state.dicts[i]))), ids[0])
            raise DivergenceError(
                f"objective became non-finite at iteration {it} (appliance {bad})",
                iteration=it,
                appliance=bad,
            )
        state.objective_trace.append(obj)
        for i, k in enumerate(ids):
            traces[k].objective.append(obj)
            traces[k].residual.append(constraint_residual(state, i))
            traces[k].iterations = it
        if prev is not None and _converged(prev, obj, h.tol):
            for t in traces.values():
                t.converged = True
            break
        prev = obj
    return state, traces


def train_simple(x, h: Hyperparams = Hyperparams(), appliance_id: str = "appliance"):
    """Learn one analysis dictionary; returns ``(AnalysisDict, TrainTrace)``."""
    state, traces = run_training([x], h, "simple", ids=[appliance_id], seeds=[h.seed])
    return AnalysisDict(appliance_id, state.dicts[0]), traces[appliance_id]


def _train_per_appliance(xs, h, ids, model):
    dicts, traces = [], {}
    for i, (x, k) in enumerate(zip(xs, ids)):
        d, t = train_simple(x, h.replace(seed=appliance_seed(h.seed, i)), k)
        dicts.append(d)
        traces[k] = t
    return TrainArtifacts(model, dicts, h, traces)


def _ids(xs, ids):
    ids = [str(i) for i in range(len(xs))] if ids is None else [str(k) for k in ids]
    if len(ids) != len(xs) or len(set(ids)) != len(ids):
        raise InvalidArgument("appliance ids must be unique and match the data count")
    return ids


def train_independent(xs, h: Hyperparams = Hyperparams(), ids=None) -> TrainArtifacts:
    """Simple trainer applied to every appliance, appliance ``i`` seeded with ``seed + i``."""
    return _train_per_appliance(xs, h, _ids(xs, ids), "simple")


def _train_coupled(xs, h, ids, mode):
    ids = _ids(xs, ids)
    if len(xs) < 2:
        raise InvalidArgument(f"{mode} training needs at least 2 appliances")
    eta, gamma = _coupling(mode, h)
    if eta == 0 and gamma == 0:
        # no coupling left: the problem splits into independent simple problems
        return _train_per_appliance(xs, h, ids, mode)
    solve_mode = "distinctive" if gamma == 0 else mode
    state, traces = run_training(xs, h, solve_mode, ids=ids)
    dicts = [AnalysisDict(k, d) for k, d in zip(ids, state.dicts)]
    return TrainArtifacts(mode, dicts, h, traces)


def train_distinctive(xs, h: Hyperparams = Hyperparams(), ids=None) -> TrainArtifacts:
    """Coupled trainer with the incoherence penalty between appliance dictionaries."""
    return _train_coupled(xs, h, ids, "distinctive")


def train_disaggregating(xs, h: Hyperparams = Hyperparams(), ids=None) -> TrainArtifacts:
    """Coupled trainer with incoherence and the dense cross-appliance penalty."""
    return _train_coupled(xs, h, ids, "disaggregating")


TRAINERS = {
    "simple": train_independent,
    "distinctive": train_distinctive,
    "disaggregating": train_disaggregating,
}
