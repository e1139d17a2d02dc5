"""Compiled vs NumPy kernels, plus one end-to-end disaggregation per backend.

    python benchmarks/bench_kernels.py [--repeat N]

End-to-end timings run each backend in a fresh interpreter so the import-time
selection (``COSPARSE_NILM_PURE``) is honoured.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cosparse_nilm import _pykernels

try:
    from cosparse_nilm import _ckernels
except ImportError:
    _ckernels = None

E2E = """
import time
from cosparse_nilm import fit, apply, Hyperparams, load_preset, synth_generate, split_training_mode, _backend
ds = synth_generate(load_preset("disjoint"), 0)
sp = split_training_mode(ds, 2 / 3, 0)
h = Hyperparams()
t0 = time.perf_counter()
art = fit("disaggregating", sp.train.matrices, sp.train.labels, h)
t1 = time.perf_counter()
apply(art, sp.test.aggregate.values)
t2 = time.perf_counter()
art = fit("synthesis", sp.train.matrices, sp.train.labels, h)
apply(art, sp.test.aggregate.values)
t3 = time.perf_counter()
print(_backend.name, t1 - t0, t2 - t1, t3 - t2)
"""


def cases(rng):
    m = rng.normal(size=(3, 144 * 30))
    b = rng.normal(size=m.shape)
    basis = np.abs(rng.normal(size=(144, 9)))
    basis /= np.linalg.norm(basis, axis=0)
    x = np.abs(rng.normal(size=(144, 30)))
    g, dtx = basis.T @ basis, basis.T @ x
    step = 0.99 / np.linalg.norm(basis, 2) ** 2
    z0 = np.zeros((9, 30))
    return {
        "soft_threshold 3x4320": lambda k: k.soft_threshold(m, 0.1),
        "proxy_bregman 3x4320": lambda k: k.proxy_bregman(m, b, 0.1, False),
        "nonneg_ista 9 atoms x 30, 300 it": lambda k: k.nonneg_ista(g, dtx, z0, step, 0.05, 300, 0.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for label, fn in cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=args.repeat, repeat=3)) / args.repeat * 1e6
        if _ckernels is None:
            print(f"{label:36s} {py:10.1f} {'n/a':>10s}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{label:36s} {py:10.1f} {cy:10.1f} {py / cy:8.2f}x")
    print()
    print(f"{'end-to-end (s)':16s} {'train disagg':>12s} {'apply':>8s} {'synthesis':>10s}")
    for pure in ("0", "1"):
        env = dict(os.environ, COSPARSE_NILM_PURE=pure)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        name, tr, ap_, sy = out.stdout.split()
        print(f"{name:16s} {float(tr):12.3f} {float(ap_):8.3f} {float(sy):10.3f}")


if __name__ == "__main__":
    main()
