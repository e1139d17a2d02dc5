"""NumPy implementations of the inner kernels (fallback for ``_ckernels``)."""
import numpy as np


def soft_threshold(m, theta):
    return np.sign(m) * np.maximum(np.abs(m) - theta, 0.0)


def proxy_bregman(dx, b, theta, literal):
    v = dx + b
    z = soft_threshold(v, theta)
    if literal:
        return z, (z - dx) - b
    return z, v - z


def nonneg_ista(gram, dtx, z0, step, lam, max_iter, tol):
    z = np.array(z0, dtype=np.float64, order="C", copy=True)
    slam = step * lam
    it = 0
    while it < max_iter:
        it += 1
        w = np.maximum(z - step * (gram @ z - dtx) - slam, 0.0)
        diff = np.linalg.norm(w - z)
        z = w
        if diff <= tol * np.linalg.norm(z):
            break
    return z, it
