"""Numpy implementations of the hot kernels.

This module is the reference for ``_kernels.pyx``. Both must evaluate every
formula in the same operation order so the backends agree to rounding.
"""
import numpy as np

NAME = "numpy"


def normalize_rows(W):
    """Return ``(U, norms)`` with each row of ``W`` scaled to unit length.

    Rows with zero norm are left as zeros; callers inspect ``norms``.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    safe = np.where(norms > 0.0, norms, 1.0)
    return W / safe[:, None], norms


def combine_biased(W, v, lam):
    """Fused projection/normalisation/mixing used by the biased sampler.

    For every row ``w`` computes ``r = (I - v v^T) w / ||(I - v v^T) w||`` and
    returns ``sqrt(lam) v + sqrt(1 - lam) r`` together with the projected norms.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    P = W - np.outer(W @ v, v)
    R, norms = normalize_rows(P)
    U = np.sqrt(lam) * v[None, :] + np.sqrt(1.0 - lam) * R
    return U, norms


def fd_average(deltas, U):
    """``(1/q) * sum_i deltas[i] * U[i]``."""
    deltas = np.asarray(deltas, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    return (deltas @ U) / len(deltas)


def _F_full(lam, alpha2, D, q):
    a = (1.0 - lam) / (D - 1.0)
    num = lam * alpha2 + a * (1.0 - alpha2)
    den = (1.0 - 1.0 / q) * (lam * lam * alpha2 + a * a * (1.0 - alpha2)) + num / q
    return np.where(num > 0.0, num * num / np.where(den > 0.0, den, 1.0), 0.0)


def _F_subspace(lam, alpha2, A2, d, q):
    a = (1.0 - lam) / d
    num = lam * alpha2 + a * A2
    den = (1.0 - 1.0 / q) * (lam * lam * alpha2 + a * a * A2) + num / q
    return np.where(num > 0.0, num * num / np.where(den > 0.0, den, 1.0), 0.0)


def F_full(lam, alpha2, D, q):
    return float(_F_full(float(lam), float(alpha2), float(D), float(q)))


def F_subspace(lam, alpha2, A2, d, q):
    return float(_F_subspace(float(lam), float(alpha2), float(A2), float(d), float(q)))


def _grid(n):
    return np.arange(n + 1, dtype=np.float64) / n


def grid_argmax_F(alpha2, D, q, n):
    """Maximise the full-space objective over ``{k/n : k = 0..n}``; first maximiser wins."""
    lam = _grid(n)
    vals = _F_full(lam, float(alpha2), float(D), float(q))
    k = int(np.argmax(vals))
    return lam[k], float(vals[k])


def grid_argmax_F_subspace(alpha2, A2, d, q, n):
    lam = _grid(n)
    vals = _F_subspace(lam, float(alpha2), float(A2), float(d), float(q))
    k = int(np.argmax(vals))
    return lam[k], float(vals[k])


def _averaging_loss(mu, alpha, ebeta, cross):
    num = (1.0 - mu) * alpha + mu * ebeta
    den = (1.0 - mu) * (1.0 - mu) + mu * mu + 2.0 * mu * (1.0 - mu) * cross
    return 1.0 - num * num / den


def averaging_loss(mu, alpha, ebeta, cross):
    """Normalised loss of ``(1 - mu) v + mu * unit(g_rgf)``; ``cross`` is ``v^T E[unit(g_rgf)]``."""
    return float(_averaging_loss(float(mu), float(alpha), float(ebeta), float(cross)))


def grid_argmin_averaging(alpha, ebeta, cross, n):
    mu = _grid(n)
    vals = _averaging_loss(mu, float(alpha), float(ebeta), float(cross))
    k = int(np.argmin(vals))
    return mu[k], float(vals[k])
