"""Smooth sparsity surrogate, tangent bounds, and recovery of discrete decisions.

All bound functions are affine in their free argument; the expansion point is
the tangency location.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

__all__ = [
    "SurrogateParams",
    "f_apx",
    "f_apx_upper",
    "f_apx_upper_coeffs",
    "f_exp_lower",
    "f_sqrt_upper",
    "recover_binaries",
    "recover_steering",
]


@dataclass(frozen=True)
class SurrogateParams:
    epsilon: float = 1e-4
    recovery_threshold: float = 1e-4

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.recovery_threshold <= 0:
            raise ValueError("recovery threshold must be positive")


def f_apx(x, eps):
    """Concave indicator surrogate ``1 - exp(-x/eps)`` for ``x >= 0``."""
    return -np.expm1(-np.asarray(x, dtype=float) / eps)


def f_apx_upper_coeffs(x_i, eps):
    """Intercept and slope ``(a, b)`` of the tangent of :func:`f_apx` at ``x_i``.

    The tangent ``a + b*x`` upper-bounds the concave surrogate everywhere.
    """
    x_i = np.asarray(x_i, dtype=float)
    e = np.exp(-x_i / eps)
    b = e / eps
    a = 1.0 - e * (x_i + eps) / eps
    return a, b


def f_apx_upper(x, x_i, eps):
    r"""Tangent upper bound of the sparsity surrogate.

    Parameters
    ----------
    x : array_like
        Evaluation point, W.
    x_i : array_like
        Expansion point, W.
    eps : float
        Smoothing scale, W.

    Returns
    -------
    ndarray
        :math:`\exp(-x_i/\epsilon)(x - x_i - \epsilon)/\epsilon + 1`.
    """
    x = np.asarray(x, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    return np.exp(-x_i / eps) * (x - x_i - eps) / eps + 1.0


def f_exp_lower(u, u_i):
    """Tangent lower bound ``exp(u_i) (u - u_i + 1)`` of the exponential."""
    u = np.asarray(u, dtype=float)
    return np.exp(u_i) * (u - u_i + 1.0)


def f_sqrt_upper(x, x_i):
    """Tangent upper bound ``x / (2 sqrt(x_i)) + sqrt(x_i) / 2`` of the square root."""
    x_i = np.asarray(x_i, dtype=float)
    if np.any(x_i <= 0):
        raise ValueError("sqrt expansion point must be strictly positive")
    r = np.sqrt(x_i)
    return np.asarray(x, dtype=float) / (2.0 * r) + r / 2.0


def recover_binaries(power: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Threshold relaxed powers into associations.

    Returns the association mask and a copy of ``power`` with sub-threshold
    entries zeroed.
    """
    assoc = np.asarray(power) >= threshold
    return assoc, np.where(assoc, power, 0.0)


def recover_steering(omega_bar_m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split combined M steering weights into terrestrial share and per-AP split.

    Parameters
    ----------
    omega_bar_m : ndarray, shape (L, K_M)
        Combined weights; column sums are at most one.

    Returns
    -------
    omega_cn : ndarray, shape (K_M,)
        Fraction of each flow sent to the terrestrial network.
    omega_split : ndarray, shape (L, K_M)
        Per-AP split of the terrestrial fraction; uniform when that fraction is 0.
    """
    w = np.asarray(omega_bar_m, dtype=float)
    cn = w.sum(axis=0)
    n_ap = w.shape[0]
    split = np.full_like(w, 1.0 / n_ap if n_ap else 0.0)
    pos = cn > 0
    split[:, pos] = w[:, pos] / cn[pos]
    return cn, split
