"""Principal branch of the Lambert W function for real arguments.

Halley iteration on ``f(w) = w e^w - z`` with a branch-point series start
near ``-1/e`` and a logarithmic start elsewhere.
"""
from __future__ import annotations

import math

import numpy as np

BRANCH_POINT = -math.exp(-1.0)
_MAX_ITER = 64


def _initial_guess(z: float) -> float:
    if z < -0.25:
        # series in p = sqrt(2(ez + 1)) about the branch point
        p = math.sqrt(max(2.0 * (math.e * z + 1.0), 0.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    if z <= 3.0:
        return math.log1p(z)
    l1 = math.log(z)
    l2 = math.log(l1)
    return l1 - l2 + l2 / l1


def lambert_w_iter(z: float) -> tuple[float, int]:
    """Return ``(W0(z), halley_iterations)``."""
    z = float(z)
    if math.isnan(z):
        return math.nan, 0
    if z < BRANCH_POINT:
        # tolerate round-off at the branch point itself
        if z < BRANCH_POINT * (1.0 + 1e-15):
            raise ValueError(f"lambert_w undefined for z={z!r} < -1/e")
        return -1.0, 0
    if z == 0.0:
        return 0.0, 0
    if z == math.inf:
        return math.inf, 0

    w = _initial_guess(z)
    for it in range(1, _MAX_ITER + 1):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if abs(dw) <= 4e-16 * (1.0 + abs(w)):
            return w, it
    return w, _MAX_ITER


def lambert_w(z):
    """Principal branch ``W0(z)`` for real ``z >= -1/e``.

    Accepts a scalar or an array-like; arrays are evaluated elementwise.

    Raises
    ------
    ValueError
        If any ``z < -1/e``.
    """
    if np.ndim(z) == 0:
        return lambert_w_iter(z)[0]
    arr = np.asarray(z, dtype=float)
    out = np.empty_like(arr)
    for idx, val in np.ndenumerate(arr):
        out[idx] = lambert_w_iter(val)[0]
    return out


def lambert_w_derivative(z):
    """``dW/dz = W / (z (1 + W))``, with the limit 1 at ``z = 0``."""
    if np.ndim(z) == 0:
        if z == 0:
            return 1.0
        w = lambert_w(z)
        return w / (z * (1.0 + w))
    arr = np.asarray(z, dtype=float)
    w = lambert_w(arr)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = w / (arr * (1.0 + w))
    return np.where(arr == 0, 1.0, out)
