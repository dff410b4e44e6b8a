"""Central finite-difference gradient checking utilities.

Used both by the test suite and the `selftest` CLI command.  All checks
assume float64 and inputs jittered away from non-differentiable points.
"""

from __future__ import annotations

import numpy as np


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, elementwise."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  abs_floor: float = 1e-6) -> float:
    """Worst-case relative error with an absolute floor for tiny gradients."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), abs_floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
