"""Finite-difference gradient checking shared by the layer test suites."""

import numpy as np


def numeric_gradient(loss_fn, arr: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. every entry of arr,
    perturbing the array in place."""
    out = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        saved = arr[idx]
        arr[idx] = saved + step
        plus = loss_fn()
        arr[idx] = saved - step
        minus = loss_fn()
        arr[idx] = saved
        out[idx] = (plus - minus) / (2.0 * step)
    return out


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  floor: float = 1e-8) -> float:
    denom = np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())
