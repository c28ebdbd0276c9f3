"""Finite-difference verification of hand-written backward passes.

Run in float64: central differences with eps=1e-5 are meaningless at
float32 precision.
"""

from __future__ import annotations

import numpy as np


def numeric_gradient(loss_fn, array, eps=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. ``array``.

    ``array`` is perturbed in place element by element and restored; the
    loss function must read its current contents on every call.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    it = np.nditer(array, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + eps
        hi = loss_fn()
        array[idx] = orig - eps
        lo = loss_fn()
        array[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * eps)
        it.iternext()
    return grad


def max_relative_error(analytic, numeric):
    """Worst-case elementwise |a-n| / max(|a|, |n|, 1e-8)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def grad_check(loss_fn, groups, eps=1e-5):
    """Compare analytic gradients against central differences.

    ``groups`` maps a name to an (array, analytic_gradient) pair, where
    ``array`` is a float64 buffer that ``loss_fn`` reads. Returns the max
    relative error per group.
    """
    report = {}
    for name, (array, analytic) in groups.items():
        if array.dtype != np.float64:
            raise ValueError(f"group {name!r} is {array.dtype}; run checks in float64")
        numeric = numeric_gradient(loss_fn, array, eps=eps)
        report[name] = max_relative_error(analytic, numeric)
    return report
