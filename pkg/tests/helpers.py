"""Shared numerical test utilities."""

import numpy as np


def finite_difference_grads(f, arrays, h=1e-5):
    """Central-difference gradients of scalar f w.r.t. a dict of arrays.

    Arrays must be float64 for the differences to resolve below the
    comparison tolerance.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f()
            flat[i] = orig - h
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads[name] = g
    return grads


def max_rel_err(a, b, floor=1e-8):
    """Largest elementwise |a-b| / (|a| + |b| + floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + floor)))
