"""Shared test helpers: the finite-difference gradient oracle."""
import numpy as np


def finite_diff(fn, arrays, h=1e-6):
    """Central-difference gradient of scalar fn() w.r.t. each array (in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gf = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn()
            flat[i] = orig - h
            f_minus = fn()
            flat[i] = orig
            gf[i] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    """Max entrywise relative error with an absolute floor."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = np.maximum.reduce([np.abs(a), np.abs(b), np.full_like(a, 1e-4)])
    return np.max(np.abs(a - b) / denom)
