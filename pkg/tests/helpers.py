"""Shared test oracles: central finite differences over parameter arrays."""
import numpy as np


def fd_grad(f, arr, step=1e-6):
    """Central-difference gradient of scalar f w.r.t. every entry of arr."""
    g = np.zeros_like(arr, dtype=float)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        orig = arr[ix]
        arr[ix] = orig + step
        hi = f()
        arr[ix] = orig - step
        lo = f()
        arr[ix] = orig
        g[ix] = (hi - lo) / (2.0 * step)
        it.iternext()
    return g


def rel_err(a, b, floor=1e-12):
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return np.abs(a - b).max(initial=0.0) / denom
