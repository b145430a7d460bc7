"""Non-overlapping patch operators.

An input vector of length d is partitioned into m contiguous blocks of
length k (d = m*k).  The block extractors are index-range views, never
materialized as selection matrices.  Patch indices are 1-based in the
public API and CLI; everything internal (and every on-disk format) is
0-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PatchConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PatchConfig:
    """Partition of a d-dimensional input into m non-overlapping patches of size k."""

    d: int
    m: int
    k: int

    def __post_init__(self):
        if self.m < 1 or self.k < 1:
            raise PatchConfigError(f"m and k must be >= 1, got m={self.m}, k={self.k}")
        if self.d != self.m * self.k:
            raise PatchConfigError(
                f"d not divisible as m*k: d={self.d}, m={self.m}, k={self.k}"
            )


def validate_config(d: int, m: int, k: int) -> PatchConfig:
    """Return a PatchConfig iff d = m*k; raise PatchConfigError otherwise."""
    return PatchConfig(d=int(d), m=int(m), k=int(k))


def patch(cfg: PatchConfig, x: np.ndarray, i: int) -> np.ndarray:
    """Extract patch i (1-based, i in [1, m]) of x as a length-k vector."""
    x = np.asarray(x)
    if x.shape != (cfg.d,):
        raise PatchConfigError(f"expected x of shape ({cfg.d},), got {x.shape}")
    if not 1 <= i <= cfg.m:
        raise PatchConfigError(f"patch index {i} out of range [1, {cfg.m}]")
    return x[(i - 1) * cfg.k : i * cfg.k]


def patches_of(cfg: PatchConfig, X: np.ndarray) -> np.ndarray:
    """Reshape a d x n data matrix into the (m, k, n) patch tensor.

    patches_of(cfg, X)[i - 1, :, s] == patch(cfg, X[:, s], i); this is a view.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != cfg.d:
        raise PatchConfigError(f"expected X of shape ({cfg.d}, n), got {X.shape}")
    return X.reshape(cfg.m, cfg.k, X.shape[1])
