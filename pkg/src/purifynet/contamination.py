"""Parameter contamination and training-data backdoor poisoning.

Parameter noise: every entry of W and beta is independently corrupted with
probability epsilon by an additive draw from a chosen distribution Q
(default N(1, 1)).  Backdoor poisoning: a random subset of training images
gets its leading pixels overwritten with a trigger value and its label
replaced by the attacker's target class.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CnnParams


class ContaminationError(ValueError):
    pass


@dataclass(frozen=True)
class Normal:
    mean: float = 1.0
    std: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std) and self.std >= 0):
            raise ContaminationError(f"bad normal parameters ({self.mean}, {self.std})")

    def sample(self, rng: np.random.Generator, size):
        return rng.normal(self.mean, self.std, size)

    def __str__(self):
        return f"normal:{self.mean:g}:{self.std:g}"


@dataclass(frozen=True)
class ConstantShift:
    c: float

    def __post_init__(self):
        if not np.isfinite(self.c):
            raise ContaminationError(f"bad constant shift {self.c}")

    def sample(self, rng: np.random.Generator, size):
        return np.full(size, self.c, dtype=float)

    def __str__(self):
        return f"const:{self.c:g}"


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a <= self.b):
            raise ContaminationError(f"bad uniform bounds ({self.a}, {self.b})")

    def sample(self, rng: np.random.Generator, size):
        return rng.uniform(self.a, self.b, size)

    def __str__(self):
        return f"uniform:{self.a:g}:{self.b:g}"


def parse_dist(text: str):
    """Parse 'normal:mean:std' | 'const:c' | 'uniform:a:b'."""
    parts = text.split(":")
    try:
        if parts[0] == "normal" and len(parts) == 3:
            return Normal(float(parts[1]), float(parts[2]))
        if parts[0] == "const" and len(parts) == 2:
            return ConstantShift(float(parts[1]))
        if parts[0] == "uniform" and len(parts) == 3:
            return Uniform(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ContaminationError(f"bad distribution spec {text!r}: {exc}") from None
    raise ContaminationError(f"bad distribution spec {text!r}")


@dataclass(frozen=True)
class NoiseSpec:
    epsilon: float
    dist: object = field(default_factory=Normal)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ContaminationError(f"epsilon must be in [0, 1], got {self.epsilon}")


def contaminate(params: CnnParams, spec: NoiseSpec):
    """Corrupt W and beta entrywise; returns (new params, {'W','beta'} masks).

    Entries where the mask is False are bit-identical to the input; the input
    itself is never modified.  Reproducible from (params, spec).
    """
    rng = np.random.default_rng(spec.seed)
    out = params.copy()
    masks = {}
    for name in ("W", "beta"):
        arr = getattr(out, name)
        mask = rng.random(arr.shape) < spec.epsilon
        noise = spec.dist.sample(rng, arr.shape)
        setattr(out, name, np.where(mask, arr + noise, arr))
        masks[name] = mask
    return out, masks


# ---------------------------------------------------------------------------
# backdoor poisoning


@dataclass(frozen=True)
class BackdoorSpec:
    trigger_len: int = 5
    trigger_value: float = 0.0
    target_class: int = 0
    poison_ratio: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.poison_ratio <= 1.0:
            raise ContaminationError(f"poison_ratio must be in [0, 1], got {self.poison_ratio}")
        if self.trigger_len < 1:
            raise ContaminationError(f"trigger_len must be >= 1, got {self.trigger_len}")
        if self.target_class < 0:
            raise ContaminationError(f"target_class must be >= 0, got {self.target_class}")


def poison_dataset(X: np.ndarray, labels: np.ndarray, spec: BackdoorSpec, seed: int = 0):
    """Stamp and relabel a random floor(poison_ratio * n) subset.

    Returns (X_poisoned, labels_poisoned, poisoned_indices); inputs untouched.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    d, n = X.shape
    if spec.trigger_len > d:
        raise ContaminationError(f"trigger_len {spec.trigger_len} exceeds input dimension {d}")
    rng = np.random.default_rng(seed)
    n_poison = int(np.floor(spec.poison_ratio * n))
    idx = np.sort(rng.choice(n, size=n_poison, replace=False))
    Xp = X.copy()
    yp = labels.copy()
    Xp[: spec.trigger_len, idx] = spec.trigger_value
    yp[idx] = spec.target_class
    return Xp, yp, idx


def apply_trigger(X: np.ndarray, spec: BackdoorSpec) -> np.ndarray:
    """Stamp every column with the trigger (attack time: labels untouched)."""
    X = np.asarray(X, dtype=float)
    if spec.trigger_len > X.shape[0]:
        raise ContaminationError(
            f"trigger_len {spec.trigger_len} exceeds input dimension {X.shape[0]}"
        )
    Xs = X.copy()
    Xs[: spec.trigger_len, :] = spec.trigger_value
    return Xs
