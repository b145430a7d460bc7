"""Recovery metrics, classification metrics, closed-form deviation radii,
and sampled estimates of the design-matrix conditions.

Conventions: err_W averages per-kernel l2 distances, err_beta is the
averaged *squared* l2 distance (the form the output-layer guarantee is
stated in).  Natural logarithms throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contamination import BackdoorSpec, apply_trigger
from .model import CnnParams, TrainTrace, predict


class DiagnosticsError(ValueError):
    pass


def err_W(W_tilde: np.ndarray, W_true: np.ndarray) -> float:
    """(1/p) sum_j ||W~_j - W_j||_2 over kernels (columns)."""
    if W_tilde.shape != W_true.shape:
        raise DiagnosticsError(f"shape mismatch {W_tilde.shape} vs {W_true.shape}")
    return float(np.linalg.norm(W_tilde - W_true, axis=0).mean())


def err_beta(beta_tilde: np.ndarray, beta_true: np.ndarray) -> float:
    """(1/p) ||beta~ - beta||_2^2, averaged over output columns if C > 1."""
    if beta_tilde.shape != beta_true.shape:
        raise DiagnosticsError(f"shape mismatch {beta_tilde.shape} vs {beta_true.shape}")
    bt = np.atleast_2d(beta_tilde.T).T
    bo = np.atleast_2d(beta_true.T).T
    p = bt.shape[0]
    return float(np.mean(np.sum((bt - bo) ** 2, axis=0) / p))


def accuracy(params: CnnParams, X: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax predictions matching the labels."""
    if X.shape[1] == 0:
        raise DiagnosticsError("empty evaluation set")
    pred = predict(params, X).argmax(axis=0)
    return float(np.mean(pred == np.asarray(labels)))


def attack_success_rate(params: CnnParams, X_stamped: np.ndarray, target_class: int) -> float:
    """Fraction of (already trigger-stamped, non-target-class) inputs sent to the target."""
    if X_stamped.shape[1] == 0:
        raise DiagnosticsError("empty evaluation set")
    pred = predict(params, X_stamped).argmax(axis=0)
    return float(np.mean(pred == target_class))


def asr_on_clean(params: CnnParams, X: np.ndarray, labels: np.ndarray,
                 spec: BackdoorSpec) -> float:
    """Stamp the non-target-class rows of a clean test set and measure ASR."""
    keep = np.asarray(labels) != spec.target_class
    if not keep.any():
        raise DiagnosticsError("no non-target-class samples to stamp")
    return attack_success_rate(params, apply_trigger(X[:, keep], spec), spec.target_class)


# ---------------------------------------------------------------------------
# closed-form deviation radii


def r_beta_bound(m: int, n: int, p: int) -> float:
    """Output-layer deviation radius 32 sqrt((mn)^2 log(p) / p)."""
    _check_counts(m=m, n=n, p=p)
    return float(32.0 * np.sqrt((m * n) ** 2 * np.log(p) / p))


def r_w_bound(m: int, n: int, p: int, k: int) -> float:
    """Hidden-layer deviation radius 100 mn log(p) / sqrt(pk)."""
    _check_counts(m=m, n=n, p=p, k=k)
    return float(100.0 * m * n * np.log(p) / np.sqrt(p * k))


def _check_counts(**kwargs):
    for name, v in kwargs.items():
        if v < 1:
            raise DiagnosticsError(f"{name} must be >= 1, got {v}")
    if kwargs.get("p", 2) < 2:
        raise DiagnosticsError("p must be >= 2")


def check_trajectory(trace: TrainTrace, resid0_sq: float, m: int, n: int, p: int,
                     k: int, gamma: float, slack: float = 1.1) -> dict:
    """Check every logged iterate against the deviation radii and the
    residual contraction ||y - f(t)||^2 <= slack * (1 - gamma/8)^t * ||y - f(0)||^2.

    resid0_sq is the pre-training residual ||y - f(0)||^2; logged entries
    are taken to start at iteration t = 1.
    """
    rb, rw = r_beta_bound(m, n, p), r_w_bound(m, n, p, k)
    beta_ok = all(v <= rb for v in trace.beta_dev)
    w_ok = all(v <= rw for v in trace.w_dev)
    rate = 1.0 - gamma / 8.0
    resid_ok = all(
        v <= slack * rate ** (t + 1) * resid0_sq for t, v in enumerate(trace.resid_sq)
    )
    return {
        "r_beta": rb, "r_w": rw,
        "beta_ok": beta_ok, "w_ok": w_ok, "resid_ok": resid_ok,
        "all_ok": beta_ok and w_ok and resid_ok,
    }


# ---------------------------------------------------------------------------
# design-condition estimates


@dataclass
class ConditionEstimate:
    """Sampled estimates of the design conditions for a tall matrix A.

    Rows A_i of the D x q design are the projection directions.  Over
    sampled unit vectors Delta:

      lambda_lower_hat = min_Delta mean_i |A_i . Delta|   (an UPPER bound on
        the true infimum: sampling can only miss worse directions),
      lambda_upper_hat = max_Delta sqrt(mean_i |A_i . Delta|^2)  (a LOWER
        bound on the true supremum),
      sigma2_hat = max over random sign vectors c of
        ||mean_i c_i A_i||^2 * D / q  (a lower-bound proxy for the noise
        transfer constant; the worst c is not searched exhaustively).
    """

    sigma2_hat: float
    lambda_lower_hat: float
    lambda_upper_hat: float
    num_directions: int
    matrix_shape: tuple

    def __post_init__(self):
        if not (self.lambda_lower_hat <= self.lambda_upper_hat + 1e-12):
            raise DiagnosticsError("lower estimate exceeded upper estimate")


def estimate_conditions(A: np.ndarray, num_directions: int = 200,
                        seed: int = 0, num_sign_vectors: int = 50) -> ConditionEstimate:
    """Monte Carlo estimates of the design conditions for a tall design A."""
    A = np.asarray(A, dtype=float)
    if num_directions < 100:
        raise DiagnosticsError(f"num_directions must be >= 100, got {num_directions}")
    D, q = A.shape
    # separate streams so a larger num_directions extends the same sample set
    dir_rng, sign_rng = (np.random.default_rng(s)
                         for s in np.random.SeedSequence(seed).spawn(2))
    deltas = dir_rng.standard_normal((num_directions, q))
    deltas /= np.linalg.norm(deltas, axis=1, keepdims=True)
    proj = np.abs(deltas @ A.T)                    # (num_directions, D)
    lam_lo = float(proj.mean(axis=1).min())
    lam_hi = float(np.sqrt((proj ** 2).mean(axis=1)).max())

    signs = sign_rng.choice([-1.0, 1.0], size=(num_sign_vectors, D))
    means = (signs @ A) / D                        # (num_sign_vectors, q)
    sigma2 = float((np.sum(means ** 2, axis=1) * D / q).max())
    return ConditionEstimate(
        sigma2_hat=sigma2,
        lambda_lower_hat=lam_lo,
        lambda_upper_hat=lam_hi,
        num_directions=num_directions,
        matrix_shape=(D, q),
    )
