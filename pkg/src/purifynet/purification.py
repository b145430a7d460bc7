"""Model purification: least-absolute-deviations recovery of trained weights
from contaminated ones, against design matrices built from clean repair data.

Step 1 recovers each hidden kernel: the displacement W_j - W_j(0) of any
gradient-descent-trained kernel lies in the span of the patch vectors
patch_i(x_s), so the k x mn design [patches of the repair set] plus an l1
fit of Theta_j - W_j(0) reproduces it while rejecting sparse corruption.
Step 2 recovers the output layer against the p x n design of summed patch
activations.  Which weights generate those activations depends on the
training regime: the purified hidden weights in the frozen-hidden regime
(where the guarantee is exact), the initialization in the joint regime.

If a design is wider than tall the response is always exactly
representable and the fit degenerates to interpolation; that case is
executed with a warning since it purifies nothing.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lad import LadSolution, SolveOptions, solve_many
from .model import CnnParams, MultiLayerParams, Regime, patch_activations
from .patching import PatchConfig, patches_of


class PurifyError(ValueError):
    pass


class DesignWarning(UserWarning):
    """A design matrix is outside the geometry the guarantees assume."""


class RepairOrigin(str, enum.Enum):
    FROM_TRAINING = "training"
    EXTERNAL = "external"


@dataclass(frozen=True)
class RepairSet:
    """Clean, unlabeled inputs used to build the recovery designs."""

    X: np.ndarray
    origin: RepairOrigin = RepairOrigin.FROM_TRAINING

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise PurifyError(f"repair set must be d x n with n >= 1, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise PurifyError("repair set contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "origin", RepairOrigin(self.origin))

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass
class PurifyReport:
    W_tilde: np.ndarray
    beta_tilde: np.ndarray
    per_kernel: list          # one summary dict per hidden kernel
    per_class: list           # one summary dict per output column
    design_shapes: tuple      # ((k, mn), (p, n))
    warnings: list = field(default_factory=list)

    @property
    def all_certified(self) -> bool:
        return all(s["certified"] for s in self.per_kernel + self.per_class)

    def to_json_dict(self) -> dict:
        return {
            "design_shapes": [list(s) for s in self.design_shapes],
            "all_certified": self.all_certified,
            "warnings": list(self.warnings),
            "per_kernel": self.per_kernel,
            "per_class": self.per_class,
        }


def build_design_W(repair: RepairSet, cfg: PatchConfig) -> np.ndarray:
    """k x mn design whose column (i-1)*n + s is patch i of repair input s."""
    Xp = patches_of(cfg, repair.X)                       # (m, k, n)
    return np.ascontiguousarray(Xp.transpose(1, 0, 2).reshape(cfg.k, cfg.m * repair.n))


def build_design_beta(repair: RepairSet, W_ref: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """p x n design with entry (j, s) = sum_i ReLU(W_ref_j . patch_i(x_s))."""
    if W_ref.shape[0] != cfg.k:
        raise PurifyError(f"W_ref has {W_ref.shape[0]} rows, expected k={cfg.k}")
    return patch_activations(W_ref, patches_of(cfg, repair.X))


def _recover(A: np.ndarray, responses: np.ndarray, base: np.ndarray,
             opts: SolveOptions, label: str, notes: list):
    """Fit each response row in span(A); returns (base + A u per row, summaries).

    Degenerates to exact interpolation when A has at least as many columns
    as rows (the response is then always representable).
    """
    D, q = A.shape
    if q >= D:
        msg = (f"{label} design is {D} x {q} (not tall): responses are exactly "
               "representable and this step cannot remove noise")
        warnings.warn(msg, DesignWarning)
        notes.append(msg)
        U = np.linalg.lstsq(A, responses.T, rcond=None)[0].T
        fitted = base + U @ A.T
        sums = [{"certified": True, "objective": 0.0, "residual_zero_count": D,
                 "certificate_gap": 0.0, "interpolated": True}
                for _ in range(responses.shape[0])]
        return fitted, sums
    sols = solve_many(A, responses, opts)
    fitted = base + np.stack([A @ s.u for s in sols], axis=0)
    sums = [_summary(s) for s in sols]
    return fitted, sums


def _summary(sol: LadSolution) -> dict:
    return {
        "certified": bool(sol.certified),
        "objective": float(sol.objective),
        "residual_zero_count": int(sol.zero_set.size),
        "certificate_gap": float(sol.certificate_gap),
    }


def purify(contaminated: CnnParams, repair: RepairSet,
           regime: Regime = Regime.JOINT,
           opts: SolveOptions | None = None) -> PurifyReport:
    """Run the two-step recovery; never raises on an uncertified solve."""
    regime = Regime(regime)
    opts = opts or SolveOptions()
    cfg = contaminated.cfg
    if repair.X.shape[0] != cfg.d:
        raise PurifyError(f"repair data has {repair.X.shape[0]} rows, expected d={cfg.d}")
    notes: list = []
    mn = cfg.m * repair.n
    if mn > cfg.k:
        _note(notes, f"mn = {mn} exceeds k = {cfg.k}: hidden-layer recovery needs mn <= k")
    if repair.n > contaminated.p:
        _note(notes, f"repair n = {repair.n} exceeds p = {contaminated.p}: "
                     "output-layer recovery needs n <= p")

    A_W = build_design_W(repair, cfg)
    W_resp = (contaminated.W - contaminated.W0).T        # (p, k)
    W_fit, per_kernel = _recover(A_W, W_resp, contaminated.W0.T, opts, "hidden-layer", notes)
    W_tilde = W_fit.T

    W_ref = W_tilde if regime == Regime.FROZEN_HIDDEN else contaminated.W0
    A_beta = build_design_beta(repair, W_ref, cfg)
    beta_resp = (contaminated.beta - contaminated.beta0).T   # (C, p)
    beta_fit, per_class = _recover(A_beta, beta_resp, contaminated.beta0.T, opts,
                                   "output-layer", notes)
    beta_tilde = beta_fit.T

    return PurifyReport(
        W_tilde=W_tilde, beta_tilde=beta_tilde,
        per_kernel=per_kernel, per_class=per_class,
        design_shapes=(A_W.shape, A_beta.shape),
        warnings=notes,
    )


def purified_params(contaminated: CnnParams, report: PurifyReport) -> CnnParams:
    """Assemble a CnnParams from a purify report (snapshots carried over)."""
    return CnnParams(W=report.W_tilde, beta=report.beta_tilde,
                     W0=contaminated.W0.copy(), beta0=contaminated.beta0.copy(),
                     cfg=contaminated.cfg)


def _note(notes: list, msg: str) -> None:
    warnings.warn(msg, DesignWarning)
    notes.append(msg)


# ---------------------------------------------------------------------------
# deeper stacks


def purify_multilayer(contaminated: MultiLayerParams, repair: RepairSet,
                      opts: SolveOptions | None = None):
    """Purify a stack layer by layer, bottom up.

    Layer 1 uses the patch design; every deeper layer is fit against the
    activations of the already-purified layers below it on the repair set;
    the head goes last.  Requires the training-time initialization
    snapshots carried by the stack.  Returns (purified stack, report dict).
    """
    opts = opts or SolveOptions()
    cfg = contaminated.cfg
    if repair.X.shape[0] != cfg.d:
        raise PurifyError(f"repair data has {repair.X.shape[0]} rows, expected d={cfg.d}")
    notes: list = []
    out = contaminated.copy()
    layer_reports = []

    A_W = build_design_W(repair, cfg)
    W_resp = (contaminated.W - contaminated.W0).T
    W_fit, sums = _recover(A_W, W_resp, contaminated.W0.T, opts, "layer-1", notes)
    out.W = W_fit.T
    layer_reports.append({"layer": 1, "design_shape": list(A_W.shape), "solves": sums})

    Xp = patches_of(cfg, repair.X)
    h = patch_activations(out.W, Xp)
    for li, (V, V0) in enumerate(zip(contaminated.hidden, contaminated.hidden0)):
        design = (h / np.sqrt(h.shape[0])).copy()         # (p_in, n)
        V_fit, sums = _recover(design, V - V0, V0, opts, f"layer-{li + 2}", notes)
        out.hidden[li] = V_fit
        layer_reports.append({"layer": li + 2, "design_shape": list(design.shape),
                              "solves": sums})
        h = np.maximum(out.hidden[li] @ (h / np.sqrt(h.shape[0])), 0.0)

    design = h / np.sqrt(h.shape[0])
    beta_fit, sums = _recover(design, (contaminated.beta - contaminated.beta0).T,
                              contaminated.beta0.T, opts, "head", notes)
    out.beta = beta_fit.T
    layer_reports.append({"layer": "head", "design_shape": list(design.shape),
                          "solves": sums})

    report = {"layers": layer_reports, "warnings": notes,
              "all_certified": all(s["certified"]
                                   for lr in layer_reports for s in lr["solves"])}
    return out, report
