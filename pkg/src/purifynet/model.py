"""One-hidden-layer patch ReLU network, its losses, and the two-rate trainer.

The network maps x to (1/sqrt(p)) * sum_j sum_i beta_j psi(W_j . patch_i(x))
with psi = ReLU.  The 1/sqrt(p) output normalization is applied everywhere
(forward, loss, gradients); beta is stored (p, C) with C = 1 for scalar
regression.

Training is full-batch gradient descent with the output layer stepped first
at rate gamma and the hidden layer stepped second at rate gamma/k using the
*updated* output weights, i.e. the hidden-layer gradient is evaluated at
(beta(t), W(t-1)).  In the frozen-hidden regime only beta is updated and it
must start from zero.

An experimental deeper variant stacks fully connected ReLU layers on top of
the patch layer; each layer's input is scaled by the inverse square root of
its width so the depth-1 case coincides exactly with the network above.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .patching import PatchConfig, patches_of, validate_config


class Regime(str, enum.Enum):
    JOINT = "joint"
    FROZEN_HIDDEN = "frozen_hidden"


class LossKind(str, enum.Enum):
    SQUARED_ERROR = "squared_error"
    SOFTMAX_CE = "softmax_ce"


class ModelError(ValueError):
    pass


class TrainDivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite parameters or gradients at iteration {iteration}")
        self.iteration = iteration


@dataclass
class CnnParams:
    """Weights plus the frozen initialization snapshots recovery needs."""

    W: np.ndarray        # (k, p), column j is kernel j
    beta: np.ndarray     # (p, C)
    W0: np.ndarray
    beta0: np.ndarray
    cfg: PatchConfig
    scale: str = "inv_sqrt_p"

    def __post_init__(self):
        if self.W.shape != self.W0.shape or self.beta.shape != self.beta0.shape:
            raise ModelError("weights and their initialization snapshots must match in shape")
        if self.W.shape[0] != self.cfg.k or self.W.shape[1] != self.beta.shape[0]:
            raise ModelError(
                f"inconsistent shapes: W {self.W.shape}, beta {self.beta.shape}, k={self.cfg.k}"
            )
        if self.scale != "inv_sqrt_p":
            raise ModelError(f"unsupported output scale {self.scale!r}")

    @property
    def p(self) -> int:
        return self.W.shape[1]

    @property
    def C(self) -> int:
        return self.beta.shape[1]

    def copy(self) -> "CnnParams":
        return CnnParams(
            W=self.W.copy(), beta=self.beta.copy(),
            W0=self.W0.copy(), beta0=self.beta0.copy(),
            cfg=self.cfg, scale=self.scale,
        )


@dataclass
class TrainConfig:
    gamma: float
    t_max: int
    regime: Regime = Regime.JOINT
    loss_kind: LossKind = LossKind.SQUARED_ERROR
    seed: int = 0
    stop_loss: float | None = None   # early stop once the loss falls below

    def __post_init__(self):
        self.regime = Regime(self.regime)
        self.loss_kind = LossKind(self.loss_kind)
        if not self.gamma > 0:
            raise ModelError(f"gamma must be > 0, got {self.gamma}")
        if self.t_max < 0:
            raise ModelError(f"t_max must be >= 0, got {self.t_max}")


@dataclass
class TrainTrace:
    """Per-iteration deviations from initialization and residual size.

    resid_sq holds ||y - f(t)||^2 under squared error and the loss value
    under cross entropy.
    """

    beta_dev: list = field(default_factory=list)
    w_dev: list = field(default_factory=list)
    resid_sq: list = field(default_factory=list)

    def log(self, params: CnnParams, resid_sq: float) -> None:
        self.beta_dev.append(float(np.linalg.norm(params.beta - params.beta0, axis=1).max()))
        self.w_dev.append(float(np.linalg.norm(params.W - params.W0, axis=0).max()))
        self.resid_sq.append(float(resid_sq))


def init_params(cfg: PatchConfig, p: int, C: int = 1, seed: int = 0) -> CnnParams:
    """Draw W entries iid N(0, 1/k) and beta entries iid N(0, 1); snapshot both."""
    if p < 1 or C < 1:
        raise ModelError(f"need p >= 1 and C >= 1, got p={p}, C={C}")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((cfg.k, p)) / np.sqrt(cfg.k)
    beta = rng.standard_normal((p, C))
    return CnnParams(W=W, beta=beta, W0=W.copy(), beta0=beta.copy(), cfg=cfg)


def _pre_activations(W: np.ndarray, Xp: np.ndarray) -> np.ndarray:
    """Z[i, j, s] = W_j . patch_i(x_s), shape (m, p, n), via batched matmul."""
    return np.matmul(W.T[None, :, :], Xp)


def patch_activations(W: np.ndarray, Xp: np.ndarray) -> np.ndarray:
    """a[j, s] = sum_i ReLU(W_j . patch_i(x_s)) for the (m, k, n) patch tensor Xp."""
    return np.maximum(_pre_activations(W, Xp), 0.0).sum(axis=0)


def predict(params: CnnParams, X: np.ndarray) -> np.ndarray:
    """Batched forward pass: d x n data -> C x n outputs."""
    Xp = patches_of(params.cfg, X)
    a = patch_activations(params.W, Xp)
    return (params.beta.T @ a) / np.sqrt(params.p)


def forward(params: CnnParams, x: np.ndarray) -> np.ndarray:
    """Network output for a single input, as a length-C vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.cfg.d,):
        raise ModelError(f"expected input of shape ({params.cfg.d},), got {x.shape}")
    return predict(params, x[:, None])[:, 0]


def _softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=0, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=0, keepdims=True)


def loss_from_outputs(F: np.ndarray, y: np.ndarray, kind: LossKind) -> float:
    n = F.shape[1]
    if kind == LossKind.SQUARED_ERROR:
        y = np.asarray(y, dtype=float).reshape(F.shape)
        return float(0.5 * np.sum((y - F) ** 2) / n)
    y = np.asarray(y)
    if y.shape != (n,) or not np.issubdtype(y.dtype, np.integer):
        raise ModelError("cross entropy expects integer class labels of shape (n,)")
    if y.min(initial=0) < 0 or y.max(initial=0) >= F.shape[0]:
        raise ModelError(f"class index out of range [0, {F.shape[0]})")
    P = _softmax(F)
    return float(-np.mean(np.log(P[y, np.arange(n)] + 1e-300)))


def loss(params: CnnParams, X: np.ndarray, y: np.ndarray,
         kind: LossKind = LossKind.SQUARED_ERROR) -> float:
    """Empirical risk: half mean squared error, or mean softmax cross entropy."""
    if X.shape[1] < 1:
        raise ModelError("need at least one sample")
    return loss_from_outputs(predict(params, X), y, LossKind(kind))


def _output_grad(F: np.ndarray, y: np.ndarray, kind: LossKind) -> np.ndarray:
    """dL/dF, shape (C, n), for the mean-over-samples losses above."""
    n = F.shape[1]
    if kind == LossKind.SQUARED_ERROR:
        return (F - np.asarray(y, dtype=float).reshape(F.shape)) / n
    G = _softmax(F)
    G[np.asarray(y), np.arange(n)] -= 1.0
    return G / n


def _grad_beta_from(a: np.ndarray, beta: np.ndarray, y, kind: LossKind, p: int):
    F = (beta.T @ a) / np.sqrt(p)
    g = _output_grad(F, y, kind)                     # (C, n)
    return (a @ g.T) / np.sqrt(p), F


def _grad_W_from(Z: np.ndarray, a: np.ndarray, Xp: np.ndarray, beta: np.ndarray,
                 y, kind: LossKind, p: int):
    F = (beta.T @ a) / np.sqrt(p)
    g = _output_grad(F, y, kind)
    upstream = (beta @ g) / np.sqrt(p)               # (p, n)
    gated = np.where(Z > 0.0, upstream[None, :, :], 0.0)   # subgradient 0 at 0
    return np.matmul(Xp, gated.transpose(0, 2, 1)).sum(axis=0)


def gradients(W: np.ndarray, beta: np.ndarray, Xp: np.ndarray, y: np.ndarray,
              kind: LossKind, p: int):
    """Analytical (dL/dbeta, dL/dW) at the given weights.

    The trainer evaluates the two at different output weights to honor the
    beta-first update order.
    """
    Z = _pre_activations(W, Xp)
    a = np.maximum(Z, 0.0).sum(axis=0)               # (p, n)
    grad_beta, F = _grad_beta_from(a, beta, y, kind, p)
    grad_W = _grad_W_from(Z, a, Xp, beta, y, kind, p)
    return grad_beta, grad_W, F


def train(params: CnnParams, X: np.ndarray, y: np.ndarray, tc: TrainConfig,
          trace: TrainTrace | None = None) -> CnnParams:
    """Run t_max full-batch iterations; returns updated params (input untouched)."""
    params = params.copy()
    if tc.regime == Regime.FROZEN_HIDDEN and np.any(params.beta0 != 0.0):
        raise ModelError("frozen-hidden training requires beta0 = 0")
    Xp = np.ascontiguousarray(patches_of(params.cfg, X))
    k, p = params.cfg.k, params.p
    sqp = np.sqrt(p)

    frozen = tc.regime == Regime.FROZEN_HIDDEN
    Z = a = None
    for t in range(tc.t_max):
        if Z is None:
            # features are computed once per value of W: here on entry, and
            # after each hidden-layer update below
            Z = _pre_activations(params.W, Xp)
            a = np.maximum(Z, 0.0).sum(axis=0)
        grad_beta, _ = _grad_beta_from(a, params.beta, y, tc.loss_kind, p)
        params.beta = params.beta - tc.gamma * grad_beta
        if not frozen:
            # hidden-layer gradient at (beta(t), W(t-1)); Z and a still valid
            grad_W = _grad_W_from(Z, a, Xp, params.beta, y, tc.loss_kind, p)
            params.W = params.W - (tc.gamma / k) * grad_W
        if not (np.all(np.isfinite(params.beta)) and np.all(np.isfinite(params.W))):
            raise TrainDivergedError(t)
        if frozen:
            F = (params.beta.T @ a) / sqp
        else:
            Z = _pre_activations(params.W, Xp)
            a = np.maximum(Z, 0.0).sum(axis=0)
            F = (params.beta.T @ a) / sqp
        cur = loss_from_outputs(F, y, tc.loss_kind)
        if trace is not None:
            if tc.loss_kind == LossKind.SQUARED_ERROR:
                resid = float(np.sum((np.asarray(y, dtype=float).reshape(F.shape) - F) ** 2))
            else:
                resid = cur
            trace.log(params, resid)
        if tc.stop_loss is not None and cur < tc.stop_loss:
            break
    return params


def train_two_phase(params: CnnParams, X: np.ndarray, y: np.ndarray, tc: TrainConfig,
                    trace: TrainTrace | None = None) -> CnnParams:
    """Frozen-hidden schedule: joint training to move W, then retrain beta
    from zero with the hidden layer frozen.

    The returned snapshots are the ones purification needs: W0 from before
    the joint phase, beta0 = 0 from the start of the frozen phase.
    """
    joint_tc = TrainConfig(gamma=tc.gamma, t_max=tc.t_max, regime=Regime.JOINT,
                           loss_kind=tc.loss_kind, seed=tc.seed, stop_loss=tc.stop_loss)
    phase1 = train(params, X, y, joint_tc)
    phase1.beta = np.zeros_like(phase1.beta)
    phase1.beta0 = np.zeros_like(phase1.beta0)
    frozen_tc = TrainConfig(gamma=tc.gamma, t_max=tc.t_max, regime=Regime.FROZEN_HIDDEN,
                            loss_kind=tc.loss_kind, seed=tc.seed, stop_loss=tc.stop_loss)
    return train(phase1, X, y, frozen_tc, trace=trace)


# ---------------------------------------------------------------------------
# experimental deeper stacks


@dataclass
class MultiLayerParams:
    """Patch layer + fully connected ReLU layers + linear head, with snapshots."""

    cfg: PatchConfig
    W: np.ndarray                # (k, p1)
    W0: np.ndarray
    hidden: list                 # V_l: (p_l, p_{l-1}) for layers 2..L
    hidden0: list
    beta: np.ndarray             # (p_L, C)
    beta0: np.ndarray

    @property
    def widths(self) -> list[int]:
        return [self.W.shape[1]] + [V.shape[0] for V in self.hidden]

    @property
    def C(self) -> int:
        return self.beta.shape[1]

    def copy(self) -> "MultiLayerParams":
        return MultiLayerParams(
            cfg=self.cfg, W=self.W.copy(), W0=self.W0.copy(),
            hidden=[V.copy() for V in self.hidden],
            hidden0=[V.copy() for V in self.hidden0],
            beta=self.beta.copy(), beta0=self.beta0.copy(),
        )


def init_multilayer(cfg: PatchConfig, widths: list[int], C: int = 1,
                    seed: int = 0) -> MultiLayerParams:
    """widths = [p_1, ..., p_L]: patch layer width then dense layer widths."""
    if not 1 <= len(widths) <= 3:
        raise ModelError("supported depth is 1 to 3 hidden layers")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((cfg.k, widths[0])) / np.sqrt(cfg.k)
    hidden = [rng.standard_normal((widths[i], widths[i - 1]))
              for i in range(1, len(widths))]
    beta = rng.standard_normal((widths[-1], C))
    return MultiLayerParams(
        cfg=cfg, W=W, W0=W.copy(),
        hidden=hidden, hidden0=[V.copy() for V in hidden],
        beta=beta, beta0=beta.copy(),
    )


def multilayer_activations(ml: MultiLayerParams, X: np.ndarray) -> list[np.ndarray]:
    """Hidden activations [h_1, ..., h_L] on a d x n batch (pre-scaling values)."""
    Xp = patches_of(ml.cfg, X)
    hs = [patch_activations(ml.W, Xp)]
    for V in ml.hidden:
        prev = hs[-1]
        hs.append(np.maximum(V @ (prev / np.sqrt(prev.shape[0])), 0.0))
    return hs


def predict_multilayer(ml: MultiLayerParams, X: np.ndarray) -> np.ndarray:
    h = multilayer_activations(ml, X)[-1]
    return (ml.beta.T @ h) / np.sqrt(h.shape[0])


def gradients_multilayer(ml: MultiLayerParams, X: np.ndarray, y: np.ndarray,
                         kind: LossKind):
    """Backprop through the stack; returns (grad_beta, [grad_V...], grad_W)."""
    Xp = np.ascontiguousarray(patches_of(ml.cfg, X))
    Z = _pre_activations(ml.W, Xp)
    hs = [np.maximum(Z, 0.0).sum(axis=0)]
    for V in ml.hidden:
        prev = hs[-1]
        hs.append(np.maximum(V @ (prev / np.sqrt(prev.shape[0])), 0.0))
    pL = hs[-1].shape[0]
    F = (ml.beta.T @ hs[-1]) / np.sqrt(pL)
    g = _output_grad(F, y, kind)

    grad_beta = (hs[-1] @ g.T) / np.sqrt(pL)
    dh = (ml.beta @ g) / np.sqrt(pL)
    grad_hidden = []
    for li in range(len(ml.hidden) - 1, -1, -1):
        V, h_in, h_out = ml.hidden[li], hs[li], hs[li + 1]
        s_in = h_in / np.sqrt(h_in.shape[0])
        dpre = dh * np.where(h_out > 0.0, 1.0, 0.0)
        grad_hidden.append(dpre @ s_in.T)
        dh = (V.T @ dpre) / np.sqrt(h_in.shape[0])
    grad_hidden.reverse()
    gated = np.where(Z > 0.0, dh[None, :, :], 0.0)
    grad_W = np.matmul(Xp, gated.transpose(0, 2, 1)).sum(axis=0)
    return grad_beta, grad_hidden, grad_W, F


def train_multilayer(ml: MultiLayerParams, X: np.ndarray, y: np.ndarray,
                     tc: TrainConfig, trace: TrainTrace | None = None) -> MultiLayerParams:
    """Full-batch gradient descent on the stack.

    Per-layer rates follow the two-rate pattern: the head steps at gamma,
    each layer below at gamma divided by its input dimension.
    """
    ml = ml.copy()
    for t in range(tc.t_max):
        grad_beta, grad_hidden, grad_W, F = gradients_multilayer(ml, X, y, tc.loss_kind)
        ml.beta = ml.beta - tc.gamma * grad_beta
        for li, gV in enumerate(grad_hidden):
            ml.hidden[li] = ml.hidden[li] - (tc.gamma / ml.hidden[li].shape[1]) * gV
        ml.W = ml.W - (tc.gamma / ml.cfg.k) * grad_W
        if not all(np.all(np.isfinite(arr)) for arr in [ml.beta, ml.W] + ml.hidden):
            raise TrainDivergedError(t)
        if trace is not None:
            Fc = predict_multilayer(ml, X)
            if tc.loss_kind == LossKind.SQUARED_ERROR:
                resid = float(np.sum((np.asarray(y, dtype=float).reshape(Fc.shape) - Fc) ** 2))
            else:
                resid = loss_from_outputs(Fc, y, tc.loss_kind)
            trace.beta_dev.append(float(np.linalg.norm(ml.beta - ml.beta0, axis=1).max()))
            trace.w_dev.append(float(np.linalg.norm(ml.W - ml.W0, axis=0).max()))
            trace.resid_sq.append(resid)
    return ml


# ---------------------------------------------------------------------------
# model file format "PNJ1"


def save_model(path, params: CnnParams | MultiLayerParams) -> None:
    cfg = params.cfg
    doc = {
        "format": "PNJ1",
        "d": cfg.d, "m": cfg.m, "k": cfg.k,
        "p": params.W.shape[1],
        "C": params.beta.shape[1],
        "scale": "inv_sqrt_p",
        "W": params.W.T.tolist(),      # row-major p x k
        "W0": params.W0.T.tolist(),
        "beta": params.beta.tolist(),  # p x C
        "beta0": params.beta0.tolist(),
    }
    if isinstance(params, MultiLayerParams) and params.hidden:
        doc["layers"] = [
            {"V": V.tolist(), "V0": V0.tolist()}
            for V, V0 in zip(params.hidden, params.hidden0)
        ]
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> CnnParams | MultiLayerParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "PNJ1":
        raise ModelError(f"not a PNJ1 model file: format={doc.get('format')!r}")
    cfg = validate_config(doc["d"], doc["m"], doc["k"])
    W = np.asarray(doc["W"], dtype=float).T
    W0 = np.asarray(doc["W0"], dtype=float).T
    beta = np.asarray(doc["beta"], dtype=float)
    beta0 = np.asarray(doc["beta0"], dtype=float)
    if "layers" in doc and doc["layers"]:
        hidden = [np.asarray(layer["V"], dtype=float) for layer in doc["layers"]]
        hidden0 = [np.asarray(layer["V0"], dtype=float) for layer in doc["layers"]]
        return MultiLayerParams(cfg=cfg, W=W, W0=W0, hidden=hidden, hidden0=hidden0,
                                beta=beta, beta0=beta0)
    return CnnParams(W=W, beta=beta, W0=W0, beta0=beta0, cfg=cfg)
