"""SGD, SAM and RSAM updates on flat parameter vectors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .entropy import RenyiOrder
from .network import MlpSpec, NetworkParams, loss_and_grad

KINDS = ("sgd", "sam", "rsam")
WARMUP = "warmup"
SHARPNESS_AWARE = "sharpness_aware"

# RSAM settings reported for image benchmarks: name -> (rho, alpha, sgd warm-up epochs, total epochs)
RSAM_PRESETS = {
    "cifar10-resnet20": dict(rho=0.65, alpha=1.2, warmup_epochs=5, epochs=200),
    "cifar10-resnet56": dict(rho=0.8, alpha=1.2, warmup_epochs=5, epochs=200),
    "cifar10-wrn28-10": dict(rho=0.3, alpha=1.05, warmup_epochs=5, epochs=200),
    "cifar100-resnet20": dict(rho=0.76, alpha=1.1, warmup_epochs=5, epochs=200),
    "cifar100-resnet56": dict(rho=0.9, alpha=1.1, warmup_epochs=5, epochs=200),
    "cifar100-wrn28-10": dict(rho=0.7, alpha=1.05, warmup_epochs=5, epochs=200),
    "tinyimagenet-resnet50": dict(rho=1.25, alpha=1.1, warmup_threshold=0.30, epochs=100),
}


@dataclass
class OptimConfig:
    """Optimizer settings.

    Warm-up runs plain SGD either for ``warmup_epochs`` epochs or, when
    ``warmup_threshold`` is set, until validation accuracy first reaches it.
    ``lr_schedule="cosine"`` decays from ``lr`` to 0 over ``total_epochs``
    after ``lr_warmup_epochs`` of linear ramp-up.
    """

    kind: str = "sgd"
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    rho: float = 0.0
    alpha: float | None = None
    warmup_epochs: int = 0
    warmup_threshold: float | None = None
    lr_schedule: str = "constant"
    total_epochs: int = 0
    lr_warmup_epochs: int = 0
    sign_flip: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.lr >= 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0 or self.rho < 0:
            raise ValueError("weight decay and rho must be non-negative")
        if self.kind in ("sam", "rsam") and not self.rho > 0:
            raise ValueError(f"{self.kind} needs rho > 0")
        if self.kind == "rsam":
            if self.alpha is None:
                raise ValueError("rsam needs a Rényi order alpha")
            RenyiOrder(self.alpha)
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.lr_schedule == "cosine" and self.total_epochs < 1:
            raise ValueError("cosine schedule needs total_epochs")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        d = dict(d)
        warm = d.pop("warmup", None)
        if isinstance(warm, dict):
            if "fixed_epochs" in warm:
                d["warmup_epochs"] = int(warm["fixed_epochs"])
            if "metric_threshold" in warm:
                d["warmup_threshold"] = float(warm["metric_threshold"])
        preset = d.pop("preset", None)
        if preset is not None:
            base = dict(RSAM_PRESETS[preset])
            base.pop("epochs", None)
            d = {**base, **d}
        return cls(**d)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``."""
        if self.lr_schedule == "constant":
            return self.lr
        if epoch < self.lr_warmup_epochs:
            return self.lr * (epoch + 1) / self.lr_warmup_epochs
        span = max(self.total_epochs - self.lr_warmup_epochs, 1)
        t = min((epoch - self.lr_warmup_epochs) / span, 1.0)
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * t))


@dataclass
class OptimState:
    buffer: np.ndarray
    epoch: int = 0
    phase: str = WARMUP
    switched_at: int | None = None
    last_loss: float = field(default=float("nan"), repr=False)

    @classmethod
    def fresh(cls, n: int, cfg: OptimConfig) -> "OptimState":
        phase = WARMUP
        if cfg.kind != "sgd" and cfg.warmup_threshold is None and cfg.warmup_epochs <= 0:
            phase = SHARPNESS_AWARE
        return cls(np.zeros(n), 0, phase, 0 if phase == SHARPNESS_AWARE else None)


def sgd_step(params, grad, cfg: OptimConfig, state: OptimState, lr: float | None = None) -> np.ndarray:
    """Heavy-ball step with coupled weight decay; updates ``state.buffer`` in place."""
    flat = params.flat if isinstance(params, NetworkParams) else np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != flat.shape or state.buffer.shape != flat.shape:
        raise ValueError("gradient, buffer and parameters must have the same shape")
    lr = cfg.lr if lr is None else lr
    state.buffer = cfg.momentum * state.buffer + (grad + cfg.weight_decay * flat)
    return flat - lr * state.buffer


def sam_perturbation(grad, rho: float) -> np.ndarray:
    g = np.asarray(grad, dtype=float)
    nrm = np.linalg.norm(g)
    if rho == 0 or nrm == 0:
        return np.zeros_like(g)
    return (rho / nrm) * g


def _log_ratio(g, alpha: float, extra: float):
    """log( sum|g|^(2 alpha) / (sum g^2)^(alpha + extra) ) over nonzero entries."""
    mag = np.abs(g[g != 0])
    la = np.log(mag)
    return logsumexp(2.0 * alpha * la) - (alpha + extra) * logsumexp(2.0 * la)


def rsam_perturbation(grad, rho: float, alpha: float, sign_flip: bool = False) -> np.ndarray:
    """eps = -rho * sign(1 - alpha) * s(g) * g with s(g) = sum|g|^(2a) / (sum g^2)^(a+1).

    For alpha > 1 this moves up the gradient, like SAM. Entries enter the
    power sum through their magnitudes. ``sign_flip`` reverses the
    displacement.
    """
    g = np.asarray(grad, dtype=float)
    alpha = RenyiOrder(alpha).alpha
    if alpha is None:
        raise ValueError("rsam perturbation is undefined at the Shannon limit")
    if rho == 0 or not np.any(g):
        return np.zeros_like(g)
    log_s = _log_ratio(g, alpha, 1.0)
    sign = -1.0 if alpha < 1 else 1.0  # equals -sign(1 - alpha)
    if sign_flip:
        sign = -sign
    out = np.zeros_like(g)
    nz = g != 0
    # s alone can overflow for tiny gradients while s * g stays finite
    out[nz] = sign * rho * np.sign(g[nz]) * np.exp(log_s + np.log(np.abs(g[nz])))
    return out


def renyi_regularizer_value(grad, alpha: float) -> float:
    """-sign(1 - alpha) * sum|g|^(2a) / (sum g^2)^a."""
    g = np.asarray(grad, dtype=float)
    alpha = RenyiOrder(alpha).alpha
    if alpha is None:
        raise ValueError("regularizer is undefined at the Shannon limit")
    if not np.any(g):
        raise ValueError("regularizer is undefined for a zero gradient")
    return -math.copysign(1.0, 1.0 - alpha) * math.exp(_log_ratio(g, alpha, 0.0))


def perturbation(grad, cfg: OptimConfig) -> np.ndarray:
    if cfg.kind == "sam":
        return sam_perturbation(grad, cfg.rho)
    if cfg.kind == "rsam":
        return rsam_perturbation(grad, cfg.rho, cfg.alpha, cfg.sign_flip)
    return np.zeros_like(np.asarray(grad, dtype=float))


def rsam_step(spec: MlpSpec, params: NetworkParams, batch, cfg: OptimConfig, state: OptimState, lr: float | None = None) -> NetworkParams:
    """One sharpness-aware step: gradient at params + eps, then the SGD update.

    Works for both ``sam`` and ``rsam`` configs; eps comes from the same
    mini-batch gradient.
    """
    if state.phase != SHARPNESS_AWARE:
        raise RuntimeError("sharpness-aware step requested during warm-up")
    loss, g = loss_and_grad(spec, params, batch)
    eps = perturbation(g, cfg)
    if np.any(eps):
        _, g = loss_and_grad(spec, params.with_flat(params.flat + eps), batch)
    state.last_loss = loss
    return params.with_flat(sgd_step(params, g, cfg, state, lr))


def train_step(spec: MlpSpec, params: NetworkParams, batch, cfg: OptimConfig, state: OptimState, lr: float | None = None) -> NetworkParams:
    if cfg.kind != "sgd" and state.phase == SHARPNESS_AWARE:
        return rsam_step(spec, params, batch, cfg, state, lr)
    loss, g = loss_and_grad(spec, params, batch)
    state.last_loss = loss
    return params.with_flat(sgd_step(params, g, cfg, state, lr))


def warmup_gate(state: OptimState, metrics: dict, cfg: OptimConfig) -> str:
    """Phase to use after an epoch finishes.

    ``metrics["epoch"]`` counts completed epochs (1-based);
    ``metrics["val_acc"]`` is that epoch's validation accuracy. Once the
    phase is sharpness-aware it never reverts.
    """
    if state.phase == SHARPNESS_AWARE:
        return state.phase
    epoch = int(metrics["epoch"])
    if cfg.warmup_threshold is not None:
        acc = metrics.get("val_acc")
        switch = acc is not None and acc >= cfg.warmup_threshold
    else:
        switch = epoch >= cfg.warmup_epochs
    if switch:
        state.phase = SHARPNESS_AWARE
        state.switched_at = epoch
    state.epoch = epoch
    return state.phase
