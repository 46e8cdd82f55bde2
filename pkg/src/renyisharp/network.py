"""Small fully-connected networks with exact gradients and Hessian-vector products.

Parameters live in one flat float64 vector; layer ``l`` owns a contiguous
slice holding its weight matrix (row-major, out x in) followed by its bias
when biases are enabled. Hessian-vector products are computed exactly by
forward-over-reverse propagation; a central-difference variant is kept as
a cross-check.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import log_softmax, ndtr, softmax

from .linalg import DenseSymmetricMatrix, SeededRng, SymmetricOperator

ACTIVATIONS = ("relu", "leaky_relu", "gelu")
LOSSES = ("mse", "softmax_cross_entropy")
EXPLICIT_CAP = 4096

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MlpSpec:
    layer_shapes: tuple
    activation: str = "relu"
    loss: str = "softmax_cross_entropy"
    bias: bool = False
    slope: float = 0.01

    def __post_init__(self):
        shapes = tuple((int(o), int(i)) for o, i in self.layer_shapes)
        object.__setattr__(self, "layer_shapes", shapes)
        if not shapes:
            raise ValueError("network needs at least one layer")
        if any(o < 1 or i < 1 for o, i in shapes):
            raise ValueError(f"layer dimensions must be positive: {shapes}")
        for (o_prev, _), (_, i_next) in zip(shapes, shapes[1:]):
            if o_prev != i_next:
                raise ValueError(f"layer shapes do not compose: {shapes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @classmethod
    def from_widths(cls, widths: Sequence[int], **kw) -> "MlpSpec":
        """``[d_in, h1, ..., d_out]`` -> layer shapes ``[(h1, d_in), ...]``."""
        return cls(tuple((o, i) for i, o in zip(widths, widths[1:])), **kw)

    @property
    def homogeneous(self) -> bool:
        """True when the activation is positively homogeneous (gelu is only approximately so)."""
        return self.activation in ("relu", "leaky_relu")

    @property
    def n_layers(self) -> int:
        return len(self.layer_shapes)

    @property
    def in_dim(self) -> int:
        return self.layer_shapes[0][1]

    @property
    def out_dim(self) -> int:
        return self.layer_shapes[-1][0]

    def layer_sizes(self) -> list:
        return [o * i + (o if self.bias else 0) for o, i in self.layer_shapes]

    @property
    def n_params(self) -> int:
        return sum(self.layer_sizes())

    def to_dict(self) -> dict:
        return {
            "layer_shapes": [list(s) for s in self.layer_shapes],
            "activation": self.activation,
            "loss": self.loss,
            "bias": self.bias,
            "slope": self.slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            tuple(tuple(s) for s in d["layer_shapes"]),
            activation=d.get("activation", "relu"),
            loss=d.get("loss", "softmax_cross_entropy"),
            bias=bool(d.get("bias", False)),
            slope=float(d.get("slope", 0.01)),
        )


@dataclass
class NetworkParams:
    layer_shapes: tuple
    flat: np.ndarray
    bias: bool = False

    def __post_init__(self):
        self.layer_shapes = tuple((int(o), int(i)) for o, i in self.layer_shapes)
        self.flat = np.asarray(self.flat, dtype=float).ravel()
        if self.flat.size != sum(self._sizes()):
            raise ValueError(f"flat vector has {self.flat.size} entries, layer shapes need {sum(self._sizes())}")

    def _sizes(self):
        return [o * i + (o if self.bias else 0) for o, i in self.layer_shapes]

    @property
    def layer_ranges(self) -> list:
        out, start = [], 0
        for size in self._sizes():
            out.append((start, start + size))
            start += size
        return out

    def weight(self, l: int) -> np.ndarray:
        o, i = self.layer_shapes[l]
        start = self.layer_ranges[l][0]
        return self.flat[start : start + o * i].reshape(o, i)

    def bias_of(self, l: int) -> np.ndarray | None:
        if not self.bias:
            return None
        o, i = self.layer_shapes[l]
        start = self.layer_ranges[l][0] + o * i
        return self.flat[start : start + o]

    def with_flat(self, flat) -> "NetworkParams":
        return NetworkParams(self.layer_shapes, np.array(flat, dtype=float), self.bias)

    def copy(self) -> "NetworkParams":
        return self.with_flat(self.flat.copy())

    @classmethod
    def from_weights(cls, weights: Sequence, biases: Sequence | None = None) -> "NetworkParams":
        shapes = [np.shape(w) for w in weights]
        parts = []
        for l, w in enumerate(weights):
            parts.append(np.asarray(w, dtype=float).ravel())
            if biases is not None:
                parts.append(np.asarray(biases[l], dtype=float).ravel())
        return cls(shapes, np.concatenate(parts), biases is not None)


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self):
        return self.inputs.shape[0]

    @classmethod
    def from_labels(cls, inputs, labels, classes: int | None = None) -> "Dataset":
        labels = np.asarray(labels, dtype=int)
        classes = classes or int(labels.max()) + 1
        return cls(inputs, np.eye(classes)[labels])

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx], dict(self.meta))


def _as_batch(batch):
    if isinstance(batch, Dataset):
        return batch.inputs, batch.targets
    x, y = batch
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :] if x.shape[0] == 1 else y[:, None]
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    return x, y


# ---------------------------------------------------------------------------
# activations: value, first and second derivative
# ---------------------------------------------------------------------------


def _act(spec: MlpSpec, z):
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    if spec.activation == "leaky_relu":
        return np.where(z > 0, z, spec.slope * z)
    return z * ndtr(z)


def _act_d1(spec: MlpSpec, z):
    if spec.activation == "relu":
        return (z > 0).astype(float)
    if spec.activation == "leaky_relu":
        return np.where(z > 0, 1.0, spec.slope)
    return ndtr(z) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _act_d2(spec: MlpSpec, z):
    if spec.activation != "gelu":
        return None
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z) * (2.0 - z * z)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _check(spec: MlpSpec, params: NetworkParams):
    if tuple(params.layer_shapes) != spec.layer_shapes or params.bias != spec.bias:
        raise ValueError("parameters do not match the network spec")


def _forward_all(spec, params, x):
    hs, zs = [x], []
    h = x
    for l in range(spec.n_layers):
        z = h @ params.weight(l).T
        if spec.bias:
            z = z + params.bias_of(l)
        zs.append(z)
        if l < spec.n_layers - 1:
            h = _act(spec, z)
            hs.append(h)
    return hs, zs


def forward(spec: MlpSpec, params: NetworkParams, x) -> np.ndarray:
    """Network output for one input vector or a batch of row inputs."""
    _check(spec, params)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != spec.in_dim:
        raise ValueError(f"input has {xb.shape[1]} features, network expects {spec.in_dim}")
    _, zs = _forward_all(spec, params, xb)
    return zs[-1][0] if single else zs[-1]


def _loss_and_delta(spec, out, y):
    n = out.shape[0]
    if y.shape != out.shape:
        raise ValueError(f"targets have shape {y.shape}, outputs {out.shape}")
    if spec.loss == "mse":
        r = out - y
        return float(np.sum(r * r) / n), 2.0 * r / n
    logp = log_softmax(out, axis=1)
    loss = float(-np.sum(y * logp) / n)
    return loss, (np.exp(logp) * y.sum(axis=1, keepdims=True) - y) / n


def loss_value(spec: MlpSpec, params: NetworkParams, batch) -> float:
    _check(spec, params)
    x, y = _as_batch(batch)
    _, zs = _forward_all(spec, params, x)
    return _loss_and_delta(spec, zs[-1], y)[0]


def _pack(spec, grads_w, grads_b):
    parts = []
    for l in range(spec.n_layers):
        parts.append(grads_w[l].ravel())
        if spec.bias:
            parts.append(grads_b[l])
    return np.concatenate(parts)


def loss_and_grad(spec: MlpSpec, params: NetworkParams, batch):
    """Mean loss over the batch and its gradient, aligned with ``params.flat``."""
    _check(spec, params)
    x, y = _as_batch(batch)
    hs, zs = _forward_all(spec, params, x)
    loss, delta = _loss_and_delta(spec, zs[-1], y)
    gw, gb = [None] * spec.n_layers, [None] * spec.n_layers
    for l in range(spec.n_layers - 1, -1, -1):
        gw[l] = delta.T @ hs[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weight(l)) * _act_d1(spec, zs[l - 1])
    return loss, _pack(spec, gw, gb)


def _hvp_exact(spec, params, x, y, v):
    """Forward-over-reverse: directional derivative of the backprop gradient along v."""
    vp = params.with_flat(v)
    hs, zs = _forward_all(spec, params, x)
    L = spec.n_layers
    # forward tangents
    rh = [np.zeros_like(x)]
    rz = []
    for l in range(L):
        r = rh[l] @ params.weight(l).T + hs[l] @ vp.weight(l).T
        if spec.bias:
            r = r + vp.bias_of(l)
        rz.append(r)
        if l < L - 1:
            rh.append(_act_d1(spec, zs[l]) * r)
    out = zs[-1]
    n = out.shape[0]
    _, delta = _loss_and_delta(spec, out, y)
    if spec.loss == "mse":
        rdelta = 2.0 * rz[-1] / n
    else:
        s = softmax(out, axis=1) * y.sum(axis=1, keepdims=True)
        rdelta = (s * rz[-1] - s * np.sum(softmax(out, axis=1) * rz[-1], axis=1, keepdims=True)) / n
    gw, gb = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        gw[l] = rdelta.T @ hs[l] + delta.T @ rh[l]
        gb[l] = rdelta.sum(axis=0)
        if l > 0:
            d1 = _act_d1(spec, zs[l - 1])
            back = delta @ params.weight(l)
            rdelta = (rdelta @ params.weight(l) + delta @ vp.weight(l)) * d1
            d2 = _act_d2(spec, zs[l - 1])
            if d2 is not None:
                rdelta = rdelta + back * d2 * rz[l - 1]
            delta = back * d1
    return _pack(spec, gw, gb)


def hvp(spec: MlpSpec, params: NetworkParams, batch, v, method: str = "exact") -> np.ndarray:
    """Product of the loss Hessian (w.r.t. all parameters) with ``v``.

    ``method="fd"`` uses a central difference of gradients with step
    eps**(1/3) * (1 + |params| / |v|).
    """
    _check(spec, params)
    v = np.asarray(v, dtype=float)
    if v.shape != params.flat.shape:
        raise ValueError(f"direction has shape {v.shape}, parameters {params.flat.shape}")
    vn = np.linalg.norm(v)
    if vn == 0.0:
        return np.zeros_like(v)
    if not math.isfinite(vn):
        raise ValueError("direction is not finite")
    x, y = _as_batch(batch)
    if method == "exact":
        return _hvp_exact(spec, params, x, y, v)
    if method != "fd":
        raise ValueError(f"unknown hvp method {method!r}")
    h = np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.linalg.norm(params.flat) / vn)
    _, gp = loss_and_grad(spec, params.with_flat(params.flat + h * v), (x, y))
    _, gm = loss_and_grad(spec, params.with_flat(params.flat - h * v), (x, y))
    return (gp - gm) / (2.0 * h)


def _layer_slice(params: NetworkParams, layer):
    if layer is None:
        return 0, params.flat.size
    if not 0 <= layer < len(params.layer_shapes):
        raise IndexError(f"layer {layer} out of range")
    return params.layer_ranges[layer]


def layer_operator(spec: MlpSpec, params: NetworkParams, batch, layer: int | None, method: str = "exact") -> SymmetricOperator:
    """Hessian of the loss restricted to one layer's parameters (``None``: all parameters)."""
    _check(spec, params)
    x, y = _as_batch(batch)
    lo, hi = _layer_slice(params, layer)
    size = params.flat.size

    def apply(v):
        full = np.zeros(size)
        full[lo:hi] = v
        return hvp(spec, params, (x, y), full, method)[lo:hi]

    name = "global" if layer is None else f"layer{layer}"
    return SymmetricOperator(hi - lo, apply, name)


def explicit_layer_hessian(spec: MlpSpec, params: NetworkParams, batch, layer: int | None, method: str = "exact") -> DenseSymmetricMatrix:
    lo, hi = _layer_slice(params, layer)
    if hi - lo > EXPLICIT_CAP:
        raise ValueError(f"layer has {hi - lo} parameters, explicit Hessian cap is {EXPLICIT_CAP}")
    op = layer_operator(spec, params, batch, layer, method)
    return DenseSymmetricMatrix(op.to_dense())


def general_position(spec: MlpSpec, params: NetworkParams, inputs, max_tries: int = 8):
    """Nudge inputs off ReLU kinks.

    If any hidden pre-activation is exactly zero, inputs are perturbed by
    1e-9 (deterministic pseudo-random signs) until none is. Returns
    ``(inputs, flagged)``.
    """
    x = np.asarray(inputs, dtype=float)
    if spec.activation == "gelu":
        return x, False
    rng = SeededRng(0x9E3779B9, 0)
    flagged = False
    for _ in range(max_tries):
        _, zs = _forward_all(spec, params, x)
        if not any(np.any(z == 0.0) for z in zs[:-1]):
            return x, flagged
        flagged = True
        x = x + 1e-9 * np.sign(rng.normal(x.shape))
    return x, flagged


def rescale_layers(params: NetworkParams, factors: Sequence[float]) -> NetworkParams:
    """Scale layer l (weights and bias) by ``factors[l]``; factors must be positive with product 1."""
    c = np.asarray(factors, dtype=float)
    if c.size != len(params.layer_shapes):
        raise ValueError(f"need {len(params.layer_shapes)} factors, got {c.size}")
    if np.any(~(c > 0)):
        raise ValueError("rescaling factors must be positive")
    prod = float(np.exp(np.sum(np.log(c))))
    if abs(prod - 1.0) > 1e-12:
        raise ValueError(f"rescaling factors multiply to {prod!r}, not 1")
    flat = params.flat.copy()
    for (lo, hi), ci in zip(params.layer_ranges, c):
        flat[lo:hi] *= ci
    return params.with_flat(flat)


def multiplicative_perturb_identity_check(w, h, a, rho: float, g: Callable | None = None) -> float:
    """max |g(W(h + rho A h)) - g((W + rho W A) h)| for a single feature vector h."""
    g = g or (lambda z: np.maximum(z, 0.0))
    w, h, a = (np.asarray(t, dtype=float) for t in (w, h, a))
    lhs = g(w @ (h + rho * (a @ h)))
    rhs = g((w + rho * (w @ a)) @ h)
    return float(np.max(np.abs(lhs - rhs)))


def init_params(spec: MlpSpec, rng: SeededRng, gain: float = 2.0) -> NetworkParams:
    """He-style normal init, variance gain/fan_in; biases start at zero."""
    parts = []
    for o, i in spec.layer_shapes:
        parts.append(rng.normal((o, i)).ravel() * math.sqrt(gain / i))
        if spec.bias:
            parts.append(np.zeros(o))
    return NetworkParams(spec.layer_shapes, np.concatenate(parts), spec.bias)


def predict_labels(spec: MlpSpec, params: NetworkParams, x) -> np.ndarray:
    return np.argmax(forward(spec, params, np.atleast_2d(x)), axis=1)


def accuracy(spec: MlpSpec, params: NetworkParams, data: Dataset) -> float:
    return float(np.mean(predict_labels(spec, params, data.inputs) == data.labels))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_json(spec: MlpSpec, params: NetworkParams) -> str:
    _check(spec, params)
    doc = spec.to_dict()
    doc["weights"] = base64.b64encode(params.flat.astype("<f8").tobytes()).decode("ascii")
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str):
    doc = json.loads(text)
    spec = MlpSpec.from_dict(doc)
    flat = np.frombuffer(base64.b64decode(doc["weights"]), dtype="<f8").astype(float)
    return spec, NetworkParams(spec.layer_shapes, flat, spec.bias)


def load_dataset_csv(path, classes: int | None = None) -> Dataset:
    """CSV rows of ``features..., label`` (integer class label)."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    return Dataset.from_labels(raw[:, :-1], raw[:, -1].astype(int), classes)


def save_dataset_csv(path, data: Dataset) -> None:
    arr = np.column_stack([data.inputs, data.labels])
    fmt = ["%.17g"] * data.inputs.shape[1] + ["%d"]
    np.savetxt(path, arr, delimiter=",", fmt=fmt)
