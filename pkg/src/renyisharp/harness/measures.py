"""Sharpness measures of a trained network and the per-run report."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..entropy import IndefiniteSpectrumError, RenyiOrder
from ..linalg import SeededRng
from ..network import Dataset, MlpSpec, NetworkParams, layer_operator, loss_and_grad, loss_value
from ..slq import EstimationError, SlqConfig, estimate_lambda_max, estimate_renyi_entropy, hutchinson_trace, slq_nodes

GLOBAL = "global"


def alpha_key(a) -> str:
    a = RenyiOrder(a)
    return "shannon" if a.is_shannon else repr(a.alpha)


def layer_scope(l: int) -> str:
    return f"layer{l}"


@dataclass
class MeasureConfig:
    alphas: tuple = (0.5, 1.5)
    probes: int = 100
    lanczos_steps: int = 15
    seed: int = 0
    subsample: int = 512
    subsample_seed: int = 12345
    sam_rhos: tuple = (0.0, 0.05, 0.1)
    layers: bool = True
    eig_policy: str = "clip_to_zero"
    paper_ratio: bool = False
    hvp_method: str = "exact"
    # network Hessians are indefinite; the normalizer must see the same
    # eigenvalue policy as the moments (identical to v'Hv on PSD operators)
    ritz_trace: bool = True

    def __post_init__(self):
        self.alphas = tuple(self.alphas)
        self.sam_rhos = tuple(float(r) for r in self.sam_rhos)
        for a in self.alphas:
            RenyiOrder(a)

    def slq(self) -> SlqConfig:
        return SlqConfig(
            probes=self.probes, lanczos_steps=self.lanczos_steps, seed=self.seed,
            eig_policy=self.eig_policy, paper_ratio=self.paper_ratio, trace_from_ritz=self.ritz_trace,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureConfig":
        return cls(**d)


@dataclass
class SharpnessReport:
    """Everything measured for one run.

    ``renyi`` maps scope -> alpha key -> Rényi sharpness. A measure that
    could not be computed is absent from its field and listed in
    ``failures`` with the reason.
    """

    run_id: str
    hyper: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    train_loss: float | None = None
    test_loss: float | None = None
    train_acc: float | None = None
    test_acc: float | None = None
    generalization_gap: float | None = None
    accuracy_gap: float | None = None
    renyi: dict = field(default_factory=dict)
    hessian_trace: float | None = None
    lambda_max: float | None = None
    weight_l2: float | None = None
    sam_sharpness: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    tags: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.status == "ok"

    def set_losses(self, train_loss, test_loss, train_acc, test_acc):
        self.train_loss, self.test_loss = float(train_loss), float(test_loss)
        self.train_acc, self.test_acc = float(train_acc), float(test_acc)
        self.generalization_gap = self.test_loss - self.train_loss
        self.accuracy_gap = self.train_acc - self.test_acc

    def check(self) -> None:
        if self.generalization_gap is not None:
            gap = self.test_loss - self.train_loss
            if abs(gap - self.generalization_gap) > 1e-12:
                raise ValueError(f"{self.run_id}: stored gap disagrees with test_loss - train_loss")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SharpnessReport":
        rep = cls(**d)
        rep.check()
        return rep


def _sub(data: Dataset, size: int, seed: int) -> Dataset:
    if size <= 0 or size >= len(data):
        return data
    idx = np.sort(SeededRng(seed).permutation(len(data))[:size])
    return data.subset(idx)


def _renyi_scope(op, alphas, scfg: SlqConfig, report: SharpnessReport, scope: str):
    cfg = scfg.for_dim(op.dim)
    try:
        nodes = slq_nodes(op, cfg)
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        report.failures[f"renyi/{scope}"] = f"{type(exc).__name__}: {exc}"
        return
    out = {}
    fallback = None
    for a in alphas:
        key = alpha_key(a)
        try:
            out[key] = estimate_renyi_entropy(None, a, nodes=nodes).sharpness
        except (EstimationError, IndefiniteSpectrumError) as exc:
            if fallback is None:
                d = dict(cfg.__dict__, eig_policy="abs", trace_from_ritz=True)
                retry = cfg.eig_policy != "abs" or not cfg.trace_from_ritz
                fallback = slq_nodes(op, SlqConfig(**d)) if retry else False
            if fallback:
                try:
                    out[key] = estimate_renyi_entropy(None, a, nodes=fallback).sharpness
                    tag = f"abs_policy_fallback/{scope}/{key}"
                    report.tags.append(tag)
                    continue
                except (EstimationError, IndefiniteSpectrumError) as exc2:
                    exc = exc2
            report.failures[f"renyi/{scope}/{key}"] = f"{type(exc).__name__}: {exc}"
    report.renyi[scope] = out


def measure_sharpness(
    spec: MlpSpec,
    params: NetworkParams,
    dataset: Dataset,
    cfg: MeasureConfig | None = None,
    report: SharpnessReport | None = None,
) -> SharpnessReport:
    """Fill the sharpness fields of ``report`` using a subsample of ``dataset``."""
    cfg = cfg or MeasureConfig()
    report = report or SharpnessReport(run_id="run")
    batch = _sub(dataset, cfg.subsample, cfg.subsample_seed)
    scfg = cfg.slq()

    report.weight_l2 = float(np.linalg.norm(params.flat))

    scopes = [(GLOBAL, None)]
    if cfg.layers:
        scopes += [(layer_scope(l), l) for l in range(spec.n_layers)]
    global_op = None
    for scope, layer in scopes:
        op = layer_operator(spec, params, batch, layer, cfg.hvp_method)
        if layer is None:
            global_op = op
        _renyi_scope(op, cfg.alphas, scfg, report, scope)

    try:
        report.hessian_trace = hutchinson_trace(global_op, scfg)[0]
    except Exception as exc:  # noqa: BLE001
        report.failures["hessian_trace"] = f"{type(exc).__name__}: {exc}"
    try:
        report.lambda_max = estimate_lambda_max(global_op, scfg)
    except Exception as exc:  # noqa: BLE001
        report.failures["lambda_max"] = f"{type(exc).__name__}: {exc}"

    try:
        base, g = loss_and_grad(spec, params, batch)
        gn = float(np.linalg.norm(g))
        for rho in cfg.sam_rhos:
            key = repr(rho)
            if rho == 0:
                report.sam_sharpness[key] = 0.0
            elif gn == 0:
                report.failures[f"sam_sharpness/{key}"] = "zero gradient"
            else:
                shifted = params.with_flat(params.flat + (rho / gn) * g)
                report.sam_sharpness[key] = float(loss_value(spec, shifted, batch) - base)
    except Exception as exc:  # noqa: BLE001
        report.failures["sam_sharpness"] = f"{type(exc).__name__}: {exc}"
    return report


def measure_values(report: SharpnessReport) -> dict:
    """Flatten a report into ``{(measure, scope, alpha_or_None): value}``."""
    out = {}
    for scope, vals in report.renyi.items():
        for key, v in vals.items():
            out[("renyi_sharpness", scope, key)] = v
    for name in ("hessian_trace", "lambda_max", "weight_l2"):
        v = getattr(report, name)
        if v is not None and math.isfinite(v):
            out[(name, GLOBAL, None)] = v
    for key, v in report.sam_sharpness.items():
        out[(f"sam_sharpness_rho{key}", GLOBAL, None)] = v
    return out
