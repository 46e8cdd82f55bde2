"""Stochastic Lanczos quadrature estimators for traces of matrix functions.

Every probe k draws its random vectors from stream k of the configured
seed, and per-probe results are written to pre-allocated slots, so an
estimate is the same whether probes run serially, in parallel, or in any
order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .entropy import DEFAULT_FLOOR, OrderLike, RenyiOrder, apply_policy, normalize_policy
from .linalg import (
    SeededRng,
    SymmetricOperator,
    TridiagonalMatrix,
    rand_rademacher,
    rand_unit_vector,
    tridiag_eigh,
)

BREAKDOWN_TOL = 1e-12


class EstimationError(ArithmeticError):
    """A trace estimate needed for the entropy is not positive."""


@dataclass
class SlqConfig:
    probes: int = 100
    lanczos_steps: int = 15
    seed: int = 0
    reorthogonalize: bool = True
    eig_policy: str = "clip_to_zero"
    paper_ratio: bool = False
    shared_probe: bool = False
    trace_from_ritz: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.probes < 1:
            raise ValueError("need at least one probe")
        if self.lanczos_steps < 1:
            raise ValueError("need at least one Lanczos step")
        self.eig_policy = normalize_policy(self.eig_policy)

    def check(self, dim: int) -> None:
        if self.lanczos_steps > dim:
            raise ValueError(f"lanczos_steps={self.lanczos_steps} exceeds operator dimension {dim}")

    def for_dim(self, dim: int) -> "SlqConfig":
        """Copy with the Lanczos depth capped at ``dim``."""
        d = dict(self.__dict__)
        d["lanczos_steps"] = min(self.lanczos_steps, dim)
        return SlqConfig(**d)


def _map_slots(fn, count: int, workers: int):
    out = [None] * count
    if workers <= 1:
        for k in range(count):
            out[k] = fn(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for k, res in zip(range(count), ex.map(fn, range(count))):
                out[k] = res
    return out


def hutchinson_trace(h: SymmetricOperator, cfg: SlqConfig | None = None):
    """Rademacher estimate of Tr(H); returns ``(estimate, stderr)``."""
    cfg = cfg or SlqConfig()

    def probe(k):
        z = rand_rademacher(SeededRng(cfg.seed, k), h.dim)
        return float(z @ h.apply(z))

    vals = np.array(_map_slots(probe, cfg.probes, cfg.workers))
    est = float(vals.mean())
    err = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return est, err


def lanczos(h: SymmetricOperator, v1, m: int, reorthogonalize: bool = True):
    """Run up to ``m`` Lanczos steps from the unit vector ``v1``.

    Returns ``(T, V)`` with ``V`` holding the basis vectors as rows. The
    recurrence stops early once the next off-diagonal falls to
    ``BREAKDOWN_TOL`` times the running estimate of |H|, in which case T is
    smaller than m.
    """
    v = np.asarray(v1, dtype=float)
    n = v.size
    if n != h.dim:
        raise ValueError(f"start vector has length {n}, operator has dim {h.dim}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("start vector must have unit norm")
    if m > n:
        raise ValueError(f"m={m} exceeds dimension {n}")
    basis = np.empty((m, n))
    alphas, betas = [], []
    basis[0] = v
    wp = h.apply(v)
    norm_est = float(np.linalg.norm(wp))
    a = float(wp @ v)
    w = wp - a * v
    alphas.append(a)
    k = 1
    while k < m:
        if reorthogonalize:
            for _ in range(2):
                w -= basis[:k].T @ (basis[:k] @ w)
        b = float(np.linalg.norm(w))
        if b <= BREAKDOWN_TOL * norm_est:
            break
        v = w / b
        basis[k] = v
        wp = h.apply(v)
        norm_est = max(norm_est, float(np.linalg.norm(wp)))
        a = float(wp @ v)
        w = wp - a * v - b * basis[k - 1]
        alphas.append(a)
        betas.append(b)
        k += 1
    return TridiagonalMatrix(np.array(alphas), np.array(betas)), basis[:k]


def _moment(theta, tau, a: RenyiOrder, policy: str, floor: float = DEFAULT_FLOOR) -> float:
    th = apply_policy(theta, policy, floor)
    keep = th > 0
    if not np.any(keep & (tau > 0)):
        raise EstimationError("eigenvalue policy removed all Ritz mass")
    th, w = th[keep], tau[keep]
    if a.is_shannon:
        return float(np.sum(w * th * np.log(th)))
    return float(np.sum(w * np.exp(a.alpha * np.log(th))))


def quadrature_moment(t: TridiagonalMatrix, a: OrderLike, eig_policy: str = "clip_to_zero") -> float:
    """Gauss quadrature estimate of e1' f(T) e1 with f(x) = x**alpha.

    For the Shannon limit f(x) = x log x.
    """
    theta, tau = tridiag_eigh(t)
    return _moment(theta, tau, RenyiOrder(a), normalize_policy(eig_policy))


@dataclass
class ProbeNodes:
    """Per-probe Ritz values/weights and the companion moments g'Hg."""

    dim: int
    thetas: list
    taus: list
    b_values: np.ndarray
    cfg: SlqConfig


def slq_nodes(h: SymmetricOperator, cfg: SlqConfig | None = None) -> ProbeNodes:
    """Run the Lanczos part of the estimator once; reusable for any order."""
    cfg = cfg or SlqConfig()
    cfg.check(h.dim)

    def probe(k):
        rng = SeededRng(cfg.seed, k)
        v1 = rand_unit_vector(rng, h.dim)
        g = rand_unit_vector(rng, h.dim)
        t, _ = lanczos(h, v1, cfg.lanczos_steps, cfg.reorthogonalize)
        theta, tau = tridiag_eigh(t)
        if cfg.trace_from_ritz:
            # trace of the policy-mapped spectrum, consistent with the power moments
            lam = apply_policy(theta, cfg.eig_policy)
            return theta, tau, float(np.sum(tau * lam))
        if cfg.shared_probe:
            # v1'Hv1 is already the first Lanczos coefficient
            return theta, tau, float(t.diag[0])
        return theta, tau, float(g @ h.apply(g))

    res = _map_slots(probe, cfg.probes, cfg.workers)
    return ProbeNodes(
        dim=h.dim,
        thetas=[r[0] for r in res],
        taus=[r[1] for r in res],
        b_values=np.array([r[2] for r in res]),
        cfg=cfg,
    )


@dataclass
class RenyiEstimate:
    """Entropy estimate plus the per-probe quantities it was built from."""

    entropy: float
    alpha: float | None
    stderr: float
    trace_alpha: float
    trace_one: float
    trace_alpha_stderr: float
    trace_one_stderr: float
    a_values: np.ndarray = field(repr=False)
    b_values: np.ndarray = field(repr=False)
    paper_ratio: bool = False

    @property
    def sharpness(self) -> float:
        return -self.entropy

    def __float__(self):
        return self.entropy

    def diagnostics(self) -> dict:
        return {
            "alpha": self.alpha,
            "trace_alpha": self.trace_alpha,
            "trace_one": self.trace_one,
            "trace_alpha_stderr": self.trace_alpha_stderr,
            "trace_one_stderr": self.trace_one_stderr,
            "paper_ratio": self.paper_ratio,
            "probes": int(self.a_values.size),
            "a_values": self.a_values.tolist(),
            "b_values": self.b_values.tolist(),
        }


def _sem(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def estimate_renyi_entropy(
    h: SymmetricOperator | None,
    a: OrderLike,
    cfg: SlqConfig | None = None,
    nodes: ProbeNodes | None = None,
) -> RenyiEstimate:
    """Estimate the Rényi entropy of the trace-normalized spectrum of ``h``.

    Tr(H^a) and Tr(H) are estimated as n times the probe means of
    e1' T^a e1 and g'Hg, and combined as log(Tr(H^a) / Tr(H)^a) / (1 - a).
    With ``cfg.paper_ratio`` the pooled ratio log(sum A / sum B) / (1 - a)
    is returned instead. Pass ``nodes`` from :func:`slq_nodes` to reuse
    Lanczos runs across orders.
    """
    order = RenyiOrder(a)
    if nodes is None:
        nodes = slq_nodes(h, cfg)
    cfg = nodes.cfg
    n = nodes.dim
    avals = np.array([_moment(th, tau, order, cfg.eig_policy) for th, tau in zip(nodes.thetas, nodes.taus)])
    bvals = nodes.b_values
    t_a, t_1 = n * avals.mean(), n * bvals.mean()
    se_a, se_1 = n * _sem(avals), n * _sem(bvals)
    if not t_1 > 0:
        raise EstimationError(f"trace estimate {t_1:.3e} is not positive")
    if order.is_shannon:
        ent = math.log(t_1) - t_a / t_1
        stderr = math.hypot(se_a / t_1, se_1 * (1.0 / t_1 + t_a / t_1**2))
    else:
        if not t_a > 0:
            raise EstimationError(f"power-trace estimate {t_a:.3e} is not positive")
        alpha = order.alpha
        if cfg.paper_ratio:
            ent = math.log(avals.sum() / bvals.sum()) / (1.0 - alpha)
            stderr = math.hypot(se_a / t_a, se_1 / t_1) / abs(1.0 - alpha)
        else:
            ent = (math.log(t_a) - alpha * math.log(t_1)) / (1.0 - alpha)
            stderr = math.hypot(se_a / t_a, alpha * se_1 / t_1) / abs(1.0 - alpha)
    return RenyiEstimate(
        entropy=float(ent),
        alpha=order.alpha,
        stderr=float(stderr),
        trace_alpha=float(t_a),
        trace_one=float(t_1),
        trace_alpha_stderr=se_a,
        trace_one_stderr=se_1,
        a_values=avals,
        b_values=bvals,
        paper_ratio=cfg.paper_ratio,
    )


def estimate_lambda_max(h: SymmetricOperator, cfg: SlqConfig | None = None, steps: int | None = None) -> float:
    """Largest Ritz value of one Lanczos run (probe stream 0)."""
    cfg = cfg or SlqConfig()
    m = min(steps or cfg.lanczos_steps, h.dim)
    v1 = rand_unit_vector(SeededRng(cfg.seed, 0), h.dim)
    t, _ = lanczos(h, v1, m, cfg.reorthogonalize)
    theta, _ = tridiag_eigh(t)
    return float(theta[0])
