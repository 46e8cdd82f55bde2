"""Rényi entropy of probability vectors and of symmetric-matrix spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .linalg import DenseSymmetricMatrix, dense_eigh

PROB_TOL = 1e-10
ALPHA_GUARD = 1e-3
DEFAULT_FLOOR = 1e-12
ORACLE_CAP = 4096

POLICIES = ("abs", "clip_to_zero", "shift")
_POLICY_ALIASES = {"clip": "clip_to_zero", "clip_to_zero": "clip_to_zero", "abs": "abs", "shift": "shift"}


class IndefiniteSpectrumError(ValueError):
    """Spectrum has no positive mass left after the negative-eigenvalue policy."""


class RenyiOrder:
    """Order of a Rényi entropy.

    Either a positive float kept at least ``ALPHA_GUARD`` away from 1, or
    the Shannon limit (``RenyiOrder.shannon()`` / ``SHANNON_LIMIT``).
    """

    __slots__ = ("alpha",)

    def __init__(self, alpha):
        if isinstance(alpha, RenyiOrder):
            alpha = alpha.alpha
        if alpha is None or (isinstance(alpha, str) and alpha.lower() == "shannon"):
            self.alpha = None
            return
        alpha = float(alpha)
        if not (alpha > 0 and math.isfinite(alpha)):
            raise ValueError(f"Rényi order must be positive and finite, got {alpha}")
        # tolerance so that 1 +/- ALPHA_GUARD written in decimal passes
        if abs(alpha - 1.0) < ALPHA_GUARD * (1 - 1e-9):
            raise ValueError(
                f"Rényi order {alpha} is within {ALPHA_GUARD} of 1; use the Shannon limit instead"
            )
        self.alpha = alpha

    @classmethod
    def shannon(cls) -> "RenyiOrder":
        return cls(None)

    @property
    def is_shannon(self) -> bool:
        return self.alpha is None

    @property
    def power(self) -> float:
        """The exponent applied to probabilities (1 for the Shannon limit)."""
        return 1.0 if self.alpha is None else self.alpha

    def __eq__(self, other):
        try:
            return RenyiOrder(other).alpha == self.alpha
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash(self.alpha)

    def __repr__(self):
        return "RenyiOrder(shannon)" if self.alpha is None else f"RenyiOrder({self.alpha!r})"


SHANNON_LIMIT = RenyiOrder.shannon()

OrderLike = Union[RenyiOrder, float, str, None]


def as_prob_vector(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("probability vector is empty")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probability vector has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probability vector sums to {p.sum()!r}, not 1")
    return p


def log_power_sum(p, alpha: float) -> float:
    """log sum_i p_i**alpha, evaluated as a log-sum-exp over the positive entries."""
    p = np.asarray(p, dtype=float)
    pos = p[p > 0]
    if pos.size == 0:
        return -math.inf
    return float(logsumexp(alpha * np.log(pos)))


def renyi_entropy(p, a: OrderLike) -> float:
    a = RenyiOrder(a)
    p = as_prob_vector(p)
    if a.is_shannon:
        pos = p[p > 0]
        h = float(-np.sum(pos * np.log(pos)))
    else:
        h = log_power_sum(p, a.alpha) / (1.0 - a.alpha)
    return min(max(h, 0.0), math.log(p.size))


@dataclass
class Spectrum:
    """Real eigenvalues plus the rule for turning them into a nonnegative mass.

    ``policy`` decides what happens to negative values: ``clip_to_zero``
    zeroes anything below ``floor * max|lambda|``; ``abs`` takes magnitudes;
    ``shift`` adds ``|lambda_min| + floor * max|lambda|`` when lambda_min < 0.
    """

    eigenvalues: np.ndarray
    policy: str = "clip_to_zero"
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float).ravel()
        if ev.size == 0:
            raise ValueError("empty spectrum")
        if not np.all(np.isfinite(ev)):
            raise ValueError("spectrum contains non-finite values")
        self.eigenvalues = np.sort(ev)[::-1]
        self.policy = normalize_policy(self.policy)

    def retained(self) -> np.ndarray:
        return apply_policy(self.eigenvalues, self.policy, self.floor)

    @property
    def trace(self) -> float:
        return float(self.retained().sum())


def normalize_policy(policy: str) -> str:
    try:
        return _POLICY_ALIASES[policy]
    except KeyError:
        raise ValueError(f"unknown eigenvalue policy {policy!r}; expected one of {POLICIES}") from None


def apply_policy(values, policy: str = "clip_to_zero", floor: float = DEFAULT_FLOOR) -> np.ndarray:
    lam = np.asarray(values, dtype=float)
    policy = normalize_policy(policy)
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    if policy == "abs":
        return np.abs(lam)
    if policy == "shift":
        lo = float(lam.min())
        return lam + (abs(lo) + floor * scale) if lo < 0 else lam.copy()
    out = lam.copy()
    out[out < floor * scale] = 0.0
    return out


def normalize_spectrum(s) -> np.ndarray:
    if not isinstance(s, Spectrum):
        s = Spectrum(s)
    lam = s.retained()
    tr = lam.sum()
    if not tr > 0:
        raise IndefiniteSpectrumError("indefinite spectrum not normalizable")
    p = lam / tr
    # pin the sum to 1 exactly up to rounding
    return p / p.sum()


def matrix_renyi_entropy_exact(m, a: OrderLike, policy: str = "clip_to_zero", cap: int = ORACLE_CAP) -> float:
    """Rényi entropy of the trace-normalized spectrum, by dense eigendecomposition."""
    m = DenseSymmetricMatrix(m)
    if m.dim > cap:
        raise ValueError(f"matrix dimension {m.dim} exceeds oracle cap {cap}")
    lam, _ = dense_eigh(m, vectors=False)
    return renyi_entropy(normalize_spectrum(Spectrum(lam, policy)), a)


def renyi_sharpness(m, a: OrderLike, policy: str = "clip_to_zero", cap: int = ORACLE_CAP) -> float:
    return -matrix_renyi_entropy_exact(m, a, policy, cap)


def spectrum_renyi_entropy(eigenvalues, a: OrderLike, policy: str = "clip_to_zero") -> float:
    return renyi_entropy(normalize_spectrum(Spectrum(eigenvalues, policy)), a)


def check_logdet_inequality(p, a: OrderLike, tol: float = 1e-12):
    """Check sum(log p_i) <= -H_alpha(p) for a strictly positive distribution.

    Returns ``(holds, slack)`` with ``slack = -H_alpha(p) - sum(log p_i)``;
    rounding within ``tol * (1 + |sum log p|)`` counts as holding.
    """
    p = as_prob_vector(p)
    if np.any(p == 0):
        raise ValueError("log-determinant inequality needs strictly positive probabilities")
    sum_log = float(np.sum(np.log(p)))
    slack = -renyi_entropy(p, a) - sum_log
    return slack >= -tol * (1.0 + abs(sum_log)), slack


def _block_array(block) -> np.ndarray:
    if isinstance(block, Spectrum):
        return block.retained()
    return np.asarray(block, dtype=float).ravel()


def blockdiag_power_sum(blocks: Sequence, a: OrderLike) -> float:
    """sum_l w_l**alpha * sigma_alpha(block l), w_l = T_l / T.

    This is the power sum of the normalized spectrum of the block-diagonal
    matrix, assembled from per-block quantities.
    """
    if len(blocks) == 0:
        raise ValueError("need at least one block")
    alpha = RenyiOrder(a).power
    arrays = [_block_array(b) for b in blocks]
    traces = np.array([x.sum() for x in arrays])
    if np.any(~(traces > 0)):
        raise IndefiniteSpectrumError("every block needs a positive trace")
    total = traces.sum()
    out = 0.0
    for x, t in zip(arrays, traces):
        sigma = math.exp(log_power_sum(x / t, alpha))
        out += (t / total) ** alpha * sigma
    return out


def concatenated_power_sum(blocks: Sequence, a: OrderLike) -> float:
    """sum_i p_i**alpha for the normalized concatenation of all block spectra."""
    alpha = RenyiOrder(a).power
    lam = np.concatenate([_block_array(b) for b in blocks])
    return math.exp(log_power_sum(lam / lam.sum(), alpha))


def save_spectrum_csv(path, eigenvalues) -> None:
    np.savetxt(path, np.asarray(eigenvalues, dtype=float).ravel(), fmt="%.17g")


def load_spectrum_csv(path) -> np.ndarray:
    """One eigenvalue per line."""
    return np.loadtxt(path, ndmin=1, dtype=float)
