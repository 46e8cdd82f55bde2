"""Kendall rank correlation between sharpness measures and generalization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import SharpnessReport, measure_values

TARGETS = ("gap", "test_loss")
_CHUNK = 2048


def _pair_sums(x, y):
    """Return (S, ties_x, ties_y, n0) where S = sum_{i<j} sign(dx) sign(dy)."""
    n = x.size
    s = tx = ty = 0
    for lo in range(0, n, _CHUNK):
        xa, ya = x[lo:lo + _CHUNK, None], y[lo:lo + _CHUNK, None]
        sx = np.sign(xa - x[None, :]).astype(np.int64)
        sy = np.sign(ya - y[None, :]).astype(np.int64)
        # keep only pairs with j > i
        mask = np.arange(n)[None, :] > np.arange(lo, lo + xa.shape[0])[:, None]
        s += int(np.sum(sx * sy * mask))
        tx += int(np.sum((sx == 0) & mask))
        ty += int(np.sum((sy == 0) & mask))
    return s, tx, ty, n * (n - 1) // 2


def kendall_tau(x, y, variant: str = "a") -> float:
    """tau-a = 2/(N(N-1)) * sum_{i<j} sign(x_i - x_j) sign(y_i - y_j).

    ``variant="b"`` divides by sqrt((n0 - n1)(n0 - n2)) instead, where
    n1, n2 count tied pairs in x and y; it returns 0 if either input is
    constant.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    n = x.size
    s, tx, ty, n0 = _pair_sums(x, y)
    if variant == "a":
        return 2.0 * s / (n * (n - 1))
    if variant == "b":
        den = math.sqrt((n0 - tx) * (n0 - ty))
        return s / den if den > 0 else 0.0
    raise ValueError(f"unknown tau variant {variant!r}")


@dataclass
class CorrelationRow:
    measure: str
    scope: str
    alpha: str | None
    tau: float
    n: int


@dataclass
class CorrelationTable:
    target: str
    rows: list = field(default_factory=list)
    excluded: int = 0

    def get(self, measure: str, scope: str = "global", alpha: str | None = None) -> CorrelationRow:
        for r in self.rows:
            if (r.measure, r.scope, r.alpha) == (measure, scope, alpha):
                return r
        raise KeyError((measure, scope, alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["measure", "scope", "alpha", "tau", "n"])
        for r in self.rows:
            w.writerow([r.measure, r.scope, "" if r.alpha is None else r.alpha, repr(r.tau), r.n])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "excluded": self.excluded,
            "rows": [r.__dict__ for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _target(rep: SharpnessReport, target: str) -> float:
    if target == "gap":
        return rep.generalization_gap
    return rep.test_loss


def correlate(reports, target: str = "gap", alphas=None, variant: str = "a", best_by: str = "abs") -> CorrelationTable:
    """Kendall tau of every measure against ``target`` over completed runs.

    A measure enters only if every completed run has it. For Rényi
    sharpness each scope also gets a ``renyi_sharpness_best`` row holding
    the order with the largest |tau|, or the largest signed tau when
    ``best_by="signed"`` (first in sorted key order on ties).
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    if best_by not in ("abs", "signed"):
        raise ValueError("best_by must be 'abs' or 'signed'")
    score = abs if best_by == "abs" else (lambda t: t)
    reports = list(reports)
    done = [r for r in reports if r.completed and _target(r, target) is not None]
    if len(done) < 2:
        raise ValueError(f"need at least two completed runs, got {len(done)}")
    allowed = None if alphas is None else {str(a) for a in alphas} | {repr(float(a)) for a in alphas if a != "shannon"}
    y = np.array([_target(r, target) for r in done])
    vals = [measure_values(r) for r in done]
    keys = set(vals[0])
    for v in vals[1:]:
        keys &= set(v)
    if allowed is not None:
        keys = {k for k in keys if k[2] is None or k[2] in allowed}
    table = CorrelationTable(target, excluded=len(reports) - len(done))
    for k in sorted(keys, key=lambda k: (k[0], k[1], k[2] or "")):
        x = np.array([v[k] for v in vals])
        table.rows.append(CorrelationRow(k[0], k[1], k[2], kendall_tau(x, y, variant), len(done)))
    best = {}
    for r in table.rows:
        if r.measure == "renyi_sharpness" and (r.scope not in best or score(r.tau) > score(best[r.scope].tau)):
            best[r.scope] = r
    for scope in sorted(best):
        r = best[scope]
        table.rows.append(CorrelationRow("renyi_sharpness_best", scope, r.alpha, r.tau, r.n))
    return table
