"""Symmetric linear algebra used by the sharpness estimators.

Everything here works on float64 numpy arrays. Operators are exposed only
through matrix-vector products so that loss Hessians never have to be
materialized; the dense routines exist as exact oracles at desk scale.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative eigensolver hit its iteration cap."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# Operators and matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetricOperator:
    """A symmetric linear map on R^dim, known only through ``apply``."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"operator dimension must be positive, got {self.dim}")

    def __call__(self, v):
        return self.apply(v)

    def scaled(self, c: float) -> "SymmetricOperator":
        return SymmetricOperator(self.dim, lambda v: c * self.apply(v), self.name)

    def to_dense(self) -> np.ndarray:
        """Materialize column by column and symmetrize."""
        cols = np.empty((self.dim, self.dim))
        e = np.zeros(self.dim)
        for j in range(self.dim):
            e[j] = 1.0
            cols[:, j] = self.apply(e)
            e[j] = 0.0
        return 0.5 * (cols + cols.T)

    @classmethod
    def from_dense(cls, m, name: str = "dense") -> "SymmetricOperator":
        a = DenseSymmetricMatrix(m).entries
        return cls(a.shape[0], lambda v: a @ v, name)


def symmetry_defect(op: SymmetricOperator, rng: "SeededRng", norm_est: float | None = None) -> float:
    """|u'(Hv) - v'(Hu)| / (|u||v||H|) for one random pair (u, v)."""
    u = rng.normal(op.dim)
    v = rng.normal(op.dim)
    hv, hu = op.apply(v), op.apply(u)
    if norm_est is None:
        norm_est = max(np.linalg.norm(hv) / np.linalg.norm(v), np.linalg.norm(hu) / np.linalg.norm(u))
    scale = np.linalg.norm(u) * np.linalg.norm(v) * max(norm_est, np.finfo(float).tiny)
    return abs(u @ hv - v @ hu) / scale


class DenseSymmetricMatrix:
    """Square float64 matrix whose lower triangle is authoritative.

    The upper triangle is overwritten by the mirror of the lower one on
    construction, so ``entries`` is exactly symmetric.
    """

    def __init__(self, entries):
        if isinstance(entries, DenseSymmetricMatrix):
            entries = entries.entries
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("matrix dimension must be positive")
        lower = np.tril(a)
        self.entries = lower + np.tril(a, -1).T

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"DenseSymmetricMatrix(dim={self.dim})"


@dataclass
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix with diagonal ``diag`` and off-diagonal ``offdiag``."""

    diag: np.ndarray
    offdiag: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.diag = np.atleast_1d(np.asarray(self.diag, dtype=float))
        self.offdiag = np.atleast_1d(np.asarray(self.offdiag, dtype=float))
        if self.diag.size < 1:
            raise ValueError("tridiagonal matrix needs at least one diagonal entry")
        if self.offdiag.size != self.diag.size - 1:
            raise ValueError(
                f"offdiag length {self.offdiag.size} != diag length {self.diag.size} - 1"
            )

    @property
    def size(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class SeededRng:
    """Counter-based generator addressed by ``(seed, stream)``.

    Backed by Philox keyed through a SeedSequence whose spawn key is the
    stream id, so each stream is an independent, reproducible sequence no
    matter which order streams are consumed in.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "SeededRng":
        """A new independent stream derived from this generator's (seed, stream)."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        derived = int(ss.generate_state(2, dtype=np.uint64)[0])
        return SeededRng(derived, stream)

    def normal(self, size):
        return self.gen.standard_normal(size)

    def uniform(self, size=None, low=0.0, high=1.0):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic 63-bit seed for a position in a seed tree."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rand_unit_vector(rng: SeededRng, n: int) -> np.ndarray:
    """Gaussian draw normalized onto the unit sphere."""
    if n < 1:
        raise ValueError("n must be positive")
    while True:
        v = rng.normal(n)
        nrm = np.linalg.norm(v)
        if nrm > 0:
            return v / nrm


def rand_rademacher(rng: SeededRng, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n).astype(float) * 2.0 - 1.0


def haar_orthogonal(rng: SeededRng, n: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, sign-corrected)."""
    if n < 1:
        raise ValueError("n must be positive")
    q, r = np.linalg.qr(rng.normal((n, n)))
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def spd_with_spectrum(rng: SeededRng, eigenvalues) -> np.ndarray:
    """Q diag(eigenvalues) Q' with Haar Q, symmetrized."""
    lam = np.asarray(eigenvalues, dtype=float)
    q = haar_orthogonal(rng, lam.size)
    m = (q * lam) @ q.T
    return 0.5 * (m + m.T)


# ---------------------------------------------------------------------------
# Dense eigensolver: cyclic Jacobi, round-robin ordering
# ---------------------------------------------------------------------------


def _round_robin(n: int):
    """Yield index pairs for each round of a round-robin tournament on n players.

    Each round's pairs are disjoint, so their rotations commute and can be
    applied at once; n - 1 rounds (n even) visit every pair exactly once.
    """
    m = n + (n % 2)
    players = list(range(m))
    for _ in range(m - 1):
        half = m // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        yield np.minimum(p, q), np.maximum(p, q)
        players = [players[0]] + [players[-1]] + players[1:-1]


def _offdiag_norm(a):
    return np.linalg.norm(a - np.diag(np.diag(a)))


def dense_eigh(m, max_sweeps: int = 60, tol: float = 1e-15, vectors: bool = True):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, Q)`` with eigenvalues sorted descending and the
    matching orthonormal eigenvectors as columns of ``Q``. With
    ``vectors=False`` the rotations are not accumulated and ``Q`` is None.
    """
    a = DenseSymmetricMatrix(m).entries.copy()
    n = a.shape[0]
    v = np.eye(n) if vectors else None
    if n == 1:
        return a[0].copy(), v
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return np.zeros(n), v
    rounds = list(_round_robin(n))
    off = _offdiag_norm(a)
    for _ in range(max_sweeps):
        if off <= tol * fro:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = a[p, p], a[q, q]
            theta = (aqq - app) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # columns: A <- A J
            ap, aq = a[:, p].copy(), a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            # rows: A <- J' A
            ap, aq = a[p, :].copy(), a[q, :]
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            if vectors:
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        off = _offdiag_norm(a)
    else:
        if off > tol * fro * 1e3:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps", off / fro)
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], (v[:, order] if vectors else None)


# ---------------------------------------------------------------------------
# Tridiagonal eigensolver: implicit QL with Wilkinson shifts
# ---------------------------------------------------------------------------


def _tql(d, e, z, max_iter):
    """In-place implicit-shift QL on python lists; rotations are applied to the rows of z.

    ``d`` is the diagonal, ``e`` the sub-diagonal padded with a trailing 0,
    ``z`` a list of row lists whose columns become eigenvectors.
    """
    n = len(d)
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= 2.2e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise ConvergenceError(f"QL iteration cap exceeded at index {l}", abs(e[l]))
            # Wilkinson shift from the leading 2x2 block
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for row in z:
                    zf = row[i + 1]
                    zi = row[i]
                    row[i + 1] = s * zi + c * zf
                    row[i] = c * zi - s * zf
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def tridiag_eigh(t: TridiagonalMatrix, vectors: bool = False, max_iter: int = 60):
    """Ritz values and quadrature weights of a symmetric tridiagonal matrix.

    Returns ``(theta, tau)`` where ``theta`` holds eigenvalues sorted
    descending and ``tau[i]`` is the squared first component of the i-th
    eigenvector. With ``vectors=True`` the full eigenvector matrix is
    returned as a third element.
    """
    d = [float(x) for x in t.diag]
    e = [float(x) for x in t.offdiag] + [0.0]
    n = len(d)
    if vectors:
        z = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    else:
        z = [[1.0] + [0.0] * (n - 1)]
    _tql(d, e, z, max_iter)
    theta = np.array(d)
    order = np.argsort(-theta, kind="stable")
    first = np.array(z[0])
    tau = first[order] ** 2
    tau /= tau.sum()
    if vectors:
        q = np.array(z)[:, order]
        return theta[order], tau, q
    return theta[order], tau


# ---------------------------------------------------------------------------
# Matrix file formats
# ---------------------------------------------------------------------------

SYMF_MAGIC = b"SYMF"


def save_matrix_binary(path, m) -> None:
    a = np.ascontiguousarray(DenseSymmetricMatrix(m).entries, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(SYMF_MAGIC)
        fh.write(struct.pack("<I", a.shape[0]))
        fh.write(a.tobytes())


def save_matrix_csv(path, m) -> None:
    a = DenseSymmetricMatrix(m).entries
    with open(path, "w") as fh:
        for row in a:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_matrix(path) -> DenseSymmetricMatrix:
    """Load a symmetric matrix from the SYMF binary format or from CSV/whitespace text.

    Text files may start with a single-integer header row giving n.
    """
    raw = Path(path).read_bytes()
    if raw[:4] == SYMF_MAGIC:
        if len(raw) < 8:
            raise ValueError("truncated SYMF header")
        (n,) = struct.unpack("<I", raw[4:8])
        need = 8 + 8 * n * n
        if n < 1 or len(raw) != need:
            raise ValueError(f"SYMF payload size {len(raw)} does not match n={n}")
        a = np.frombuffer(raw[8:], dtype="<f8").reshape(n, n)
        return DenseSymmetricMatrix(a.astype(float))
    rows = []
    for line in raw.decode().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(x) for x in line.replace(",", " ").split()])
    if not rows:
        raise ValueError(f"{path}: no matrix data")
    header = None
    if len(rows[0]) == 1 and len(rows) > 1 and len(rows) - 1 == int(rows[0][0]) == rows[0][0]:
        header = int(rows[0][0])
        rows = rows[1:]
    n = len(rows)
    if any(len(r) != n for r in rows) or (header is not None and header != n):
        raise ValueError(f"{path}: expected a square matrix, got {n} rows of lengths {sorted({len(r) for r in rows})}")
    return DenseSymmetricMatrix(np.array(rows))
