import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renyisharp.linalg import (
    ConvergenceError,
    DenseSymmetricMatrix,
    SeededRng,
    SymmetricOperator,
    TridiagonalMatrix,
    dense_eigh,
    derive_seed,
    haar_orthogonal,
    load_matrix,
    rand_rademacher,
    rand_unit_vector,
    save_matrix_binary,
    save_matrix_csv,
    spd_with_spectrum,
    symmetry_defect,
    tridiag_eigh,
)


def test_dense_eigh_identity_and_diagonal():
    w, q = dense_eigh(np.eye(3))
    assert np.allclose(w, [1, 1, 1])
    w, _ = dense_eigh(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [3, 2, 1])


@pytest.mark.parametrize("n", [1, 2, 5, 8, 17, 40])
def test_dense_eigh_reconstruction(rng, sym, n):
    m = sym(rng, n)
    w, q = dense_eigh(m)
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(q @ np.diag(w) @ q.T - m)) <= 1e-10
    assert np.linalg.norm(m @ q - q * w) <= 1e-10 * n * np.linalg.norm(m)
    assert np.allclose(q.T @ q, np.eye(n), atol=1e-10)
    assert np.allclose(w, np.sort(np.linalg.eigvalsh(m))[::-1], atol=1e-10)


def test_dense_eigh_values_only(rng, sym):
    m = sym(rng, 12)
    w, q = dense_eigh(m, vectors=False)
    assert q is None
    assert np.allclose(w, dense_eigh(m)[0], atol=1e-12)


def test_dense_eigh_cap_raises(rng, sym):
    with pytest.raises(ConvergenceError) as ei:
        dense_eigh(sym(rng, 30), max_sweeps=1)
    assert ei.value.residual > 0


def test_dense_symmetric_mirrors_lower_triangle():
    m = DenseSymmetricMatrix([[1.0, 99.0], [2.0, 3.0]])
    assert np.array_equal(m.entries, [[1, 2], [2, 3]])
    assert m.dim == 2


def test_tridiag_examples():
    th, tau = tridiag_eigh(TridiagonalMatrix([5.0], []))
    assert th.tolist() == [5.0] and tau.tolist() == [1.0]
    th, tau = tridiag_eigh(TridiagonalMatrix([2.0, 2.0], [0.0]))
    assert np.allclose(th, [2, 2]) and abs(tau.sum() - 1) < 1e-12
    th, tau = tridiag_eigh(TridiagonalMatrix([0.0, 0.0], [1.0]))
    assert np.allclose(th, [1, -1], atol=1e-14)
    assert np.allclose(tau, [0.5, 0.5], atol=1e-14)


def test_tridiag_length_invariant():
    with pytest.raises(ValueError):
        TridiagonalMatrix([1.0, 2.0], [1.0, 2.0])


@given(st.integers(1, 30), st.integers(0, 2**31))
def test_tridiag_matches_dense(m, seed):
    r = SeededRng(seed)
    t = TridiagonalMatrix(r.normal(m), r.normal(m - 1))
    dense = t.to_dense()
    th, tau, q = tridiag_eigh(t, vectors=True)
    assert np.all(tau >= 0) and abs(tau.sum() - 1) <= 1e-10
    assert np.linalg.norm(dense @ q - q * th) <= 1e-10 * m * max(np.linalg.norm(dense), 1e-300)
    assert np.allclose(th, np.sort(np.linalg.eigvalsh(dense))[::-1], atol=1e-10 * (1 + np.abs(dense).max()))
    assert np.allclose(tau, q[0] ** 2 / np.sum(q[0] ** 2))


def test_rand_unit_vector():
    for s in range(10):
        v = rand_unit_vector(SeededRng(s), 1)
        assert v[0] in (1.0, -1.0)
    for n in (2, 7, 100):
        assert abs(np.linalg.norm(rand_unit_vector(SeededRng(3), n)) - 1) <= 1e-12
    a = rand_unit_vector(SeededRng(42, 0), 16)
    b = rand_unit_vector(SeededRng(42, 0), 16)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, rand_unit_vector(SeededRng(42, 1), 16))


def test_rademacher():
    v = rand_rademacher(SeededRng(1), 4)
    assert set(v.tolist()) <= {-1.0, 1.0}
    draws = np.array([rand_rademacher(SeededRng(7, k), 1)[0] for k in range(10000)])
    assert abs(draws.mean()) <= 3 / np.sqrt(draws.size)
    for k in range(5):
        z = rand_rademacher(SeededRng(2, k), 9)
        assert z @ np.eye(9) @ z == 9.0


def test_haar_orthogonal():
    for s in range(6):
        a = haar_orthogonal(SeededRng(s), 1)
        assert a[0, 0] in (1.0, -1.0)
    a = haar_orthogonal(SeededRng(5), 9)
    assert np.allclose(a.T @ a, np.eye(9), atol=1e-10)
    assert abs(abs(np.linalg.det(a)) - 1) <= 1e-10
    assert np.allclose(np.linalg.norm(a, axis=0), 1, atol=1e-12)


def test_haar_first_column_is_isotropic():
    cols = np.array([haar_orthogonal(SeededRng(11, k), 3)[:, 0] for k in range(3000)])
    assert np.allclose(cols.mean(axis=0), 0, atol=0.06)
    assert np.allclose(cols.T @ cols / len(cols), np.eye(3) / 3, atol=0.03)


def test_seeds_and_streams():
    assert SeededRng(3, 4).normal(5).tobytes() == SeededRng(3, 4).normal(5).tobytes()
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert 0 <= derive_seed(9) < 2**63


def test_operator_helpers(rng, sym):
    m = sym(rng, 6)
    op = SymmetricOperator.from_dense(m)
    assert np.allclose(op.to_dense(), m)
    assert np.allclose(op.scaled(3.0).to_dense(), 3 * m)
    assert symmetry_defect(op, rng) <= 1e-8
    with pytest.raises(ValueError):
        op(np.ones(5))


def test_spd_with_spectrum(rng):
    lam = np.array([5.0, 3.0, 1.0, 0.5])
    m = spd_with_spectrum(rng, lam)
    assert np.allclose(np.sort(np.linalg.eigvalsh(m))[::-1], lam)


def test_matrix_file_round_trip(tmp_path, rng, sym):
    m = sym(rng, 5)
    save_matrix_binary(tmp_path / "m.bin", m)
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:4] == b"SYMF" and int.from_bytes(raw[4:8], "little") == 5 and len(raw) == 8 + 200
    assert np.array_equal(load_matrix(tmp_path / "m.bin").entries, m)
    save_matrix_csv(tmp_path / "m.csv", m)
    assert np.array_equal(load_matrix(tmp_path / "m.csv").entries, m)
    (tmp_path / "h.txt").write_text("2\n1 2\n2 3\n")
    assert np.array_equal(load_matrix(tmp_path / "h.txt").entries, [[1, 2], [2, 3]])
    (tmp_path / "c.csv").write_text("1,0\n5,3\n")
    assert np.array_equal(load_matrix(tmp_path / "c.csv").entries, [[1, 5], [5, 3]])
