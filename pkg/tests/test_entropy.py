import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from renyisharp.entropy import (
    SHANNON_LIMIT,
    IndefiniteSpectrumError,
    RenyiOrder,
    Spectrum,
    blockdiag_power_sum,
    check_logdet_inequality,
    concatenated_power_sum,
    load_spectrum_csv,
    matrix_renyi_entropy_exact,
    normalize_spectrum,
    renyi_entropy,
    renyi_sharpness,
    save_spectrum_csv,
    spectrum_renyi_entropy,
)
from renyisharp.linalg import SeededRng, spd_with_spectrum

orders = st.one_of(st.floats(0.05, 0.99), st.floats(1.01, 4.0))
prob = arrays(np.float64, st.integers(1, 30), elements=st.floats(1e-6, 1.0)).map(lambda v: v / v.sum())


def mp_renyi(p, a):
    mpmath.mp.dps = 50
    s = mpmath.fsum(mpmath.mpf(x) ** mpmath.mpf(a) for x in p)
    return float(mpmath.log(s) / (1 - mpmath.mpf(a)))


def test_order_guard():
    with pytest.raises(ValueError):
        RenyiOrder(1.0005)
    with pytest.raises(ValueError):
        RenyiOrder(0.0)
    assert RenyiOrder(1.001).alpha == 1.001
    assert RenyiOrder("shannon").is_shannon and SHANNON_LIMIT == RenyiOrder(None)


def test_renyi_examples():
    for a in (0.5, 2.0, SHANNON_LIMIT):
        assert math.isclose(renyi_entropy(np.full(8, 1 / 8), a), math.log(8), rel_tol=1e-14)
        assert renyi_entropy([0, 1, 0], a) == 0.0
    assert math.isclose(renyi_entropy([0.5, 0.5], 2), math.log(2), rel_tol=1e-14)
    assert math.isclose(renyi_entropy([0.7, 0.2, 0.1], 0.5), mp_renyi([0.7, 0.2, 0.1], 0.5), rel_tol=1e-14)


def test_renyi_rejects_bad_vectors():
    for p in ([0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            renyi_entropy(p, 2)


@given(prob, orders)
def test_renyi_matches_high_precision(p, a):
    ref = min(max(mp_renyi(p, a), 0.0), math.log(p.size))
    assert math.isclose(renyi_entropy(p, a), ref, rel_tol=1e-11, abs_tol=1e-13)


@given(prob, orders)
def test_maximal_at_uniform(p, a):
    h = renyi_entropy(p, a)
    assert h <= math.log(p.size) + 1e-12
    if np.max(np.abs(p - 1 / p.size)) > 1e-3:
        assert h < math.log(p.size)


@given(prob, orders, orders)
def test_monotone_in_order(p, a1, a2):
    lo, hi = sorted((a1, a2))
    assert renyi_entropy(p, lo) >= renyi_entropy(p, hi) - 1e-12


@given(prob)
def test_shannon_sits_between_nearby_orders(p):
    h = renyi_entropy(p, SHANNON_LIMIT)
    assert renyi_entropy(p, 1.01) - 1e-12 <= h <= renyi_entropy(p, 0.99) + 1e-12


def test_normalize_examples():
    assert np.allclose(normalize_spectrum([2, 2, 2, 2]), 0.25)
    assert np.allclose(normalize_spectrum([3, 1]), [0.75, 0.25])
    assert np.allclose(normalize_spectrum(Spectrum([3, -1], "abs")), [0.75, 0.25])
    assert np.allclose(normalize_spectrum(Spectrum([3, -1], "clip_to_zero")), [1, 0])
    shifted = normalize_spectrum(Spectrum([3, -1], "shift"))
    assert shifted[1] > 0 and abs(shifted.sum() - 1) <= 1e-12
    with pytest.raises(IndefiniteSpectrumError, match="indefinite spectrum not normalizable"):
        normalize_spectrum(Spectrum([-1, -2], "clip"))


def test_matrix_entropy_examples(rng):
    for c in (0.1, 1.0, 7.0):
        assert math.isclose(matrix_renyi_entropy_exact(c * np.eye(6), 1.5), math.log(6), rel_tol=1e-13)
        assert math.isclose(renyi_sharpness(c * np.eye(6), 0.5), -math.log(6), rel_tol=1e-13)
    assert matrix_renyi_entropy_exact(np.diag([1.0, 1e-15]), 2) == 0.0
    assert renyi_sharpness(np.diag([4.0, 0.0, 0.0]), 0.5) == 0.0
    m = spd_with_spectrum(rng, rng.uniform(10, 0.1, 3))
    assert renyi_sharpness(m, 2) == -matrix_renyi_entropy_exact(m, 2)
    with pytest.raises(ValueError):
        matrix_renyi_entropy_exact(np.eye(4), 2, cap=3)


@given(st.integers(0, 2**31), st.floats(1e-3, 1e3), orders)
def test_matrix_entropy_scale_invariant(seed, c, a):
    r = SeededRng(seed)
    m = spd_with_spectrum(r, r.uniform(8, 0.01, 1.0))
    h1, h2 = matrix_renyi_entropy_exact(m, a), matrix_renyi_entropy_exact(c * m, a)
    assert math.isclose(h1, h2, rel_tol=1e-11, abs_tol=1e-12)


def test_spectrum_entropy_matches_matrix(rng):
    lam = rng.uniform(7, 0.5, 3.0)
    m = spd_with_spectrum(rng, lam)
    assert math.isclose(spectrum_renyi_entropy(lam, 0.5), matrix_renyi_entropy_exact(m, 0.5), rel_tol=1e-12)


def test_logdet_examples():
    ok, slack = check_logdet_inequality(np.full(4, 0.25), 2)
    assert ok and math.isclose(slack, 3 * math.log(4), rel_tol=1e-13)
    assert check_logdet_inequality([0.9, 0.1], 0.5)[0]
    assert check_logdet_inequality([0.99, 0.01], 3)[0]
    with pytest.raises(ValueError):
        check_logdet_inequality([1.0, 0.0], 2)


@given(prob, orders)
def test_logdet_property(p, a):
    assume(np.all(p > 0))
    assert check_logdet_inequality(p, a)[0]


def test_blockdiag_examples():
    assert math.isclose(blockdiag_power_sum([[1, 1], [2, 2]], 2), 10 / 36, rel_tol=1e-14)
    assert math.isclose(concatenated_power_sum([[1, 1], [2, 2]], 2), 10 / 36, rel_tol=1e-14)
    block = np.array([3.0, 2.0, 1.0])
    p = block / block.sum()
    assert math.isclose(blockdiag_power_sum([block], 1.5), float(np.sum(p**1.5)), rel_tol=1e-13)
    with pytest.raises(ValueError):
        blockdiag_power_sum([], 2)


@given(st.lists(arrays(np.float64, st.integers(1, 10), elements=st.floats(1e-3, 10.0)), min_size=2, max_size=3),
       st.sampled_from([0.5, 1.5, 2.0, 3.0]))
def test_blockdiag_property(blocks, a):
    f, c = blockdiag_power_sum(blocks, a), concatenated_power_sum(blocks, a)
    assert abs(f - c) <= 1e-12 * c


def test_spectrum_csv(tmp_path):
    lam = np.array([3.5, 1e-9, -0.25])
    save_spectrum_csv(tmp_path / "s.csv", lam)
    assert np.array_equal(load_spectrum_csv(tmp_path / "s.csv"), lam)
    assert (tmp_path / "s.csv").read_text().count("\n") == 3
