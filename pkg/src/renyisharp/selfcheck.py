"""Quick property checks run by ``renyisharp selfcheck``."""
from __future__ import annotations

import itertools

import numpy as np

from .entropy import blockdiag_power_sum, check_logdet_inequality, concatenated_power_sum, matrix_renyi_entropy_exact, renyi_sharpness
from .harness.correlate import kendall_tau
from .linalg import SeededRng, SymmetricOperator, haar_orthogonal, spd_with_spectrum
from .network import MlpSpec, explicit_layer_hessian, general_position, init_params, multiplicative_perturb_identity_check, rescale_layers
from .slq import SlqConfig, estimate_renyi_entropy, slq_nodes


def check_slq_oracle(seed=0, count=3, n=64):
    worst = 0.0
    for i in range(count):
        rng = SeededRng(seed, i)
        lam = rng.uniform(n, 1.0, 100.0)
        m = spd_with_spectrum(rng, lam)
        nodes = slq_nodes(SymmetricOperator.from_dense(m), SlqConfig(seed=seed + i))
        for a in (0.5, 1.5):
            exact = matrix_renyi_entropy_exact(m, a)
            est = estimate_renyi_entropy(None, a, nodes=nodes).entropy
            worst = max(worst, abs(est - exact) / abs(exact))
    return worst <= 0.02, f"max relative error {worst:.2e}"


def check_reparam_invariance(seed=0, count=3):
    worst = 0.0
    for i in range(count):
        rng = SeededRng(seed, 100 + i)
        spec = MlpSpec.from_widths([4, 5, 4, 3])
        params = init_params(spec, rng)
        x, _ = general_position(spec, params, rng.normal((16, 4)))
        y = np.eye(3)[rng.integers(0, 3, size=16)]
        c = np.exp(rng.uniform(2, -1.0, 1.0))
        factors = [c[0], c[1], 1.0 / (c[0] * c[1])]
        scaled = rescale_layers(params, factors)
        for layer in range(spec.n_layers):
            h0 = explicit_layer_hessian(spec, params, (x, y), layer)
            h1 = explicit_layer_hessian(spec, scaled, (x, y), layer)
            for a in (0.5, 1.5, 2.0):
                s0, s1 = renyi_sharpness(h0, a), renyi_sharpness(h1, a)
                worst = max(worst, abs(s1 - s0) / max(abs(s0), 1e-300))
    return worst <= 1e-6, f"max relative change {worst:.2e}"


def check_multiplicative_identity(seed=0, count=20):
    worst = 0.0
    for i in range(count):
        rng = SeededRng(seed, 200 + i)
        w, h = rng.normal((6, 5)), rng.normal(5)
        a = haar_orthogonal(rng, 5)
        worst = max(worst, multiplicative_perturb_identity_check(w, h, a, float(rng.uniform(None, 0.0, 0.5))))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def check_logdet(seed=0, count=10000):
    rng = SeededRng(seed, 300)
    bad = 0
    for _ in range(count):
        n = int(rng.integers(2, 20))
        p = rng.uniform(n, 0.01, 1.0)
        p /= p.sum()
        a = float(rng.uniform(None, 0.01, 0.9)) if rng.uniform() < 0.5 else float(rng.uniform(None, 1.2, 3.0))
        bad += not check_logdet_inequality(p, a)[0]
    return bad == 0, f"{bad} violations in {count} draws"


def check_blockdiag(seed=0, count=100):
    rng = SeededRng(seed, 400)
    worst = 0.0
    for _ in range(count):
        blocks = [rng.uniform(int(rng.integers(1, 8)), 0.0, 5.0) + 1e-3 for _ in range(int(rng.integers(2, 4)))]
        a = float(rng.uniform(None, 0.2, 3.0))
        if abs(a - 1) < 1e-2:
            a = 0.5
        f, c = blockdiag_power_sum(blocks, a), concatenated_power_sum(blocks, a)
        worst = max(worst, abs(f - c) / c)
    return worst <= 1e-12, f"max relative difference {worst:.2e}"


def check_kendall(seed=0, count=50):
    rng = SeededRng(seed, 500)
    for _ in range(count):
        n = int(rng.integers(2, 30))
        x, y = rng.integers(0, 5, size=n), rng.integers(0, 5, size=n)
        s = sum(np.sign(x[i] - x[j]) * np.sign(y[i] - y[j]) for i, j in itertools.combinations(range(n), 2))
        if kendall_tau(x, y) != 2.0 * int(s) / (n * (n - 1)):
            return False, "mismatch against pairwise loop"
    return True, f"{count} vectors match"


CHECKS = {
    "slq_vs_oracle": check_slq_oracle,
    "reparametrization_invariance": check_reparam_invariance,
    "multiplicative_identity": check_multiplicative_identity,
    "logdet_inequality": check_logdet,
    "blockdiag_factorization": check_blockdiag,
    "kendall_bruteforce": check_kendall,
}


def run_all(seed: int = 0):
    out = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # noqa: BLE001 - reported as a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
