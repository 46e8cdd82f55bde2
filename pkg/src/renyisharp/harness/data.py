"""Synthetic classification datasets with a stratified 80/20 split."""
from __future__ import annotations

import math
import re

import numpy as np

from ..linalg import SeededRng, derive_seed
from ..network import Dataset

KINDS = ("gaussian_blobs", "two_spirals", "random_label_noise")
TRAIN_FRACTION = 0.8

_NOISE_RE = re.compile(r"^random_label_noise\(\s*([0-9.eE+-]+)\s*\)$")


def parse_kind(kind: str, noise: float = 0.0):
    """Split ``"random_label_noise(0.2)"`` into ``("random_label_noise", 0.2)``."""
    m = _NOISE_RE.match(kind.strip())
    if m:
        return "random_label_noise", float(m.group(1))
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    return kind, float(noise)


def _balanced_labels(rng, n, classes):
    return rng.permutation(np.arange(n) % classes)


def _blobs(n, d, classes, seed, separation):
    rng = SeededRng(seed, 0)
    means = rng.normal((classes, d)) * separation
    labels = _balanced_labels(rng, n, classes)
    x = means[labels] + rng.normal((n, d))
    return x, labels


def _spirals(n, d, classes, seed, separation):
    if d < 2:
        raise ValueError("two_spirals needs d >= 2")
    rng = SeededRng(seed, 0)
    labels = _balanced_labels(rng, n, classes)
    t = np.sqrt(rng.uniform(n)) * 1.5
    angle = 2 * math.pi * (t + labels / classes)
    x = np.zeros((n, d))
    x[:, 0] = t * np.cos(angle)
    x[:, 1] = t * np.sin(angle)
    x[:, :2] *= separation
    x += 0.05 * rng.normal((n, d))
    return x, labels


def _split(labels, classes, seed):
    """Stratified split: each class contributes round(0.8 * count) training points."""
    rng = SeededRng(seed, 1)
    train, test = [], []
    for c in range(classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(TRAIN_FRACTION * idx.size))
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def corrupt_labels(labels, classes, fraction, seed):
    """Reassign ``round(fraction * n)`` labels to a different class, uniformly at random."""
    if not 0 <= fraction <= 1:
        raise ValueError("noise fraction must lie in [0, 1]")
    labels = np.array(labels, dtype=int)
    k = int(round(fraction * labels.size))
    if k == 0 or classes < 2:
        return labels, np.zeros(0, dtype=int)
    rng = SeededRng(seed, 2)
    idx = np.sort(rng.permutation(labels.size)[:k])
    shift = rng.integers(1, classes, size=k)
    labels[idx] = (labels[idx] + shift) % classes
    return labels, idx


def gen_dataset(kind: str, n: int, d: int, classes: int, seed: int, noise: float = 0.0, separation: float = 1.0):
    """Return ``(train, test)`` Datasets with one-hot targets.

    Label noise only touches the training split; the test split keeps the
    clean labels so test loss measures generalization to the true task.
    """
    kind, noise = parse_kind(kind, noise)
    if classes < 2 or d < 1 or n < 2 * classes:
        raise ValueError(f"invalid sizes n={n}, d={d}, classes={classes}")
    if kind == "two_spirals":
        x, y = _spirals(n, d, classes, seed, separation)
    else:
        x, y = _blobs(n, d, classes, seed, separation)
    tr, te = _split(y, classes, seed)
    ytr = y[tr]
    flipped = np.zeros(0, dtype=int)
    if kind == "random_label_noise" and noise > 0:
        ytr, flipped = corrupt_labels(ytr, classes, noise, derive_seed(seed, 7))
    meta = dict(kind=kind, n=n, d=d, classes=classes, seed=seed, noise=noise, separation=separation)
    train = Dataset.from_labels(x[tr], ytr, classes)
    train.meta = dict(meta, split="train", flipped=int(flipped.size))
    test = Dataset.from_labels(x[te], y[te], classes)
    test.meta = dict(meta, split="test")
    return train, test


def dataset_from_config(cfg: dict):
    cfg = dict(cfg)
    return gen_dataset(
        cfg.pop("kind", "gaussian_blobs"),
        int(cfg.pop("n", 2000)),
        int(cfg.pop("d", 20)),
        int(cfg.pop("classes", 4)),
        int(cfg.pop("seed", 0)),
        **cfg,
    )
