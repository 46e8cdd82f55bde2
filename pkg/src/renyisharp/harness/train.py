"""Deterministic mini-batch training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..linalg import SeededRng, derive_seed
from ..network import Dataset, MlpSpec, NetworkParams, accuracy, init_params, loss_value
from ..optim import OptimConfig, OptimState, train_step, warmup_gate


@dataclass
class TrainResult:
    params: NetworkParams
    metrics: list = field(default_factory=list)
    diverged_at: int | None = None

    @property
    def failed(self) -> bool:
        return self.diverged_at is not None

    def __iter__(self):
        yield self.params
        yield self.metrics


def evaluate(spec: MlpSpec, params: NetworkParams, data: Dataset):
    return loss_value(spec, params, data), accuracy(spec, params, data)


def train(
    spec: MlpSpec,
    dataset,
    cfg: OptimConfig,
    seed: int,
    epochs: int = 20,
    batch_size: int = 32,
    eval_every: int = 1,
    params: NetworkParams | None = None,
) -> TrainResult:
    """Train ``spec`` on ``dataset = (train, test)``.

    Initialization uses stream 0 of ``seed`` and each epoch's shuffle a
    seed derived from ``(seed, 1, epoch)``, so runs replay exactly. The test
    split doubles as the validation set for the warm-up gate. A non-finite
    loss stops the run and sets ``diverged_at`` to the 1-based epoch.
    """
    train_set, test_set = dataset
    if epochs < 0 or batch_size < 1 or eval_every < 1:
        raise ValueError("epochs, batch_size and eval_every must be positive")
    if params is None:
        params = init_params(spec, SeededRng(seed, 0))
    state = OptimState.fresh(params.flat.size, cfg)
    n = len(train_set)
    x, y = train_set.inputs, train_set.targets
    result = TrainResult(params)
    for epoch in range(epochs):
        order = SeededRng(derive_seed(seed, 1, epoch)).permutation(n)
        lr = cfg.lr_at(epoch)
        phase = state.phase
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                params = train_step(spec, params, (x[idx], y[idx]), cfg, state, lr)
                if not (math.isfinite(state.last_loss) and np.all(np.isfinite(params.flat))):
                    result.params = params
                    result.diverged_at = epoch + 1
                    return result
        done = epoch + 1
        if done % eval_every == 0 or done == epochs:
            with np.errstate(over="ignore", invalid="ignore"):
                tr_loss, tr_acc = evaluate(spec, params, train_set)
                te_loss, te_acc = evaluate(spec, params, test_set)
            if not (math.isfinite(tr_loss) and math.isfinite(te_loss)):
                result.params = params
                result.diverged_at = done
                return result
            result.metrics.append(dict(
                epoch=done, lr=lr, phase=phase,
                train_loss=tr_loss, train_acc=tr_acc, test_loss=te_loss, test_acc=te_acc,
            ))
            warmup_gate(state, {"epoch": done, "val_acc": te_acc}, cfg)
        else:
            warmup_gate(state, {"epoch": done, "val_acc": None}, cfg)
    result.params = params
    return result


METRIC_COLUMNS = ("epoch", "lr", "phase", "train_loss", "train_acc", "test_loss", "test_acc")


def metrics_csv(metrics) -> str:
    lines = [",".join(METRIC_COLUMNS)]
    for row in metrics:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in METRIC_COLUMNS))
    return "\n".join(lines) + "\n"
