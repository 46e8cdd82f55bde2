"""Hyperparameter grids: enumeration, execution and the NDJSON results file."""
from __future__ import annotations

import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from ..linalg import derive_seed
from ..network import MlpSpec
from ..optim import OptimConfig
from .data import dataset_from_config
from .measures import MeasureConfig, SharpnessReport, measure_sharpness
from .train import train


@dataclass
class GridSpec:
    """Cartesian grid over learning rate, batch size, weight decay, optimizer and seed.

    ``optimizers`` entries are either a kind name or a dict of extra
    OptimConfig fields (which must include ``kind``).
    """

    dataset: dict
    model: dict
    lrs: list
    batch_sizes: list
    weight_decays: list
    optimizers: list
    seeds: list
    epochs: int = 20
    eval_every: int = 1
    grid_seed: int = 0
    measure: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lrs", "batch_sizes", "weight_decays", "optimizers", "seeds"):
            if not list(getattr(self, name)):
                raise ValueError(f"grid list {name!r} is empty")
        self.optimizers = [{"kind": o} if isinstance(o, str) else dict(o) for o in self.optimizers]
        MeasureConfig.from_dict(self.measure)

    @property
    def size(self) -> int:
        return len(self.lrs) * len(self.batch_sizes) * len(self.weight_decays) * len(self.optimizers) * len(self.seeds)

    def cells(self) -> list:
        out = []
        prod = itertools.product(self.optimizers, self.lrs, self.batch_sizes, self.weight_decays, self.seeds)
        for i, (opt, lr, bs, wd, s) in enumerate(prod):
            out.append(dict(
                index=i, run_id=f"cell{i:05d}",
                optim=dict(opt, lr=lr, weight_decay=wd), batch_size=bs, seed=s,
                cell_seed=derive_seed(self.grid_seed, i),
            ))
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**d)


def model_spec(cfg: dict, in_dim: int, out_dim: int) -> MlpSpec:
    """Build an MlpSpec from ``{"hidden": [...], ...}`` or explicit ``widths``."""
    cfg = dict(cfg)
    if "layer_shapes" in cfg:
        return MlpSpec.from_dict(cfg)
    widths = cfg.pop("widths", None)
    if widths is None:
        widths = [in_dim, *cfg.pop("hidden", [16]), out_dim]
    return MlpSpec.from_widths(widths, **cfg)


def run_cell(grid: GridSpec, cell: dict) -> SharpnessReport:
    train_set, test_set = _dataset(grid.dataset)
    spec = model_spec(grid.model, train_set.inputs.shape[1], train_set.targets.shape[1])
    ocfg = OptimConfig.from_dict(cell["optim"])
    hyper = dict(optim=ocfg.to_dict(), batch_size=cell["batch_size"], seed=cell["seed"],
                 cell_seed=cell["cell_seed"], epochs=grid.epochs)
    report = SharpnessReport(run_id=cell["run_id"], hyper=hyper)
    try:
        res = train(spec, (train_set, test_set), ocfg, cell["cell_seed"], grid.epochs,
                    cell["batch_size"], grid.eval_every)
    except Exception as exc:  # noqa: BLE001 - a cell failure must not stop the grid
        report.status, report.error = "failed", f"{type(exc).__name__}: {exc}"
        return report
    if res.failed:
        report.status, report.error = "failed", f"diverged at epoch {res.diverged_at}"
        return report
    last = res.metrics[-1] if res.metrics else None
    if last is None:
        report.status, report.error = "failed", "no evaluation recorded"
        return report
    report.set_losses(last["train_loss"], last["test_loss"], last["train_acc"], last["test_acc"])
    try:
        measure_sharpness(spec, res.params, train_set, MeasureConfig.from_dict(grid.measure), report)
    except Exception as exc:  # noqa: BLE001
        report.failures["measure"] = f"{type(exc).__name__}: {exc}"
    return report


_DATA_CACHE = {}


def _dataset(cfg: dict):
    key = json.dumps(cfg, sort_keys=True)
    if key not in _DATA_CACHE:
        _DATA_CACHE[key] = dataset_from_config(cfg)
    return _DATA_CACHE[key]


def _run_cell_dict(args):
    grid_dict, cell = args
    return run_cell(GridSpec.from_dict(grid_dict), cell).to_dict()


def report_line(d: dict) -> str:
    return json.dumps(d, sort_keys=True, allow_nan=True)


def read_results(path) -> list:
    """Parse an NDJSON results file, ignoring a truncated final line."""
    if not os.path.exists(path):
        return []
    out = []
    with open(path) as fh:
        lines = fh.read().split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            if i >= len(lines) - 2:
                break
            raise
    return out


def load_reports(path) -> list:
    return [SharpnessReport.from_dict(d) for d in read_results(path)]


def canonicalize(path) -> None:
    recs = {d["run_id"]: d for d in read_results(path)}
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        for rid in sorted(recs):
            fh.write(report_line(recs[rid]) + "\n")
    os.replace(tmp, path)


def grid_run(grid: GridSpec, out, workers: int = 1, resume: bool = False) -> list:
    """Run every cell not already in ``out`` and canonicalize the file.

    Records are appended as cells finish, so an interrupted run can be
    resumed. The final file is sorted by run id with sorted keys, so its
    bytes do not depend on ``workers`` or completion order.
    """
    cells = grid.cells()
    if resume:
        have = {d["run_id"] for d in read_results(out)}
        if os.path.exists(out):
            # drops a possibly truncated tail before appending
            canonicalize(out)
    else:
        have = set()
        open(out, "w").close()
    todo = [c for c in cells if c["run_id"] not in have]
    gd = grid.to_dict()
    with open(out, "a") as fh:
        if workers <= 1:
            for c in todo:
                fh.write(report_line(_run_cell_dict((gd, c))) + "\n")
                fh.flush()
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for rec in ex.map(_run_cell_dict, [(gd, c) for c in todo]):
                    fh.write(report_line(rec) + "\n")
                    fh.flush()
    canonicalize(out)
    return load_reports(out)
