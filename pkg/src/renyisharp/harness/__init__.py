"""Datasets, training, sharpness measures, correlation and grid execution."""
from .correlate import CorrelationRow, CorrelationTable, correlate, kendall_tau
from .data import corrupt_labels, dataset_from_config, gen_dataset
from .grid import GridSpec, canonicalize, grid_run, load_reports, model_spec, read_results, run_cell
from .measures import MeasureConfig, SharpnessReport, measure_sharpness, measure_values
from .train import TrainResult, evaluate, metrics_csv, train

__all__ = [
    "CorrelationRow", "CorrelationTable", "GridSpec", "MeasureConfig", "SharpnessReport", "TrainResult",
    "canonicalize", "correlate", "corrupt_labels", "dataset_from_config", "evaluate", "gen_dataset",
    "grid_run", "kendall_tau", "load_reports", "measure_sharpness", "measure_values", "metrics_csv",
    "model_spec", "read_results", "run_cell", "train",
]
