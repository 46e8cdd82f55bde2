"""Matrix-free Rényi sharpness of loss Hessians, RSAM training and correlation studies."""
from .entropy import (
    SHANNON_LIMIT,
    IndefiniteSpectrumError,
    RenyiOrder,
    Spectrum,
    matrix_renyi_entropy_exact,
    normalize_spectrum,
    renyi_entropy,
    renyi_sharpness,
)
from .linalg import ConvergenceError, DenseSymmetricMatrix, SeededRng, SymmetricOperator, TridiagonalMatrix, spd_with_spectrum
from .network import Dataset, MlpSpec, NetworkParams, hvp, layer_operator
from .optim import OptimConfig, OptimState, rsam_perturbation, sam_perturbation
from .slq import EstimationError, SlqConfig, estimate_renyi_entropy, hutchinson_trace, lanczos

__version__ = "0.1.0"
