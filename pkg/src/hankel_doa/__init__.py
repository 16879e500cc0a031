"""Single-snapshot Hankel completion for sparse linear arrays, with a learned
unrolled IHT network and beamforming DOA estimation."""

__version__ = "0.1.0"

from .array_signal import ArrayConfig, Dataset, Snapshot, SourceSet, generate_dataset, random_sla
from .doa import beamform, doa_error, estimate_doa, find_peaks
from .estimators import HankelCompleter, IHTNetRegressor
from .hankel_ops import build_index_map, inverse, lift
from .io import load_checkpoint, save_checkpoint
from .solvers import SolverConfig, fiht_solve, iht_solve
from .training import TrainConfig, train

__all__ = [
    "ArrayConfig",
    "Dataset",
    "HankelCompleter",
    "IHTNetRegressor",
    "Snapshot",
    "SolverConfig",
    "SourceSet",
    "TrainConfig",
    "beamform",
    "build_index_map",
    "doa_error",
    "estimate_doa",
    "fiht_solve",
    "find_peaks",
    "generate_dataset",
    "iht_solve",
    "inverse",
    "lift",
    "load_checkpoint",
    "random_sla",
    "save_checkpoint",
    "train",
]
