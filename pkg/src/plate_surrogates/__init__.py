"""Free-edge orthotropic plate simulator and hand-written surrogate networks
(linear, ELU multilayer perceptron, stacked GRU) for pulse-response data."""

__version__ = "0.1.0"

from .dataio import WindowedDataset, load_csv, make_windows, prepare, save_csv
from .evaluator import GridResult, run_grid
from .metrics import r2_score
from .models import Model, ModelSpec
from .plate_sim import Excitation, PlateConfig, TimeSeries, assemble_modal_system, simulate, synthesize
from .trainer import Checkpoint, TrainConfig, run_repeats, train

__all__ = [
    "Checkpoint", "Excitation", "GridResult", "Model", "ModelSpec", "PlateConfig", "TimeSeries",
    "TrainConfig", "WindowedDataset", "assemble_modal_system", "load_csv", "make_windows",
    "prepare", "r2_score", "run_grid", "run_repeats", "save_csv", "simulate", "synthesize", "train",
]
