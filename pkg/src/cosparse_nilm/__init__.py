"""Analysis co-sparse coding for energy disaggregation."""
from ._backend import name as kernel_backend
from .analysis_train import Hyperparams, train_disaggregating, train_distinctive, train_independent, train_simple
from .datapipe import load_house_csv, load_preset, split_testing_mode, split_training_mode, synth_generate
from .disagg import disaggregate
from .errors import NilmError
from .metrics import disaggregation_accuracy, normalized_error, paired_t_test
from .pipeline import MODELS, apply, fit, load_artifacts, save_artifacts
from .synthesis import SynthControls, disaggregate_synthesis, train_synthesis

__version__ = "0.1.0"

__all__ = [
    "Hyperparams", "MODELS", "NilmError", "SynthControls", "apply", "disaggregate", "disaggregate_synthesis",
    "disaggregation_accuracy", "fit", "kernel_backend", "load_artifacts", "load_house_csv", "load_preset",
    "normalized_error", "paired_t_test", "save_artifacts", "split_testing_mode", "split_training_mode",
    "synth_generate", "train_disaggregating", "train_distinctive", "train_independent", "train_simple",
    "train_synthesis",
]
