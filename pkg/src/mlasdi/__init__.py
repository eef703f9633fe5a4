"""Multi-stage latent space dynamics identification (mLaSDI).

Learns interpretable latent linear ODEs from parametric simulation
snapshots, interpolates the ODE coefficients across parameter space with
Gaussian processes, and sequentially trains residual decoders that correct
the reconstruction error of earlier stages.
"""

from . import backend
from .data import (
    ParamGrid,
    SnapshotTensor,
    generate_pulse_dataset,
    load_snapshots,
    save_snapshots,
    select_training_params,
)
from .dynamics import estimate_derivative, rk4_rollout, sindy_library
from .gp import CoefficientGps, GpCoefficient, fit_coefficient, matern_kernel
from .multistage import (
    StageStack,
    TrainConfig,
    TrainResult,
    compute_residual,
    predict,
    sindy_reconstruct,
    stage1_loss,
    train_full,
    train_stage1,
    train_stage_k,
)
from .nets import MlpNetwork, backward, forward, init_network
from .optim import AdamState, adam_step
from .report import ErrorReport, evaluate_stack, max_relative_error, percentile_summary
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "CoefficientGps",
    "ErrorReport",
    "GpCoefficient",
    "MlpNetwork",
    "ParamGrid",
    "SnapshotTensor",
    "StageStack",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "backend",
    "backward",
    "compute_residual",
    "estimate_derivative",
    "evaluate_stack",
    "fit_coefficient",
    "forward",
    "generate_pulse_dataset",
    "init_network",
    "load_checkpoint",
    "load_snapshots",
    "matern_kernel",
    "max_relative_error",
    "percentile_summary",
    "predict",
    "rk4_rollout",
    "save_checkpoint",
    "save_snapshots",
    "select_training_params",
    "sindy_library",
    "sindy_reconstruct",
    "stage1_loss",
    "train_full",
    "train_stage1",
    "train_stage_k",
]
