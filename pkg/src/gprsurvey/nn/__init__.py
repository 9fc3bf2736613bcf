"""Desk-scale MigrationNet and GPRNet on a small numpy reverse-mode engine."""
from .autodiff import Tensor
from .losses import FrozenChamfer, chamfer_loss, cross_entropy_loss, joint_loss, structure_loss
from .nets import (
    Architecture,
    NetSpec,
    ParamStore,
    gpr_net_forward,
    init_params,
    migration_net_forward,
    output_points,
    symmetrize_params,
)
from .train import TrainConfig, fit, grad_check, train

__all__ = [
    "Architecture",
    "FrozenChamfer",
    "NetSpec",
    "ParamStore",
    "Tensor",
    "TrainConfig",
    "chamfer_loss",
    "cross_entropy_loss",
    "fit",
    "gpr_net_forward",
    "grad_check",
    "init_params",
    "joint_loss",
    "migration_net_forward",
    "output_points",
    "structure_loss",
    "symmetrize_params",
    "train",
]
