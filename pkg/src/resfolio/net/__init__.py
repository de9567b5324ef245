"""Minimal differentiable-network kernel: layers, losses, rescaling, models, Adam."""

from .checkpoint import load_network, network_from_dict, network_to_dict, save_network
from .layers import BatchNorm, Dense, Dropout, ReLU, Sequential, mlp_stack
from .losses import (
    multi_quantile_grad,
    multi_quantile_loss,
    pinball_grad,
    pinball_loss,
    quantile_grid,
    squared_grad,
    squared_loss,
)
from .model import Network, NetworkSpec, homogenize
from .optim import AdamState, adam_init, adam_step
from .resample import default_taus, resample, resample_matrix

__all__ = [
    "AdamState",
    "BatchNorm",
    "Dense",
    "Dropout",
    "Network",
    "NetworkSpec",
    "ReLU",
    "Sequential",
    "adam_init",
    "adam_step",
    "default_taus",
    "homogenize",
    "load_network",
    "mlp_stack",
    "multi_quantile_grad",
    "multi_quantile_loss",
    "network_from_dict",
    "network_to_dict",
    "pinball_grad",
    "pinball_loss",
    "quantile_grid",
    "resample",
    "resample_matrix",
    "save_network",
    "squared_grad",
    "squared_loss",
]
