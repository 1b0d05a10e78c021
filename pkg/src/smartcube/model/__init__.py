"""Space-time factorized construction segmentation model."""

from .boundaries import Component, extract_boundaries, write_pgm
from .loss import IGNORE, bce_loss
from .net import (
    PARAM_ORDER,
    FactorizedNet,
    NetConfig,
    Sample,
    backward,
    forward,
    forward_spatial,
    forward_temporal,
    init_net,
    load,
    loss_and_grads,
    save,
    sgd_step,
    zero_net,
)
from .sampling import DEFAULT_K, sample_temporal_subset
from .training import TrainConfig, gradcheck, predict, toy_problem, train

__all__ = [
    "Component",
    "DEFAULT_K",
    "FactorizedNet",
    "IGNORE",
    "NetConfig",
    "PARAM_ORDER",
    "Sample",
    "TrainConfig",
    "backward",
    "bce_loss",
    "extract_boundaries",
    "forward",
    "forward_spatial",
    "forward_temporal",
    "gradcheck",
    "init_net",
    "load",
    "loss_and_grads",
    "predict",
    "save",
    "sample_temporal_subset",
    "sgd_step",
    "toy_problem",
    "train",
    "write_pgm",
    "zero_net",
]
