from .layers import (
    Layer,
    Conv,
    BatchNorm,
    ReLU,
    Sigmoid,
    MaxPoolTime,
    Dropout,
    Dense,
)
from .loss import bce_loss, l2_penalty, add_l2_gradients, sgd_step
from .gradcheck import finite_diff_check, check_layer_gradients

__all__ = [
    "Layer",
    "Conv",
    "BatchNorm",
    "ReLU",
    "Sigmoid",
    "MaxPoolTime",
    "Dropout",
    "Dense",
    "bce_loss",
    "l2_penalty",
    "add_l2_gradients",
    "sgd_step",
    "finite_diff_check",
    "check_layer_gradients",
]
