"""Minimal reverse-mode autodiff over numpy arrays."""
from .functional import conv2d, conv_transpose2d, instance_norm, pad2d
from .gradcheck import gradcheck
from .optim import Adam, AdamState, TrainingError, adam_step
from .tensor import (
    DimensionError,
    Tape,
    Tensor,
    absolute,
    add,
    complex_abs,
    current_tape,
    leaky_relu,
    linear_map,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scalar_mul,
    square,
    sub,
    tanh,
)

__all__ = [
    "Adam", "AdamState", "DimensionError", "Tape", "Tensor", "TrainingError",
    "absolute", "adam_step", "add", "complex_abs", "conv2d", "conv_transpose2d",
    "current_tape", "gradcheck", "instance_norm", "leaky_relu", "linear_map", "mul", "neg",
    "pad2d", "reduce_mean", "reduce_sum", "relu", "reshape", "scalar_mul",
    "square", "sub", "tanh",
]
