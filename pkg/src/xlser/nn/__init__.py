"""Minimal NHWC convolutional network engine with manual reverse-mode gradients."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    LayerSpec,
    batchnorm,
    conv2d,
    dense,
    dropout,
    flatten,
    global_avg_pool,
    maxpool2d,
    relu,
    residual,
)
from .model import (
    ForwardCache,
    Model,
    ModelConfig,
    backward,
    forward,
    loss_softmax_ce,
    predict_logits,
    softmax,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "ForwardCache", "LayerSpec", "Model", "ModelConfig", "adam_step",
    "backward", "batchnorm", "conv2d", "dense", "dropout", "flatten", "forward",
    "global_avg_pool", "grad_check", "load_checkpoint", "loss_softmax_ce", "maxpool2d",
    "predict_logits", "relu", "residual", "save_checkpoint", "softmax",
]
