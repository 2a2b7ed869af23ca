"""Architecture builders: VGGE plus small AlexNet- and ResNet-style comparators."""

from __future__ import annotations

from typing import Sequence

from .errors import ConfigError, ShapeError
from .nn import ModelConfig
from .nn.layers import (
    DEFAULT_INIT,
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

DEFAULT_INPUT = (20, 157, 1)


def _check_input(name: str, input_shape, min_size: int = 16) -> tuple:
    shape = tuple(int(s) for s in input_shape)
    if len(shape) != 3:
        raise ShapeError(f"{name}: input_shape must be (n_mfcc, n_frames, channels)")
    if shape[0] < min_size or shape[1] < min_size:
        raise ShapeError(f"{name}: input {shape[:2]} too small; need at least "
                         f"{min_size}x{min_size} for four 2x2 poolings")
    return shape


def build_vgge(input_shape=DEFAULT_INPUT, n_classes: int = 2,
               widths: Sequence[int] = (32, 64, 128, 256), dense_units: int = 256,
               dropout_rate: float = 0.5, use_batchnorm: bool = False,
               init: str = DEFAULT_INIT) -> ModelConfig:
    """Four 3x3 conv blocks (conv, ReLU, 2x2 max-pool) and a dense head."""
    shape = _check_input("VGGE", input_shape)
    layers = []
    for w in widths:
        layers.append(conv2d(w, 3, init=init))
        if use_batchnorm:
            layers.append(batchnorm())
        layers += [relu(), maxpool2d(2)]
    layers += [flatten(), dense(dense_units, init), relu(), dropout(dropout_rate),
               dense(n_classes, init)]
    cfg = ModelConfig("VGGE", shape, n_classes, tuple(layers))
    cfg.build_layers()
    return cfg


def build_alexnet_mini(input_shape=DEFAULT_INPUT, n_classes: int = 2,
                       widths: Sequence[int] = (32, 64, 128, 128, 96),
                       dense_units: int = 512, dropout_rate: float = 0.5,
                       init: str = DEFAULT_INIT) -> ModelConfig:
    """AlexNet's 11x11/5x5/3x3 conv pattern and two dropout-regularised dense layers."""
    shape = _check_input("AlexNetMini", input_shape)
    if len(widths) != 5:
        raise ConfigError("AlexNetMini needs five conv widths")
    c1, c2, c3, c4, c5 = widths
    layers = (
        conv2d(c1, 11, stride=2, init=init), relu(), maxpool2d(3, 2, padding="same"),
        conv2d(c2, 5, init=init), relu(), maxpool2d(3, 2, padding="same"),
        conv2d(c3, 3, init=init), relu(),
        conv2d(c4, 3, init=init), relu(),
        conv2d(c5, 3, init=init), relu(), maxpool2d(3, 2, padding="same"),
        flatten(),
        dense(dense_units, init), relu(), dropout(dropout_rate),
        dense(dense_units, init), relu(), dropout(dropout_rate),
        dense(n_classes, init),
    )
    cfg = ModelConfig("AlexNetMini", shape, n_classes, layers)
    cfg.build_layers()
    return cfg


def basic_block(width: int, stride: int, project: bool, init: str = DEFAULT_INIT):
    branch = [conv2d(width, 3, stride, init=init), batchnorm(), relu(),
              conv2d(width, 3, init=init), batchnorm()]
    shortcut = [conv2d(width, 1, stride, init=init), batchnorm()] if project else []
    return [residual(branch, shortcut), relu()]


def build_resnet_mini(input_shape=DEFAULT_INPUT, n_classes: int = 2,
                      widths: Sequence[int] = (16, 32, 64, 128),
                      blocks_per_stage: int = 2, init: str = DEFAULT_INIT) -> ModelConfig:
    """Strided stem, four stages of basic residual blocks, global average pooling."""
    shape = _check_input("ResNetMini", input_shape)
    layers = [conv2d(widths[0], 3, stride=2, init=init), batchnorm(), relu()]
    prev = widths[0]
    for i, w in enumerate(widths):
        for b in range(blocks_per_stage):
            stride = 2 if (i > 0 and b == 0) else 1
            layers += basic_block(w, stride, stride != 1 or w != prev, init)
            prev = w
    layers += [global_avg_pool(), dense(n_classes, init)]
    cfg = ModelConfig("ResNetMini", shape, n_classes, tuple(layers))
    cfg.build_layers()
    return cfg


BUILDERS = {"VGGE": build_vgge, "AlexNetMini": build_alexnet_mini,
            "ResNetMini": build_resnet_mini}


def build_model(name: str, input_shape=DEFAULT_INPUT, n_classes: int = 2, **overrides) -> ModelConfig:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(BUILDERS)}") from None
    return builder(input_shape, n_classes, **overrides)


def count_params(config: ModelConfig) -> int:
    from .nn.layers import iter_layers

    total = 0
    for _, layer in iter_layers(config.build_layers()):
        for shape in layer.param_shapes().values():
            n = 1
            for d in shape:
                n *= d
            total += n
    return total
