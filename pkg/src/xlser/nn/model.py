"""Sequential models over :mod:`layers`, softmax cross-entropy and the gradient entry points."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import CacheError, LabelError, ShapeError
from .layers import Context, LayerSpec, build_chain, iter_layers, run_backward, run_forward


@dataclass(frozen=True)
class ModelConfig:
    name: str
    input_shape: tuple  # (n_mfcc, n_frames, channels)
    n_classes: int
    layers: tuple[LayerSpec, ...]

    def build_layers(self):
        layers = build_chain(self.layers, self.input_shape)
        out = layers[-1].out_shape if layers else tuple(self.input_shape)
        if out != (self.n_classes,):
            raise ShapeError(f"{self.name}: final layer outputs {out}, expected ({self.n_classes},)")
        return layers

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape),
                "n_classes": self.n_classes, "layers": [s.to_dict() for s in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(d["name"], tuple(d["input_shape"]), d["n_classes"],
                   tuple(LayerSpec.from_dict(s) for s in d["layers"]))


class Model:
    """Parameters, batch-norm buffers and the built layer chain for one config."""

    def __init__(self, config: ModelConfig, params: dict, buffers: dict, seed: int = 0):
        self.config = config
        self.layers = config.build_layers()
        self.params = params
        self.buffers = buffers
        self.seed = seed
        self.version = 0

    @classmethod
    def build(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "Model":
        """Glorot-uniform weights, zero biases; each layer draws from its own seeded stream."""
        layers = config.build_layers()
        params, buffers = {}, {}
        for prefix, layer in iter_layers(layers):
            rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(prefix.encode())]))
            for k, v in layer.init_params(rng, dtype).items():
                params[prefix + k] = v
            for k, v in layer.init_buffers(dtype).items():
                buffers[prefix + k] = v
        return cls(config, params, buffers, seed)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype if self.params else np.dtype(np.float32)

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def astype(self, dtype) -> "Model":
        return Model(self.config, {k: v.astype(dtype) for k, v in self.params.items()},
                     {k: v.astype(dtype) for k, v in self.buffers.items()}, self.seed)

    def copy(self) -> "Model":
        return self.astype(self.dtype)

    def set_params(self, params: dict) -> None:
        if params.keys() != self.params.keys():
            raise ShapeError("parameter names do not match the model")
        for k, v in params.items():
            if v.shape != self.params[k].shape:
                raise ShapeError(f"{k}: shape {v.shape} != {self.params[k].shape}")
        self.params = params
        self.version += 1

    def commit(self, cache: "ForwardCache") -> None:
        """Apply the batch-norm running-stat updates recorded by a train-mode forward."""
        self.buffers = {**self.buffers, **cache.buffer_updates}


@dataclass
class ForwardCache:
    model_id: int
    version: int
    layer_caches: list
    buffer_updates: dict = field(default_factory=dict)
    kinks: list | None = None


def _as_batch(model: Model, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch)
    expected = tuple(model.config.input_shape)
    if x.ndim == len(expected) and x.shape[1:] == expected[:-1] and expected[-1] == 1:
        x = x[..., None]
    if x.shape[1:] != expected:
        raise ShapeError(f"{model.config.name} input: batch shape {x.shape[1:]} "
                         f"does not match declared {expected}")
    return x.astype(model.dtype, copy=False)


def forward(model: Model, batch: np.ndarray, mode: str = "eval", rng_seed: int = 0,
            record_kinks: bool = False):
    """Logits and the cache needed by :func:`backward`.

    Pure: batch-norm running statistics are returned in the cache rather
    than written to the model; call ``model.commit(cache)`` to keep them.
    With ``record_kinks`` the cache also lists every ReLU mask and max-pool
    argmax, which identifies the piecewise-linear region of the input.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _as_batch(model, batch)
    ctx = Context(train=mode == "train", rng_seed=rng_seed, buffers=model.buffers,
                  kinks=[] if record_kinks else None)
    logits, caches = run_forward(model.layers, x, model.params, "", ctx)
    return logits, ForwardCache(id(model), model.version, caches, ctx.buffer_updates, ctx.kinks)


def backward(model: Model, cache: ForwardCache, dlogits: np.ndarray) -> dict:
    """Gradients for every parameter, keyed like ``model.params``."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise CacheError("stale forward cache: parameters changed since the forward pass")
    grads: dict = {}
    run_backward(model.layers, np.asarray(dlogits, dtype=model.dtype), model.params, "",
                 cache.layer_caches, grads, need_dx=False)
    return {k: grads[k] for k in model.params}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_softmax_ce(logits: np.ndarray, labels: Sequence[int]):
    """Mean categorical cross-entropy and its gradient with respect to the logits."""
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (batch, n_classes), got {logits.shape}")
    n, c = logits.shape
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise LabelError(f"expected {n} labels, got shape {y.shape}")
    if n and (y.min() < 0 or y.max() >= c):
        raise LabelError(f"labels must lie in [0, {c}), got range [{y.min()}, {y.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsumexp - z[rows, y]))
    grad = softmax(logits)
    grad[rows, y] -= 1
    grad /= n
    return loss, grad


def predict_logits(model: Model, batch: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = [forward(model, batch[i:i + batch_size], "eval")[0]
           for i in range(0, len(batch), batch_size)]
    if not out:
        return np.zeros((0, model.config.n_classes), dtype=model.dtype)
    return np.concatenate(out)
