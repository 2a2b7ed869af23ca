"""Layer specifications and their NHWC forward/backward kernels."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

KINDS = ("Conv2D", "MaxPool2D", "Dense", "ReLU", "Dropout", "Flatten", "BatchNorm",
         "GlobalAvgPool", "Residual")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        args = {}
        for k, v in self.args.items():
            if isinstance(v, (list, tuple)) and v and isinstance(v[0], LayerSpec):
                v = [s.to_dict() for s in v]
            elif isinstance(v, tuple):
                v = list(v)
            args[k] = v
        return {"kind": self.kind, "args": args}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        args = {}
        for k, v in d.get("args", {}).items():
            if isinstance(v, list) and v and isinstance(v[0], dict):
                v = tuple(cls.from_dict(s) for s in v)
            elif k in ("branch", "shortcut"):
                v = tuple(v)
            args[k] = v
        return cls(d["kind"], args)


INITIALIZERS = ("glorot_uniform", "he_uniform")
DEFAULT_INIT = "glorot_uniform"


def conv2d(filters: int, kernel: int = 3, stride: int = 1, padding: str = "same",
           init: str = DEFAULT_INIT) -> LayerSpec:
    return LayerSpec("Conv2D", {"filters": filters, "kernel": kernel, "stride": stride,
                                "padding": padding, "init": init})


def maxpool2d(pool: int = 2, stride: int | None = None, padding: str = "valid") -> LayerSpec:
    return LayerSpec("MaxPool2D", {"pool": pool, "stride": stride or pool, "padding": padding})


def dense(units: int, init: str = DEFAULT_INIT) -> LayerSpec:
    return LayerSpec("Dense", {"units": units, "init": init})


def init_weight(rng, shape, fan_in: int, fan_out: int, scheme: str, dtype) -> np.ndarray:
    """Uniform weights scaled by fan-in (He) or by fan-in plus fan-out (Glorot)."""
    if scheme == "he_uniform":
        limit = np.sqrt(6.0 / fan_in)
    elif scheme == "glorot_uniform":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise ValueError(f"unknown initializer {scheme!r}; choose from {', '.join(INITIALIZERS)}")
    return rng.uniform(-limit, limit, shape).astype(dtype)


def relu() -> LayerSpec:
    return LayerSpec("ReLU")


def dropout(rate: float) -> LayerSpec:
    return LayerSpec("Dropout", {"rate": rate})


def flatten() -> LayerSpec:
    return LayerSpec("Flatten")


def batchnorm(momentum: float = 0.99, epsilon: float = 1e-3) -> LayerSpec:
    return LayerSpec("BatchNorm", {"momentum": momentum, "epsilon": epsilon})


def global_avg_pool() -> LayerSpec:
    return LayerSpec("GlobalAvgPool")


def residual(branch, shortcut=()) -> LayerSpec:
    """``branch(x) + shortcut(x)``; an empty shortcut is the identity."""
    return LayerSpec("Residual", {"branch": tuple(branch), "shortcut": tuple(shortcut)})


@dataclass
class Context:
    train: bool
    rng_seed: int
    buffers: dict
    buffer_updates: dict = field(default_factory=dict)
    kinks: list | None = None  # ReLU masks / pool argmaxes, when recording


def _same_pads(size: int, k: int, s: int) -> tuple[int, int, int]:
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


def _layer_rng(seed: int, prefix: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(prefix.encode())]))


class Layer:
    def __init__(self, spec: LayerSpec, in_shape: tuple, where: str):
        self.spec = spec
        self.where = where
        self.in_shape = tuple(in_shape)
        self.out_shape = self._out_shape(self.in_shape)

    def fail(self, msg):
        raise ShapeError(f"{self.where} ({self.spec.kind}): {msg}")

    def _out_shape(self, s):
        return s

    def param_shapes(self) -> dict[str, tuple]:
        return {}

    def init_params(self, rng, dtype) -> dict:
        return {}

    def init_buffers(self, dtype) -> dict:
        return {}

    def forward(self, x, params, prefix, ctx):
        raise NotImplementedError

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        raise NotImplementedError


class Conv2D(Layer):
    def _out_shape(self, s):
        if len(s) != 3:
            self.fail(f"expects (H, W, C) input, got {s}")
        a = self.spec.args
        k, st = a["kernel"], a.get("stride", 1)
        H, W, C = s
        if a.get("padding", "same") == "same":
            Ho, pt, pb = _same_pads(H, k, st)
            Wo, pl, pr = _same_pads(W, k, st)
        else:
            Ho, Wo, pt, pb, pl, pr = (H - k) // st + 1, (W - k) // st + 1, 0, 0, 0, 0
        if Ho < 1 or Wo < 1:
            self.fail(f"input {s} too small for {k}x{k} kernel")
        self.pads = (pt, pb, pl, pr)
        self.k, self.stride, self.cin, self.cout = k, st, C, a["filters"]
        return (Ho, Wo, self.cout)

    def param_shapes(self):
        return {"W": (self.k, self.k, self.cin, self.cout), "b": (self.cout,)}

    def init_params(self, rng, dtype):
        k2 = self.k * self.k
        W = init_weight(rng, self.param_shapes()["W"], k2 * self.cin, k2 * self.cout,
                        self.spec.args.get("init", DEFAULT_INIT), dtype)
        return {"W": W, "b": np.zeros(self.cout, dtype)}

    def forward(self, x, params, prefix, ctx):
        W, b = params[prefix + "W"], params[prefix + "b"]
        N = x.shape[0]
        Ho, Wo, F = self.out_shape
        k, s = self.k, self.stride
        pt, pb, pl, pr = self.pads
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if any(self.pads) else x
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :Ho, :Wo]
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(N * Ho * Wo, k * k * self.cin)
        out = cols @ W.reshape(-1, F) + b
        return out.reshape(N, Ho, Wo, F), (cols, xp.shape, x.shape)

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        cols, xp_shape, x_shape = cache
        W = params[prefix + "W"]
        F = self.cout
        d2 = dy.reshape(-1, F)
        grads[prefix + "W"] = (cols.T @ d2).reshape(W.shape)
        grads[prefix + "b"] = d2.sum(axis=0)
        if not need_dx:
            return None
        N, H, Wd, _ = x_shape
        Ho, Wo, _ = self.out_shape
        k, s = self.k, self.stride
        dcols = (d2 @ W.reshape(-1, F).T).reshape(N, Ho, Wo, k, k, self.cin)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s, :] += dcols[:, :, :, i, j, :]
        pt, _, pl, _ = self.pads
        return dxp[:, pt:pt + H, pl:pl + Wd, :]


class MaxPool2D(Layer):
    def _out_shape(self, s):
        if len(s) != 3:
            self.fail(f"expects (H, W, C) input, got {s}")
        a = self.spec.args
        k = a.get("pool", 2)
        st = a.get("stride") or k
        H, W, C = s
        if a.get("padding", "valid") == "same":
            Ho, pt, pb = _same_pads(H, k, st)
            Wo, pl, pr = _same_pads(W, k, st)
        else:
            Ho, Wo, pt, pb, pl, pr = (H - k) // st + 1, (W - k) // st + 1, 0, 0, 0, 0
        if Ho < 1 or Wo < 1:
            self.fail(f"input {s} too small for {k}x{k} pooling")
        self.k, self.stride, self.pads = k, st, (pt, pb, pl, pr)
        return (Ho, Wo, C)

    def forward(self, x, params, prefix, ctx):
        k, s = self.k, self.stride
        Ho, Wo, C = self.out_shape
        pt, pb, pl, pr = self.pads
        if any(self.pads):
            xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=-np.inf)
        else:
            xp = x
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :Ho, :Wo]
        flat = win.reshape(*win.shape[:4], k * k)
        arg = flat.argmax(axis=-1)  # first maximum in row-major window order
        if ctx.kinks is not None:
            ctx.kinks.append(arg)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return out, (arg, xp.shape, x.shape)

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        arg, xp_shape, x_shape = cache
        k, s = self.k, self.stride
        Ho, Wo, _ = self.out_shape
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            dxp[:, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s, :] += np.where(arg == idx, dy, 0)
        pt, _, pl, _ = self.pads
        return dxp[:, pt:pt + x_shape[1], pl:pl + x_shape[2], :]


class Dense(Layer):
    def _out_shape(self, s):
        if len(s) != 1:
            self.fail(f"expects flat input, got {s}; add a Flatten layer")
        self.din, self.units = s[0], self.spec.args["units"]
        return (self.units,)

    def param_shapes(self):
        return {"W": (self.din, self.units), "b": (self.units,)}

    def init_params(self, rng, dtype):
        W = init_weight(rng, (self.din, self.units), self.din, self.units,
                        self.spec.args.get("init", DEFAULT_INIT), dtype)
        return {"W": W, "b": np.zeros(self.units, dtype)}

    def forward(self, x, params, prefix, ctx):
        return x @ params[prefix + "W"] + params[prefix + "b"], x

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        grads[prefix + "W"] = cache.T @ dy
        grads[prefix + "b"] = dy.sum(axis=0)
        return dy @ params[prefix + "W"].T if need_dx else None


class ReLU(Layer):
    def forward(self, x, params, prefix, ctx):
        mask = x > 0
        if ctx.kinks is not None:
            ctx.kinks.append(mask)
        return x * mask, mask

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        return dy * cache


class Dropout(Layer):
    def _out_shape(self, s):
        rate = self.spec.args.get("rate", 0.5)
        if not 0 <= rate < 1:
            self.fail(f"rate must be in [0, 1), got {rate}")
        self.rate = rate
        return s

    def forward(self, x, params, prefix, ctx):
        if not ctx.train or self.rate == 0:
            return x, None
        rng = _layer_rng(ctx.rng_seed, prefix)
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / x.dtype.type(1 - self.rate)
        return x * mask, mask

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        return dy if cache is None else dy * cache


class Flatten(Layer):
    def _out_shape(self, s):
        return (int(np.prod(s)),)

    def forward(self, x, params, prefix, ctx):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        return dy.reshape(cache)


class GlobalAvgPool(Layer):
    def _out_shape(self, s):
        if len(s) != 3:
            self.fail(f"expects (H, W, C) input, got {s}")
        return (s[2],)

    def forward(self, x, params, prefix, ctx):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        N, H, W, C = cache
        return np.broadcast_to(dy[:, None, None, :] / (H * W), cache).copy()


class BatchNorm(Layer):
    """Normalises over every axis but the last (channel) one."""

    def _out_shape(self, s):
        self.c = s[-1]
        self.momentum = self.spec.args.get("momentum", 0.99)
        self.eps = self.spec.args.get("epsilon", 1e-3)
        return s

    def param_shapes(self):
        return {"gamma": (self.c,), "beta": (self.c,)}

    def init_params(self, rng, dtype):
        return {"gamma": np.ones(self.c, dtype), "beta": np.zeros(self.c, dtype)}

    def init_buffers(self, dtype):
        return {"mean": np.zeros(self.c, dtype), "var": np.ones(self.c, dtype)}

    def forward(self, x, params, prefix, ctx):
        gamma, beta = params[prefix + "gamma"], params[prefix + "beta"]
        axes = tuple(range(x.ndim - 1))
        if ctx.train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = ctx.buffers[prefix + "mean"], ctx.buffers[prefix + "var"]
            mom = x.dtype.type(self.momentum)
            ctx.buffer_updates[prefix + "mean"] = mom * m[0] + (1 - mom) * mean
            ctx.buffer_updates[prefix + "var"] = mom * m[1] + (1 - mom) * var
        else:
            mean = ctx.buffers[prefix + "mean"]
            var = ctx.buffers[prefix + "var"]
        inv = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        xhat = (x - mean) * inv
        return gamma * xhat + beta, (xhat, inv, ctx.train)

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        xhat, inv, train = cache
        axes = tuple(range(dy.ndim - 1))
        gamma = params[prefix + "gamma"]
        grads[prefix + "gamma"] = (dy * xhat).sum(axis=axes)
        grads[prefix + "beta"] = dy.sum(axis=axes)
        if not need_dx:
            return None
        dxhat = dy * gamma
        if not train:
            return dxhat * inv
        m = dy.size // dy.shape[-1]
        return (inv / m) * (m * dxhat - dxhat.sum(axis=axes)
                            - xhat * (dxhat * xhat).sum(axis=axes))


class Residual(Layer):
    def _out_shape(self, s):
        self.branch = build_chain(self.spec.args["branch"], s, f"{self.where}.branch")
        self.shortcut = build_chain(self.spec.args.get("shortcut", ()), s,
                                    f"{self.where}.shortcut")
        b_out = self.branch[-1].out_shape if self.branch else s
        s_out = self.shortcut[-1].out_shape if self.shortcut else s
        if b_out != s_out:
            self.fail(f"branch output {b_out} does not match shortcut output {s_out}")
        return b_out

    def children(self):
        for j, layer in enumerate(self.branch):
            yield f"branch.{j}.", layer
        for j, layer in enumerate(self.shortcut):
            yield f"shortcut.{j}.", layer

    def forward(self, x, params, prefix, ctx):
        yb, cb = run_forward(self.branch, x, params, prefix + "branch.", ctx)
        ys, cs = run_forward(self.shortcut, x, params, prefix + "shortcut.", ctx)
        return yb + ys, (cb, cs)

    def backward(self, dy, params, prefix, cache, grads, need_dx=True):
        cb, cs = cache
        db = run_backward(self.branch, dy, params, prefix + "branch.", cb, grads, True)
        ds = run_backward(self.shortcut, dy, params, prefix + "shortcut.", cs, grads, True)
        return db + ds


_CLASSES: dict[str, type[Layer]] = {
    "Conv2D": Conv2D, "MaxPool2D": MaxPool2D, "Dense": Dense, "ReLU": ReLU,
    "Dropout": Dropout, "Flatten": Flatten, "BatchNorm": BatchNorm,
    "GlobalAvgPool": GlobalAvgPool, "Residual": Residual,
}


def build_chain(specs, in_shape, where: str = "layer") -> list[Layer]:
    layers = []
    shape = tuple(in_shape)
    for i, spec in enumerate(specs):
        layer = _CLASSES[spec.kind](spec, shape, f"{where}[{i}]")
        layers.append(layer)
        shape = layer.out_shape
    return layers


def iter_layers(layers, prefix: str = ""):
    """Depth-first (prefix, layer) pairs; prefixes name parameters, e.g. ``3.W``."""
    for i, layer in enumerate(layers):
        yield from _iter_child(f"{prefix}{i}.", layer)


def _iter_child(prefix, layer):
    yield prefix, layer
    if isinstance(layer, Residual):
        for sub, child in layer.children():
            yield from _iter_child(prefix + sub, child)


def run_forward(layers, x, params, prefix, ctx):
    caches = []
    for i, layer in enumerate(layers):
        x, c = layer.forward(x, params, f"{prefix}{i}.", ctx)
        caches.append(c)
    return x, caches


def run_backward(layers, dy, params, prefix, caches, grads, need_dx=True):
    for i in range(len(layers) - 1, -1, -1):
        dy = layers[i].backward(dy, params, f"{prefix}{i}.", caches[i], grads,
                                need_dx or i > 0)
    return dy


def describe(spec: LayerSpec) -> str:
    a: dict[str, Any] = spec.args
    if spec.kind == "Conv2D":
        return f"Conv{a['kernel']}x{a['kernel']}({a['filters']}, stride {a.get('stride', 1)})"
    if spec.kind == "MaxPool2D":
        return f"MaxPool{a['pool']}x{a['pool']}"
    if spec.kind == "Dense":
        return f"Dense({a['units']})"
    if spec.kind == "Dropout":
        return f"Dropout({a['rate']})"
    if spec.kind == "Residual":
        return f"Residual({len(a['branch'])} layers, {'projection' if a.get('shortcut') else 'identity'})"
    return spec.kind
