"""Central-difference verification of analytic gradients."""

from __future__ import annotations

import hashlib

import numpy as np

from .layers import iter_layers
from .model import Model, backward, forward, loss_softmax_ce


def relative_error(analytic: float, numeric: float, floor: float = 1e-7) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _signature(kinks) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for k in kinks:
        h.update(np.ascontiguousarray(k).tobytes())
    return h.digest()


def grad_check(
    model: Model,
    batch: np.ndarray,
    labels,
    epsilon: float = 1e-4,
    per_layer: int = 50,
    seed: int = 0,
    mode: str = "train",
    rng_seed: int = 0,
    analytic: dict | None = None,
    details: dict | None = None,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``per_layer`` coordinates are drawn at random from each parameterised
    layer. ReLU and max-pool make the loss piecewise smooth; a probe whose
    +/-epsilon evaluations land in a different activation pattern than the
    unperturbed point straddles a kink, where a finite difference measures
    nothing, so that coordinate is replaced by a fresh draw.

    ``analytic`` overrides the backward pass (used to test the checker
    itself). When ``details`` is a dict it receives per-layer maxima and the
    number of kink-straddling probes that were redrawn.
    """
    if model.dtype != np.float64:
        raise ValueError("grad_check needs a float64 model; use model.astype(np.float64)")

    def probe():
        logits, cache = forward(model, batch, mode, rng_seed, record_kinks=True)
        return loss_softmax_ce(logits, labels)[0], _signature(cache.kinks)

    logits, cache = forward(model, batch, mode, rng_seed, record_kinks=True)
    base_sig = _signature(cache.kinks)
    if analytic is None:
        _, dlogits = loss_softmax_ce(logits, labels)
        analytic = backward(model, cache, dlogits)

    rng = np.random.default_rng(seed)
    worst = 0.0
    redrawn = 0
    for prefix, layer in iter_layers(model.layers):
        names = [prefix + n for n in layer.param_shapes()]
        if not names:
            continue
        sizes = [model.params[n].size for n in names]
        offsets = np.cumsum([0, *sizes])
        order = rng.permutation(offsets[-1])
        layer_worst, done = 0.0, 0
        for flat in order:
            if done >= per_layer:
                break
            which = int(np.searchsorted(offsets, flat, side="right") - 1)
            name, idx = names[which], int(flat - offsets[which])
            p = model.params[name].reshape(-1)
            orig = p[idx]
            p[idx] = orig + epsilon
            plus, sig_plus = probe()
            p[idx] = orig - epsilon
            minus, sig_minus = probe()
            p[idx] = orig
            if sig_plus != base_sig or sig_minus != base_sig:
                redrawn += 1
                continue
            numeric = (plus - minus) / (2 * epsilon)
            err = relative_error(float(analytic[name].reshape(-1)[idx]), numeric)
            layer_worst = max(layer_worst, err)
            done += 1
        if details is not None:
            details[prefix.rstrip(".")] = layer_worst
        worst = max(worst, layer_worst)
    if details is not None:
        details["redrawn"] = redrawn
    return worst
