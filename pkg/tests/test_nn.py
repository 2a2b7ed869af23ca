import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlser.errors import CacheError, DecodeError, LabelError, ShapeError
from xlser.nn.layers import Context
from xlser.nn import (AdamState, Model, ModelConfig, adam_step, backward, batchnorm, conv2d,
                      dense, dropout, flatten, forward, global_avg_pool, grad_check,
                      load_checkpoint, loss_softmax_ce, maxpool2d, predict_logits, relu,
                      residual, save_checkpoint, softmax)


def tiny(layers, shape, n_classes=2, seed=0, dtype=np.float64):
    return Model.build(ModelConfig("tiny", shape, n_classes, tuple(layers)), seed, dtype)


def naive_conv(x, W, b, stride, pad):
    """Direct loops over the NHWC cross-correlation definition."""
    N, H, Wd, C = x.shape
    k, _, _, F = W.shape
    pt, pb, pl, pr = pad
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    Ho = (xp.shape[1] - k) // stride + 1
    Wo = (xp.shape[2] - k) // stride + 1
    out = np.zeros((N, Ho, Wo, F))
    for n in range(N):
        for i in range(Ho):
            for j in range(Wo):
                patch = xp[n, i * stride:i * stride + k, j * stride:j * stride + k, :]
                for f in range(F):
                    out[n, i, j, f] = np.sum(patch * W[..., f]) + b[f]
    return out


# -- layer kernels ---------------------------------------------------------------------


def test_conv_hand_example():
    """3x3 input, 2x2 all-ones kernel, valid padding: sums of each 2x2 window."""
    x = np.arange(9.0).reshape(1, 3, 3, 1)
    m = tiny([conv2d(1, 2, padding="valid"), flatten(), dense(2)], (3, 3, 1))
    m.params["0.W"][:] = 1.0
    m.params["0.b"][:] = 0.5
    layer = m.layers[0]
    out, _ = layer.forward(x, m.params, "0.", None)
    np.testing.assert_array_equal(out[0, :, :, 0], [[8.5, 12.5], [20.5, 24.5]])


@settings(max_examples=25, deadline=None)
@given(h=st.integers(3, 9), w=st.integers(3, 9), k=st.sampled_from([1, 2, 3]),
       stride=st.sampled_from([1, 2]), padding=st.sampled_from(["same", "valid"]),
       seed=st.integers(0, 1000))
def test_conv_matches_naive(h, w, k, stride, padding, seed):
    rng = np.random.default_rng(seed)
    m = tiny([conv2d(3, k, stride, padding), global_avg_pool(), dense(2)], (h, w, 2), seed=seed)
    m.params["0.b"] = rng.normal(size=3)
    x = rng.normal(size=(2, h, w, 2))
    layer = m.layers[0]
    out, _ = layer.forward(x, m.params, "0.", None)
    pads = layer.pads
    np.testing.assert_allclose(out, naive_conv(x, m.params["0.W"], m.params["0.b"], stride, pads),
                               atol=1e-12)


def test_same_padding_output_shape():
    m = tiny([conv2d(4, 3, 2), flatten(), dense(2)], (20, 157, 1))
    assert m.layers[0].out_shape == (10, 79, 4)


def test_dense_identity():
    m = tiny([dense(3)], (3,), n_classes=3)
    m.params["0.W"] = np.eye(3)
    x = np.array([[1.0, -2.0, 3.0]])
    logits, _ = forward(m, x)
    np.testing.assert_array_equal(logits, x)


def test_dropout_rate_zero_and_eval_are_identity():
    x = np.random.default_rng(0).normal(size=(4, 6))
    for rate, mode in ((0.0, "train"), (0.5, "eval")):
        m = tiny([dropout(rate), dense(2)], (6,))
        a, _ = forward(m, x, mode)
        b = x @ m.params["1.W"] + m.params["1.b"]
        np.testing.assert_allclose(a, b)


def test_dropout_train_mask_scaled_and_seeded():
    m = tiny([dropout(0.5), dense(2)], (2000,))
    x = np.ones((1, 2000))
    layer = m.layers[0]
    y1, _ = layer.forward(x, {}, "0.", Context(True, 7, {}))
    y2, _ = layer.forward(x, {}, "0.", Context(True, 7, {}))
    y3, _ = layer.forward(x, {}, "0.", Context(True, 8, {}))
    assert set(np.unique(y1)) <= {0.0, 2.0}
    assert 0.45 < (y1 == 0).mean() < 0.55
    assert np.array_equal(y1, y2) and not np.array_equal(y1, y3)


def test_maxpool_routes_gradient_to_argmax():
    x = np.array([[1, 5, 2, 0], [3, 4, 9, 1], [0, 0, 1, 1], [2, 0, 1, 7]], float)
    m = tiny([maxpool2d(2), flatten(), dense(2)], (4, 4, 1))
    layer = m.layers[0]
    y, cache = layer.forward(x[None, :, :, None], {}, "0.", Context(False, 0, {}))
    np.testing.assert_array_equal(y[0, :, :, 0], [[5, 9], [2, 7]])
    dx = layer.backward(np.ones_like(y), {}, "0.", cache, {})
    expected = np.zeros((4, 4))
    expected[0, 1] = expected[1, 2] = expected[3, 0] = expected[3, 3] = 1
    np.testing.assert_array_equal(dx[0, :, :, 0], expected)


def test_maxpool_ties_go_to_first():
    m = tiny([maxpool2d(2), flatten(), dense(2)], (2, 2, 1))
    layer = m.layers[0]
    y, cache = layer.forward(np.ones((1, 2, 2, 1)), {}, "0.", Context(False, 0, {}))
    dx = layer.backward(np.ones_like(y), {}, "0.", cache, {})
    np.testing.assert_array_equal(dx[0, :, :, 0], [[1, 0], [0, 0]])


def test_residual_with_zero_branch_is_identity():
    m = tiny([residual([conv2d(2, 3)]), flatten(), dense(2)], (4, 4, 2))
    m.params["0.branch.0.W"][:] = 0
    x = np.random.default_rng(1).normal(size=(1, 4, 4, 2))
    y, _ = m.layers[0].forward(x, m.params, "0.", None)
    np.testing.assert_array_equal(y, x)


def test_batchnorm_train_normalises_and_eval_uses_buffers():
    m = tiny([batchnorm(), flatten(), dense(2)], (2, 2, 3))
    x = np.random.default_rng(2).normal(3.0, 2.0, size=(8, 2, 2, 3))
    ctx = Context(True, 0, m.buffers)
    y, _ = m.layers[0].forward(x, m.params, "0.", ctx)
    np.testing.assert_allclose(y.mean(axis=(0, 1, 2)), 0, atol=1e-12)
    assert "0.mean" in ctx.buffer_updates
    np.testing.assert_allclose(ctx.buffer_updates["0.mean"], 0.01 * x.mean(axis=(0, 1, 2)))
    y_eval, _ = m.layers[0].forward(x, m.params, "0.", Context(False, 0, m.buffers))
    np.testing.assert_allclose(y_eval, x / np.sqrt(1 + 1e-3))


# -- loss ------------------------------------------------------------------------------


def test_loss_zero_logits_is_ln2():
    loss, grad = loss_softmax_ce(np.zeros((4, 2)), [0, 1, 1, 0])
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(grad, [[-0.125, 0.125], [0.125, -0.125],
                                      [0.125, -0.125], [-0.125, 0.125]])


def test_loss_stable_for_large_logits():
    loss, grad = loss_softmax_ce(np.array([[1000.0, -1000.0], [-1000.0, 1000.0]]), [0, 0])
    assert np.isfinite(loss) and loss == pytest.approx(1000.0)
    assert np.isfinite(grad).all()
    assert np.isfinite(softmax(np.array([[1e308, 0.0]]))).all()


def test_loss_label_errors():
    with pytest.raises(LabelError):
        loss_softmax_ce(np.zeros((2, 2)), [0, 2])
    with pytest.raises(LabelError):
        loss_softmax_ce(np.zeros((2, 2)), [0])


# -- model plumbing --------------------------------------------------------------------


def test_shape_error_names_model():
    m = tiny([flatten(), dense(2)], (4, 5, 1))
    with pytest.raises(ShapeError, match=r"\(5, 4, 1\)"):
        forward(m, np.zeros((1, 5, 4, 1)))
    assert forward(m, np.zeros((1, 4, 5)))[0].shape == (1, 2)  # channel axis added


def test_stale_cache_rejected():
    m = tiny([flatten(), dense(2)], (2, 2, 1))
    logits, cache = forward(m, np.ones((1, 2, 2, 1)), "train")
    _, d = loss_softmax_ce(logits, [0])
    m.set_params({k: v + 1 for k, v in m.params.items()})
    with pytest.raises(CacheError):
        backward(m, cache, d)


def test_forward_is_pure():
    m = tiny([conv2d(2, 3), batchnorm(), relu(), flatten(), dense(2)], (4, 4, 1))
    before = {k: v.copy() for k, v in m.buffers.items()}
    forward(m, np.ones((2, 4, 4, 1)), "train")
    assert all(np.array_equal(before[k], m.buffers[k]) for k in before)


def test_build_is_seeded():
    cfg = ModelConfig("t", (4, 4, 1), 2, (conv2d(2), flatten(), dense(2)))
    a, b, c = Model.build(cfg, 3), Model.build(cfg, 3), Model.build(cfg, 4)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["0.W"], c.params["0.W"])


def test_predict_logits_batches_consistently():
    m = tiny([flatten(), dense(2)], (3, 3, 1))
    x = np.random.default_rng(0).normal(size=(10, 3, 3, 1))
    np.testing.assert_allclose(predict_logits(m, x, batch_size=3), forward(m, x)[0])


# -- gradients ------------------------------------------------------------------------


def test_grad_check_dense_only():
    rng = np.random.default_rng(0)
    m = tiny([dense(5), dense(2)], (4,))
    assert grad_check(m, rng.normal(size=(3, 4)), [0, 1, 1]) < 1e-6


def test_grad_check_small_cnn_with_batchnorm():
    rng = np.random.default_rng(1)
    layers = [conv2d(3, 3), batchnorm(), relu(), maxpool2d(2),
              residual([conv2d(3, 3), relu()], [conv2d(3, 1)]),
              flatten(), dense(4), relu(), dense(2)]
    m = tiny(layers, (6, 6, 1))
    details = {}
    err = grad_check(m, rng.normal(size=(2, 6, 6, 1)), [0, 1], per_layer=20, details=details)
    assert err < 1e-4, details


def test_grad_check_detects_corrupted_gradient():
    rng = np.random.default_rng(2)
    m = tiny([dense(5), relu(), dense(2)], (4,))
    x, y = rng.normal(size=(2, 4)), [0, 1]
    logits, cache = forward(m, x, "train")
    grads = backward(m, cache, loss_softmax_ce(logits, y)[1])
    grads["2.W"] = grads["2.W"] * 1.5
    assert grad_check(m, x, y, analytic=grads) > 0.1


def test_grad_check_requires_float64():
    m = tiny([dense(2)], (3,), dtype=np.float32)
    with pytest.raises(ValueError):
        grad_check(m, np.zeros((1, 3)), [0])


# -- Adam -------------------------------------------------------------------------------


def _params():
    rng = np.random.default_rng(0)
    return {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5)}


def test_adam_zero_gradient_fixed_point():
    p = _params()
    state = AdamState.create(p)
    for _ in range(5):
        new, state = adam_step(p, {k: np.zeros_like(v) for k, v in p.items()}, state)
        assert all(np.array_equal(new[k], p[k]) for k in p)
        p = new


def test_adam_first_step_magnitude_is_lr():
    p = _params()
    g = {k: np.random.default_rng(1).normal(size=v.shape) for k, v in p.items()}
    new, _ = adam_step(p, g, AdamState.create(p, lr=1e-3))
    for k in p:
        np.testing.assert_allclose(np.abs(new[k] - p[k]), 1e-3, atol=1e-6)
        assert np.all(np.sign(p[k] - new[k]) == np.sign(g[k]))


def test_adam_lr_zero_is_noop():
    p = _params()
    state = AdamState.create(p, lr=0.0)
    g = {k: np.ones_like(v) for k, v in p.items()}
    for _ in range(3):
        new, state = adam_step(p, g, state)
    assert all(np.array_equal(new[k], p[k]) for k in p)
    assert state.step == 3


def test_adam_bias_correction_reference():
    """Second step on a scalar, worked by hand from the update rule."""
    p = {"w": np.array([1.0])}
    state = AdamState.create(p, lr=0.1)
    p, state = adam_step(p, {"w": np.array([2.0])}, state)
    p, state = adam_step(p, {"w": np.array([-1.0])}, state)
    m = (0.9 * 0.1 * 2.0 + 0.1 * -1.0) / (1 - 0.9**2)
    v = (0.999 * 0.001 * 4.0 + 0.001 * 1.0) / (1 - 0.999**2)
    expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * m / (math.sqrt(v) + 1e-8)
    assert p["w"][0] == pytest.approx(expected, abs=1e-12)


def test_adam_float32_stays_float32():
    p = {k: v.astype(np.float32) for k, v in _params().items()}
    new, _ = adam_step(p, {k: np.ones_like(v) for k, v in p.items()}, AdamState.create(p))
    assert all(v.dtype == np.float32 for v in new.values())


def test_adam_rejects_mismatched_gradients():
    p = _params()
    with pytest.raises(ShapeError):
        adam_step(p, {"a": p["a"]}, AdamState.create(p))


# -- checkpoints --------------------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    cfg = ModelConfig("t", (4, 4, 1), 2, (conv2d(2), batchnorm(), relu(), flatten(),
                                          dropout(0.3), dense(2)))
    m = Model.build(cfg, 5)
    m.buffers["1.mean"] = np.array([0.5, -0.5], np.float32)
    save_checkpoint(m, tmp_path / "m.serm", {"note": "x"})
    back, extra = load_checkpoint(tmp_path / "m.serm")
    assert extra == {"note": "x"} and back.config == cfg and back.seed == 5
    x = np.random.default_rng(0).normal(size=(3, 4, 4, 1)).astype(np.float32)
    np.testing.assert_array_equal(forward(m, x)[0], forward(back, x)[0])


def test_checkpoint_corruption(tmp_path):
    m = tiny([flatten(), dense(2)], (2, 2, 1), dtype=np.float32)
    save_checkpoint(m, tmp_path / "m.serm")
    raw = (tmp_path / "m.serm").read_bytes()
    (tmp_path / "t.serm").write_bytes(raw[:-4])
    with pytest.raises(DecodeError):
        load_checkpoint(tmp_path / "t.serm")
    (tmp_path / "x.serm").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(DecodeError):
        load_checkpoint(tmp_path / "x.serm")
