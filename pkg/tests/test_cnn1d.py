import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfihar import cnn1d as C
from lfihar.errors import NonFiniteLoss, ShapeMismatch

TINY = C.CnnConfig(50, 2, tuple(C.ConvBlock(2, 5, 2) for _ in range(4)), 4, 0.5, 3)


def tiny_model(cfg=TINY, seed=0, dtype=np.float64):
    m = C.init_model(cfg, seed, dtype)
    rng = np.random.default_rng(seed + 100)
    for k in m.params:
        if k.endswith("gamma"):
            m.params[k] = rng.uniform(-1.5, 1.5, m.params[k].shape).astype(dtype)
        if k.endswith("beta"):
            m.params[k] = rng.normal(0, 0.5, m.params[k].shape).astype(dtype)
    return m


def batch(cfg, b=4, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(b, cfg.input_length, cfg.input_channels)).astype(dtype), rng.integers(0, cfg.num_classes, b)


def test_temporal_lengths_default():
    assert C.CnnConfig().temporal_lengths() == [3600, 720, 144, 28, 5]


def test_param_count_oracles():
    cfg = C.CnnConfig()
    assert (cfg.fc1_out + 1) * 7 == 7175
    m = C.init_model(cfg)
    assert m.params["fc2.w"].size + m.params["fc2.b"].size == 7175
    assert m.params["conv0.w"].size + m.params["conv0.b"].size == 1632
    assert C.param_count(m) == C.analytic_param_count(cfg) == 799_335


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_param_count_matches_formula_random(seed):
    cfg = C.random_tiny_config(np.random.default_rng(seed))
    assert C.param_count(C.init_model(cfg, seed)) == C.analytic_param_count(cfg)


def test_invalid_configs():
    with pytest.raises(Exception):
        C.CnnConfig(input_length=50).validate()  # 50 -> 10 -> 2 -> 0
    with pytest.raises(Exception):
        C.CnnConfig(conv_blocks=(C.ConvBlock(8, 4),) * 4).validate()


def test_shape_mismatch():
    m = C.init_model(TINY)
    with pytest.raises(ShapeMismatch):
        C.forward(m, np.zeros((2, 49, 2)))


def test_softmax_rows_and_uniform_loss():
    m = tiny_model()
    x, y = batch(TINY, 6)
    p = C.forward(m, x, "eval")
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
    m.params["fc2.w"][:] = 0
    m.params["fc2.b"][:] = 0
    p = C.forward(m, x, "eval")
    assert C.cross_entropy(p, y) == pytest.approx(math.log(3))


def test_eval_forward_is_pure():
    m = tiny_model()
    before = m.copy()
    x, _ = batch(TINY)
    C.forward(m, x, "eval")
    assert all(np.array_equal(before.buffers[k], m.buffers[k]) for k in m.buffers)
    assert all(np.array_equal(before.params[k], m.params[k]) for k in m.params)


def test_train_and_eval_agree_when_running_stats_are_batch_stats():
    cfg = C.CnnConfig(50, 2, TINY.conv_blocks, 4, 0.0, 3, bn_momentum=1.0)
    m = tiny_model(cfg)
    x, _ = batch(cfg, 5)
    train_out = C.forward(m, x, "train")  # momentum 1 copies batch stats into the running ones
    assert np.allclose(train_out, C.forward(m, x, "eval"), atol=1e-12)


def test_batch_norm_normalizes_batch():
    cfg = C.CnnConfig(50, 2, TINY.conv_blocks, 4, 0.0, 3, bn_momentum=1.0, bn_eps=0.0)
    m = tiny_model(cfg)
    x, _ = batch(cfg, 5)
    C.forward(m, x, "train")
    z, _ = C._conv_forward(x, m.params["conv0.w"], m.params["conv0.b"])
    xhat = (z - m.buffers["bn0.mean"]) / np.sqrt(m.buffers["bn0.var"])
    assert np.allclose(xhat.mean(axis=(0, 1)), 0, atol=1e-5)
    assert np.allclose(xhat.var(axis=(0, 1)), 1, atol=1e-5)


def test_gradient_check_spec_tiny_config():
    m = tiny_model()
    x, y = batch(TINY, 3)
    errors = C.gradient_check(m, x, y)
    assert max(errors.values()) < 1e-4, errors


def test_confident_correct_prediction_has_zero_fc2_gradient():
    cfg = C.CnnConfig(50, 2, TINY.conv_blocks, 4, 0.0, 3)
    m = tiny_model(cfg)
    m.params["fc2.w"][:] = 0
    m.params["fc2.b"][:] = [0, 1000, 0]
    x, _ = batch(cfg, 3)
    _, g = C.loss_and_grads(m, x, np.array([1, 1, 1]))
    assert np.all(g["fc2.w"] == 0) and np.all(g["fc2.b"] == 0)


def test_duplicated_batch_same_gradients():
    cfg = C.CnnConfig(50, 2, TINY.conv_blocks, 4, 0.0, 3)
    m = tiny_model(cfg)
    x, y = batch(cfg, 3)
    _, g1 = C.loss_and_grads(m, x, y, update_running=False)
    _, g2 = C.loss_and_grads(m, np.concatenate([x, x]), np.concatenate([y, y]), update_running=False)
    for k in g1:
        assert np.allclose(g1[k], g2[k], rtol=1e-9, atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_pool_routing_conserves_gradient(seed, size):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(2, 23, 3))
    sign = np.where(rng.random(3) < 0.5, -1.0, 1.0)
    idx = C._pool_argmax(z, size, sign)
    dout = rng.normal(size=(2, 23 // size, 3))
    routed = C._pool_route(dout, idx, z.shape, size)
    assert routed.sum() == pytest.approx(dout.sum())
    assert np.count_nonzero(routed) == np.count_nonzero(dout)
    # the routed position holds the extreme of sign * z
    zr = (z * sign)[:, :(23 // size) * size].reshape(2, -1, size, 3)
    picked = np.take_along_axis(zr, idx[:, :, None, :], axis=2)[:, :, 0, :]
    assert np.array_equal(picked, zr.max(axis=2))


def test_zero_learning_rate_only_moves_running_stats():
    m = tiny_model(dtype=np.float32)
    x, y = batch(TINY, 8, dtype=np.float32)
    out = C.train(m, x, y, C.TrainConfig(learning_rate=0.0, epochs=2, batch_size=4)).model
    assert all(np.array_equal(m.params[k], out.params[k]) for k in m.params)
    assert not np.array_equal(m.buffers["bn0.mean"], out.buffers["bn0.mean"])


def test_training_is_bitwise_deterministic():
    m = tiny_model(dtype=np.float32)
    x, y = batch(TINY, 10, dtype=np.float32)
    tc = C.TrainConfig(epochs=3, batch_size=4, seed=11)
    a, b = C.train(m, x, y, tc).model, C.train(m, x, y, tc).model
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_training_reduces_loss_on_separable_data():
    cfg = C.CnnConfig(50, 2, tuple(C.ConvBlock(4, 5, 2) for _ in range(4)), 16, 0.0, 3)
    rng = np.random.default_rng(0)
    y = np.repeat(np.arange(3), 8)
    x = (rng.normal(size=(24, 50, 2)) + 2.0 * y[:, None, None]).astype(np.float32)
    res = C.train(C.init_model(cfg, 0), x, y, C.TrainConfig(learning_rate=1e-2, epochs=30, batch_size=8))
    assert res.epoch_losses[-1] < 0.5 * res.epoch_losses[0]
    assert (C.predict(res.model, x) == y).mean() == 1.0


def test_nonfinite_loss_aborts():
    m = tiny_model(dtype=np.float32)
    x, y = batch(TINY, 4, dtype=np.float32)
    x[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLoss, match="epoch 0"):
        C.train(m, x, y, C.TrainConfig(epochs=1, batch_size=4))


def test_weight_decay_skips_biases_and_bn():
    params = {"fc1.w": np.ones(3), "fc1.b": np.ones(3), "bn0.gamma": np.ones(3)}
    opt = C.Adam(params, lr=0.1, weight_decay=0.5)
    opt.step(params, {k: np.zeros(3) for k in params})
    assert np.allclose(params["fc1.w"], 1 - 0.1 * 0.5)
    assert np.array_equal(params["fc1.b"], np.ones(3)) and np.array_equal(params["bn0.gamma"], np.ones(3))


def test_checkpoint_round_trip_bit_exact(tmp_path):
    m = tiny_model(dtype=np.float32)
    x, y = batch(TINY, 6, dtype=np.float32)
    m = C.train(m, x, y, C.TrainConfig(epochs=1, batch_size=3)).model
    C.save_checkpoint(m, tmp_path / "m.npz", train_seed=3)
    back, header = C.load_checkpoint(tmp_path / "m.npz")
    assert header["train_seed"] == 3 and back.config == m.config
    assert np.array_equal(C.forward(m, x, "eval"), C.forward(back, x, "eval"))
