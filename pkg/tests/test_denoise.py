"""Residual denoiser: net construction, inference, training, weight files."""

import numpy as np
import pytest

from biliscope import denoise
from biliscope.denoise import (
    ResidualNet,
    TrainConfig,
    build_net,
    gaussian_fallback,
    infer,
    load_weights,
    loss,
    loss_gradients,
    save_weights,
    train,
    validate_net,
)
from biliscope.errors import ModelShapeError, WeightFormatError


def _small_net(seed=0, depth=3, channels=2):
    return build_net(depth, channels, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------

def test_build_net_layer_layout():
    net = _small_net(depth=5, channels=4)
    assert net.depth == 5
    first, last = net.layers[0], net.layers[-1]
    assert first.in_channels == 1 and last.out_channels == 1
    assert first.has_relu and not first.has_batchnorm
    assert not last.has_relu and not last.has_batchnorm
    for mid in net.layers[1:-1]:
        assert mid.has_relu and mid.has_batchnorm
        assert mid.in_channels == 4 and mid.out_channels == 4


def test_validate_net_rejects_shallow_and_mismatched():
    with pytest.raises(ModelShapeError):
        validate_net(ResidualNet(_small_net().layers[:2]))
    net = _small_net(depth=4, channels=3)
    net.layers[2].kernels = net.layers[2].kernels[:, :2]    # break channel chain
    with pytest.raises(ModelShapeError):
        validate_net(net)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(noise_sigma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(patch_size=4)
    with pytest.raises(ValueError):
        TrainConfig(depth=2)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def test_zeroed_net_is_identity():
    net = _small_net()
    for layer in net.layers:
        layer.kernels[:] = 0.0
        if layer.has_batchnorm:
            layer.bn_shift[:] = 0.0
    img = np.random.default_rng(1).integers(0, 256, (16, 16)).astype(np.uint8)
    assert np.array_equal(infer(net, img), img)


def test_infer_output_contract():
    net = _small_net(seed=2)
    img = np.random.default_rng(3).integers(0, 256, (20, 14)).astype(np.uint8)
    out = infer(net, img)
    assert out.dtype == np.uint8 and out.shape == img.shape


def test_loss_of_zero_net_is_half_mean_noise_power():
    net = _small_net()
    for layer in net.layers:
        layer.kernels[:] = 0.0
        if layer.has_batchnorm:
            layer.bn_shift[:] = 0.0
    clean = np.full((8, 8), 100.0)
    noisy = clean + 10.0
    # zero residual prediction: loss = ||y - x||^2 / (2 N) in 0-1 units
    want = (64 * (10.0 / 255.0) ** 2) / 2.0
    assert abs(loss(net, [(noisy, clean)]) - want) < 1e-12


def test_loss_rejects_empty_and_mismatched_pairs():
    net = _small_net()
    with pytest.raises(ValueError):
        loss(net, [])
    with pytest.raises(ValueError):
        loss(net, [(np.zeros((4, 4)), np.zeros((4, 5)))])


def test_loss_gradients_match_loss_value():
    net = _small_net(seed=4)
    rng = np.random.default_rng(5)
    pairs = [(rng.integers(0, 256, (8, 8)).astype(float),
              rng.integers(0, 256, (8, 8)).astype(float))]
    value, grads = loss_gradients(net, pairs)
    assert abs(value - loss(net, pairs)) < 1e-12
    assert len(grads) == net.depth
    assert grads[0]["kernels"].shape == net.layers[0].kernels.shape


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def test_train_is_deterministic():
    rng = np.random.default_rng(6)
    patches = [rng.integers(0, 256, (12, 12)).astype(np.uint8) for _ in range(3)]
    cfg = TrainConfig(noise_sigma=20.0, patch_size=8, epochs=2, batch_size=2,
                      learning_rate=1e-4, rng_seed=9, depth=3, channels=2)
    a = save_weights(train(cfg, patches))
    b = save_weights(train(cfg, patches))
    assert a == b


def test_train_zero_epochs_returns_initialization():
    cfg = TrainConfig(epochs=0, patch_size=8, depth=3, channels=2, rng_seed=7)
    net = train(cfg, [np.zeros((10, 10), dtype=np.uint8)])
    fresh = build_net(3, 2, np.random.default_rng(7))
    assert save_weights(net) == save_weights(fresh)


def test_train_reduces_loss_on_fixed_noise():
    rng = np.random.default_rng(8)
    patches = [rng.integers(60, 200, (16, 16)).astype(np.uint8) for _ in range(4)]
    cfg = TrainConfig(noise_sigma=25.0, patch_size=16, epochs=0, depth=3,
                      channels=4, rng_seed=1)
    net0 = train(cfg, patches)
    probe = [(p.astype(float) + rng.normal(0, 25.0, p.shape), p.astype(float))
             for p in patches]
    before = loss(net0, probe)
    cfg_on = TrainConfig(noise_sigma=25.0, patch_size=16, epochs=40, depth=3,
                         channels=4, rng_seed=1, learning_rate=3e-4, batch_size=4)
    after = loss(train(cfg_on, patches), probe)
    assert after < before


def test_train_rejects_small_patches():
    cfg = TrainConfig(patch_size=16)
    with pytest.raises(ValueError):
        train(cfg, [np.zeros((8, 8), dtype=np.uint8)])
    with pytest.raises(ValueError):
        train(cfg, [])


# ---------------------------------------------------------------------------
# Weight files
# ---------------------------------------------------------------------------

def test_weights_roundtrip_bitwise():
    net = _small_net(seed=10, depth=4, channels=3)
    blob = save_weights(net)
    again = load_weights(blob)
    # the file stores float32, so the first save quantizes; after that the
    # save/load cycle must be bit-stable
    assert save_weights(again) == blob
    for a, b in zip(net.layers, again.layers):
        assert np.array_equal(b.kernels, a.kernels.astype("<f4").astype(np.float64))
        assert np.array_equal(b.bias, a.bias.astype("<f4").astype(np.float64))
        assert a.has_batchnorm == b.has_batchnorm
        assert a.has_relu == b.has_relu


def test_load_weights_rejects_garbage():
    with pytest.raises(WeightFormatError):
        load_weights(b"not a weight file")
    blob = save_weights(_small_net())
    with pytest.raises(WeightFormatError):
        load_weights(blob[: len(blob) // 2])


# ---------------------------------------------------------------------------
# Gaussian fallback
# ---------------------------------------------------------------------------

def test_gaussian_fallback_preserves_constant():
    img = np.full((16, 16), 77, dtype=np.uint8)
    assert np.array_equal(gaussian_fallback(img, sigma=1.8), img)


def test_gaussian_fallback_smooths_impulse_symmetrically():
    img = np.zeros((15, 15), dtype=np.uint8)
    img[7, 7] = 255
    out = gaussian_fallback(img, sigma=1.5).astype(int)
    assert out[7, 7] == out.max()
    assert np.array_equal(out, out[::-1, :])      # vertical mirror symmetry
    assert np.array_equal(out, out[:, ::-1])      # horizontal mirror symmetry
    assert np.array_equal(out, out.T)             # transpose symmetry
    assert out[7, 7] < 255                        # energy actually spread
