"""Residual convolutional denoiser with loadable weights and a classical fallback.

The net predicts the noise residual R(y); the denoised image is y - R(y).
All convolution kernels are 3x3 with zero padding, so every layer preserves
the spatial size. Images enter the residual math scaled to [0, 1].

Batch-normalization layers apply the affine map
``(v - mean) / sqrt(var + 1e-5) * scale + shift`` with stored statistics;
during training the statistics stay frozen and scale/shift are learned,
which keeps gradients exact and nets deterministic.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelShapeError, WeightFormatError
from .raster import round_half_up

__all__ = [
    "ConvLayer",
    "ResidualNet",
    "TrainConfig",
    "validate_net",
    "infer",
    "loss",
    "loss_gradients",
    "train",
    "build_net",
    "gaussian_fallback",
    "save_weights",
    "load_weights",
]

BN_EPS = 1e-5


@dataclass
class ConvLayer:
    kernels: np.ndarray  # (out_c, in_c, 3, 3)
    bias: np.ndarray     # (out_c,)
    has_relu: bool = False
    has_batchnorm: bool = False
    bn_scale: np.ndarray | None = None
    bn_shift: np.ndarray | None = None
    bn_mean: np.ndarray | None = None
    bn_var: np.ndarray | None = None

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]


@dataclass
class ResidualNet:
    layers: list[ConvLayer] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class TrainConfig:
    """Denoiser training knobs; all sizes in pixels, sigma in intensity units."""

    noise_sigma: float = 25.0
    patch_size: int = 40
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 0.01
    rng_seed: int = 0
    depth: int = 17
    channels: int = 16

    def __post_init__(self):
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be > 0")
        if self.patch_size < 8:
            raise ValueError("patch_size must be >= 8")
        if self.depth < 3:
            raise ValueError("depth must be >= 3")


def validate_net(net: ResidualNet) -> None:
    if net.depth < 3:
        raise ModelShapeError("net depth %d < 3" % net.depth)
    prev_out = 1
    for i, layer in enumerate(net.layers):
        if layer.kernels.ndim != 4 or layer.kernels.shape[2:] != (3, 3):
            raise ModelShapeError("layer %d kernels must be (out, in, 3, 3)" % i)
        if layer.in_channels != prev_out:
            raise ModelShapeError("layer %d expects %d input channels, got %d"
                                  % (i, layer.in_channels, prev_out))
        if layer.bias.shape != (layer.out_channels,):
            raise ModelShapeError("layer %d bias shape mismatch" % i)
        if layer.has_batchnorm:
            for name in ("bn_scale", "bn_shift", "bn_mean", "bn_var"):
                arr = getattr(layer, name)
                if arr is None or arr.shape != (layer.out_channels,):
                    raise ModelShapeError("layer %d %s shape mismatch" % (i, name))
            if np.any(layer.bn_var < 0):
                raise ModelShapeError("layer %d has negative bn_var" % i)
        prev_out = layer.out_channels
    if prev_out != 1:
        raise ModelShapeError("last layer must emit 1 channel, got %d" % prev_out)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray) -> np.ndarray:
    """(c, h, w) -> (c * 9, h * w) patch matrix for 3x3 kernels, zero padded."""
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 9, h, w), dtype=x.dtype)
    for ki in range(3):
        for kj in range(3):
            cols[:, ki * 3 + kj] = padded[:, ki:ki + h, kj:kj + w]
    return cols.reshape(c * 9, h * w)


def _col2im(cols: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch columns back to an image."""
    c, h, w = shape
    padded = np.zeros((c, h + 2, w + 2), dtype=cols.dtype)
    cols = cols.reshape(c, 9, h, w)
    for ki in range(3):
        for kj in range(3):
            padded[:, ki:ki + h, kj:kj + w] += cols[:, ki * 3 + kj]
    return padded[:, 1:-1, 1:-1]


def _forward(net: ResidualNet, x: np.ndarray, keep_cache: bool = False):
    """Run the residual branch on a (1, h, w) float input."""
    cache = []
    act = x
    for layer in net.layers:
        cols = _im2col(act)
        k2 = layer.kernels.reshape(layer.out_channels, -1)
        pre = (k2 @ cols).reshape(layer.out_channels, *act.shape[1:])
        pre += layer.bias[:, None, None]
        if layer.has_batchnorm:
            inv_std = 1.0 / np.sqrt(layer.bn_var + BN_EPS)
            normed = (pre - layer.bn_mean[:, None, None]) * inv_std[:, None, None]
            out = normed * layer.bn_scale[:, None, None] + layer.bn_shift[:, None, None]
        else:
            normed = None
            out = pre
        relu_in = out
        if layer.has_relu:
            out = np.maximum(out, 0.0)
        if keep_cache:
            cache.append((cols, act.shape, normed, relu_in))
        act = out
    return act, cache


def _backward(net: ResidualNet, cache, d_out: np.ndarray):
    """Gradients of all parameters given dL/d(residual); returns per-layer dicts."""
    grads = [dict() for _ in net.layers]
    grad = d_out
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        cols, in_shape, normed, relu_in = cache[i]
        if layer.has_relu:
            grad = grad * (relu_in > 0)
        if layer.has_batchnorm:
            grads[i]["bn_scale"] = (grad * normed).sum(axis=(1, 2))
            grads[i]["bn_shift"] = grad.sum(axis=(1, 2))
            inv_std = 1.0 / np.sqrt(layer.bn_var + BN_EPS)
            grad = grad * (layer.bn_scale * inv_std)[:, None, None]
        grads[i]["bias"] = grad.sum(axis=(1, 2))
        g2 = grad.reshape(layer.out_channels, -1)
        grads[i]["kernels"] = (g2 @ cols.T).reshape(layer.kernels.shape)
        if i > 0:
            k2 = layer.kernels.reshape(layer.out_channels, -1)
            grad = _col2im(k2.T @ g2, in_shape)
    return grads


def infer(net: ResidualNet, img: np.ndarray) -> np.ndarray:
    """Denoise: subtract the predicted residual, clamp, requantize."""
    validate_net(net)
    y = np.asarray(img, dtype=np.float64) / 255.0
    residual, _ = _forward(net, y[None, :, :])
    denoised = np.clip(y - residual[0], 0.0, 1.0)
    return np.clip(round_half_up(denoised * 255.0), 0, 255).astype(np.uint8)


def _scaled_pairs(pairs):
    out = []
    for noisy, clean in pairs:
        noisy = np.asarray(noisy, dtype=np.float64) / 255.0
        clean = np.asarray(clean, dtype=np.float64) / 255.0
        if noisy.shape != clean.shape:
            raise ValueError("pair dimensions differ: %s vs %s"
                             % (noisy.shape, clean.shape))
        out.append((noisy, clean))
    return out


def loss(net: ResidualNet, pairs) -> float:
    """Residual-learning objective: (1/2N) sum ||R(y_i) - (y_i - x_i)||_F^2."""
    validate_net(net)
    scaled = _scaled_pairs(pairs)
    if not scaled:
        raise ValueError("loss needs at least one (noisy, clean) pair")
    total = 0.0
    for noisy, clean in scaled:
        residual, _ = _forward(net, noisy[None, :, :])
        total += float(((residual[0] - (noisy - clean)) ** 2).sum())
    return total / (2 * len(scaled))


def loss_gradients(net: ResidualNet, pairs):
    """Loss value plus analytic parameter gradients, accumulated over the pairs."""
    validate_net(net)
    scaled = _scaled_pairs(pairs)
    if not scaled:
        raise ValueError("loss_gradients needs at least one pair")
    n = len(scaled)
    total = 0.0
    acc = None
    for noisy, clean in scaled:
        residual, cache = _forward(net, noisy[None, :, :], keep_cache=True)
        diff = residual[0] - (noisy - clean)
        total += float((diff ** 2).sum())
        grads = _backward(net, cache, diff[None, :, :] / n)
        if acc is None:
            acc = grads
        else:
            for a, g in zip(acc, grads):
                for key in g:
                    a[key] += g[key]
    return total / (2 * n), acc


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def build_net(depth: int, channels: int, rng: np.random.Generator) -> ResidualNet:
    """DnCNN-style stack: conv+relu, (depth-2) x conv+bn+relu, conv."""
    layers = []
    for i in range(depth):
        in_c = 1 if i == 0 else channels
        out_c = 1 if i == depth - 1 else channels
        std = math.sqrt(2.0 / (in_c * 9))
        layer = ConvLayer(
            kernels=rng.normal(0.0, std, size=(out_c, in_c, 3, 3)),
            bias=np.zeros(out_c),
            has_relu=i < depth - 1,
            has_batchnorm=0 < i < depth - 1,
        )
        if layer.has_batchnorm:
            layer.bn_scale = np.ones(out_c)
            layer.bn_shift = np.zeros(out_c)
            layer.bn_mean = np.zeros(out_c)
            layer.bn_var = np.ones(out_c)
        layers.append(layer)
    return ResidualNet(layers)


def _sgd_step(net: ResidualNet, grads, lr: float) -> None:
    for layer, g in zip(net.layers, grads):
        layer.kernels -= lr * g["kernels"]
        layer.bias -= lr * g["bias"]
        if layer.has_batchnorm:
            layer.bn_scale -= lr * g["bn_scale"]
            layer.bn_shift -= lr * g["bn_shift"]


def train(cfg: TrainConfig, clean_patches, net: ResidualNet | None = None) -> ResidualNet:
    """SGD on the residual objective with synthetic Gaussian noise per epoch.

    Deterministic given cfg.rng_seed; epochs == 0 returns the (fresh or
    supplied) initialization unchanged.
    """
    patches = [np.asarray(p, dtype=np.float64) / 255.0 for p in clean_patches]
    if not patches:
        raise ValueError("train needs at least one clean patch")
    ps = cfg.patch_size
    for p in patches:
        if p.shape[0] < ps or p.shape[1] < ps:
            raise ValueError("every patch must be at least patch_size on both axes")

    rng = np.random.default_rng(cfg.rng_seed)
    if net is None:
        net = build_net(cfg.depth, cfg.channels, rng)
    validate_net(net)
    sigma = cfg.noise_sigma / 255.0

    for _ in range(cfg.epochs):
        order = rng.permutation(len(patches))
        for start in range(0, len(order), cfg.batch_size):
            batch = []
            for idx in order[start:start + cfg.batch_size]:
                clean = patches[idx]
                r0 = rng.integers(0, clean.shape[0] - ps + 1)
                c0 = rng.integers(0, clean.shape[1] - ps + 1)
                crop = clean[r0:r0 + ps, c0:c0 + ps]
                noisy = crop + rng.normal(0.0, sigma, size=crop.shape)
                batch.append((noisy, crop))
            grads = _batch_gradients(net, batch)
            _sgd_step(net, grads, cfg.learning_rate)
    return net


def _batch_gradients(net: ResidualNet, scaled_batch):
    """Like loss_gradients but on already-scaled float pairs."""
    n = len(scaled_batch)
    acc = None
    for noisy, clean in scaled_batch:
        residual, cache = _forward(net, noisy[None, :, :], keep_cache=True)
        diff = residual[0] - (noisy - clean)
        grads = _backward(net, cache, diff[None, :, :] / n)
        if acc is None:
            acc = grads
        else:
            for a, g in zip(acc, grads):
                for key in g:
                    a[key] += g[key]
    return acc


# ---------------------------------------------------------------------------
# Classical fallback
# ---------------------------------------------------------------------------

def gaussian_fallback(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at 3 sigma, replicated borders."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    radius = max(1, int(math.ceil(3.0 * sigma)))
    taps = np.exp(-np.arange(-radius, radius + 1, dtype=np.float64) ** 2
                  / (2.0 * sigma * sigma))
    taps /= taps.sum()
    data = np.asarray(img, dtype=np.float64)
    padded = np.pad(data, ((0, 0), (radius, radius)), mode="edge")
    horiz = np.zeros_like(data)
    for k in range(2 * radius + 1):
        horiz += taps[k] * padded[:, k:k + data.shape[1]]
    padded = np.pad(horiz, ((radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(data)
    for k in range(2 * radius + 1):
        out += taps[k] * padded[k:k + data.shape[0], :]
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Weight file format
# ---------------------------------------------------------------------------
# Line-oriented header, one layer per line: "OUT IN [relu] [bn]", terminated
# by a blank line; then raw little-endian float32 values in layer order:
# kernels row-major, bias, then scale/shift/mean/var when bn is flagged.

def save_weights(net: ResidualNet) -> bytes:
    validate_net(net)
    buf = io.BytesIO()
    for layer in net.layers:
        flags = []
        if layer.has_relu:
            flags.append("relu")
        if layer.has_batchnorm:
            flags.append("bn")
        line = "%d %d" % (layer.out_channels, layer.in_channels)
        if flags:
            line += " " + " ".join(flags)
        buf.write((line + "\n").encode("ascii"))
    buf.write(b"\n")
    for layer in net.layers:
        buf.write(layer.kernels.astype("<f4").tobytes())
        buf.write(layer.bias.astype("<f4").tobytes())
        if layer.has_batchnorm:
            for arr in (layer.bn_scale, layer.bn_shift, layer.bn_mean, layer.bn_var):
                buf.write(arr.astype("<f4").tobytes())
    return buf.getvalue()


def load_weights(data: bytes) -> ResidualNet:
    header_end = data.find(b"\n\n")
    if header_end < 0:
        raise WeightFormatError("weight file missing blank line after header")
    specs = []
    try:
        header = data[:header_end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise WeightFormatError("weight header is not ascii") from exc
    for line in header.splitlines():
        parts = line.split()
        if len(parts) < 2:
            raise WeightFormatError("bad weight header line %r" % line)
        try:
            out_c, in_c = int(parts[0]), int(parts[1])
        except ValueError:
            raise WeightFormatError("bad channel counts in %r" % line)
        flags = set(parts[2:])
        unknown = flags - {"relu", "bn"}
        if unknown:
            raise WeightFormatError("unknown layer flags %s" % sorted(unknown))
        specs.append((out_c, in_c, "relu" in flags, "bn" in flags))

    payload = data[header_end + 2:]
    if len(payload) % 4:
        raise WeightFormatError("weight payload length %d is not a multiple of 4"
                                % len(payload))
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    pos = 0

    def take(count, shape):
        nonlocal pos
        if pos + count > values.size:
            raise WeightFormatError("weight payload truncated")
        out = values[pos:pos + count].reshape(shape).copy()
        pos += count
        return out

    layers = []
    for out_c, in_c, has_relu, has_bn in specs:
        layer = ConvLayer(
            kernels=take(out_c * in_c * 9, (out_c, in_c, 3, 3)),
            bias=take(out_c, (out_c,)),
            has_relu=has_relu,
            has_batchnorm=has_bn,
        )
        if has_bn:
            layer.bn_scale = take(out_c, (out_c,))
            layer.bn_shift = take(out_c, (out_c,))
            layer.bn_mean = take(out_c, (out_c,))
            layer.bn_var = take(out_c, (out_c,))
        layers.append(layer)
    if pos != values.size:
        raise WeightFormatError("weight payload has %d trailing values" % (values.size - pos))
    net = ResidualNet(layers)
    validate_net(net)
    return net
