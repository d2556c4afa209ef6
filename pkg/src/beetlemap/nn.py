"""Minimal float64 network engine with hand-written backpropagation.

Implements exactly what the encoder needs: 1-D same-padding convolutions,
batch normalization, ReLU, global average pooling over the length axis,
one dense projection head, and an Adam optimizer with decoupled weight
decay.  Batched activations are ``(batch, channels, length)`` arrays.

Training-mode forwards return a cache that the matching ``backward``
consumes; eval-mode forwards are pure functions of input and parameters
(they return ``None`` in place of the cache).  Convolutions internally
reorder activations to channels-major so the whole batch collapses into
a single matrix product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import DataFormatError
from .rng import substream

__all__ = [
    "KERNEL_SIZES",
    "CHANNEL_WIDTHS",
    "LATENT_WIDTH",
    "EMBED_WIDTH",
    "Conv1d",
    "BatchNorm1d",
    "Dense",
    "relu",
    "relu_forward",
    "relu_backward",
    "global_avg_pool",
    "global_avg_pool_backward",
    "EncoderModel",
    "ForwardResult",
    "AdamW",
    "save_encoder",
    "load_encoder",
]

KERNEL_SIZES = (7, 5, 3)
CHANNEL_WIDTHS = (32, 64, 128)
LATENT_WIDTH = 128
EMBED_WIDTH = 16

_CHECKPOINT_MAGIC = b"ENCM"
_CHECKPOINT_VERSION = 1


def _check_batch(x: np.ndarray, channels: int, name: str) -> None:
    if x.ndim != 3:
        raise ValueError(f"{name} expects (batch, channels, length), got {x.shape}")
    if x.shape[1] != channels:
        raise ValueError(f"{name} expects {channels} channels, got {x.shape[1]}")
    if x.shape[0] < 1 or x.shape[2] < 1:
        raise ValueError(f"{name} got empty batch or length: {x.shape}")


@dataclass
class Conv1d:
    """Same-padding, stride-1 one-dimensional convolution."""

    weight: np.ndarray  # (out_channels, in_channels, kernel)
    bias: np.ndarray  # (out_channels,)

    def __post_init__(self) -> None:
        if self.weight.ndim != 3 or self.weight.shape[2] % 2 == 0:
            raise ValueError(
                f"weight must be (out, in, odd_kernel), got {self.weight.shape}"
            )
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias shape must match out_channels")

    @classmethod
    def initialize(cls, in_channels: int, out_channels: int, kernel: int,
                   rng: np.random.Generator) -> "Conv1d":
        scale = np.sqrt(2.0 / (in_channels * kernel))
        weight = rng.normal(0.0, scale, size=(out_channels, in_channels, kernel))
        return cls(weight=weight, bias=np.zeros(out_channels))

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def _im2col(self, x: np.ndarray) -> tuple[np.ndarray, int, int]:
        """Unfold input windows into a ``(in*kernel, batch*length)`` matrix."""
        n, _, length = x.shape
        kernel = self.weight.shape[2]
        pad = (kernel - 1) // 2
        xt = np.ascontiguousarray(x.transpose(1, 0, 2))  # (in, batch, length)
        xp = np.zeros((self.in_channels, n, length + 2 * pad))
        xp[:, :, pad:pad + length] = xt
        col = np.empty((self.in_channels, kernel, n, length))
        for k in range(kernel):
            col[:, k] = xp[:, :, k:k + length]
        return col.reshape(self.in_channels * kernel, n * length), n, length

    def forward(self, x: np.ndarray, train: bool = False):
        """Convolve ``x`` (batch, in, length) -> (batch, out, length)."""
        _check_batch(x, self.in_channels, "Conv1d")
        col, n, length = self._im2col(x)
        w2 = self.weight.reshape(self.out_channels, -1)
        out = w2 @ col + self.bias[:, None]
        y = np.ascontiguousarray(
            out.reshape(self.out_channels, n, length).transpose(1, 0, 2)
        )
        cache = (col, x.shape) if train else None
        return y, cache

    def backward(self, d_out: np.ndarray, cache):
        """Return ``(d_input, {"weight": dW, "bias": db})``."""
        if cache is None:
            raise ValueError("backward requires a train-mode forward cache")
        col, x_shape = cache
        n, _, length = x_shape
        kernel = self.weight.shape[2]
        pad = (kernel - 1) // 2
        dyt = np.ascontiguousarray(d_out.transpose(1, 0, 2)).reshape(
            self.out_channels, n * length
        )
        d_weight = (dyt @ col.T).reshape(self.weight.shape)
        d_bias = dyt.sum(axis=1)
        w2 = self.weight.reshape(self.out_channels, -1)
        dcol = (w2.T @ dyt).reshape(self.in_channels, kernel, n, length)
        dxp = np.zeros((self.in_channels, n, length + 2 * pad))
        for k in range(kernel):
            dxp[:, :, k:k + length] += dcol[:, k]
        d_input = np.ascontiguousarray(
            dxp[:, :, pad:pad + length].transpose(1, 0, 2)
        )
        return d_input, {"weight": d_weight, "bias": d_bias}


@dataclass
class BatchNorm1d:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes by the biased statistics of the current batch
    (pooled over batch and length axes) and folds them into the running
    estimates with momentum 0.9; eval mode normalizes by the running
    estimates alone.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def initialize(cls, channels: int) -> "BatchNorm1d":
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def forward(self, x: np.ndarray, train: bool = False):
        _check_batch(x, self.channels, "BatchNorm1d")
        if train:
            if x.shape[0] * x.shape[2] < 2:
                raise ValueError("batch statistics need at least 2 values per channel")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean[None, :, None]) * inv_std[None, :, None]
        y = self.gamma[None, :, None] * x_hat + self.beta[None, :, None]
        cache = (x_hat, inv_std) if train else None
        return y, cache

    def backward(self, d_out: np.ndarray, cache):
        if cache is None:
            raise ValueError("backward requires a train-mode forward cache")
        x_hat, inv_std = cache
        m = d_out.shape[0] * d_out.shape[2]
        d_gamma = (d_out * x_hat).sum(axis=(0, 2))
        d_beta = d_out.sum(axis=(0, 2))
        d_hat = d_out * self.gamma[None, :, None]
        sum_d = d_hat.sum(axis=(0, 2), keepdims=True)
        sum_dx = (d_hat * x_hat).sum(axis=(0, 2), keepdims=True)
        d_input = (inv_std[None, :, None] / m) * (m * d_hat - sum_d - x_hat * sum_dx)
        return d_input, {"gamma": d_gamma, "beta": d_beta}


@dataclass
class Dense:
    """Fully connected layer ``y = x @ weight + bias``."""

    weight: np.ndarray  # (in_features, out_features)
    bias: np.ndarray  # (out_features,)

    @classmethod
    def initialize(cls, in_features: int, out_features: int,
                   rng: np.random.Generator) -> "Dense":
        scale = np.sqrt(2.0 / in_features)
        weight = rng.normal(0.0, scale, size=(in_features, out_features))
        return cls(weight=weight, bias=np.zeros(out_features))

    def forward(self, x: np.ndarray, train: bool = False):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ValueError(
                f"Dense expects (batch, {self.weight.shape[0]}), got {x.shape}"
            )
        y = x @ self.weight + self.bias
        cache = x if train else None
        return y, cache

    def backward(self, d_out: np.ndarray, cache):
        if cache is None:
            raise ValueError("backward requires a train-mode forward cache")
        x = cache
        d_weight = x.T @ d_out
        d_bias = d_out.sum(axis=0)
        d_input = d_out @ self.weight.T
        return d_input, {"weight": d_weight, "bias": d_bias}


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(x, 0)."""
    return np.maximum(x, 0.0)


def relu_forward(x: np.ndarray):
    mask = x > 0.0
    return x * mask, mask


def relu_backward(d_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return d_out * mask


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Average over the length axis: (batch, channels, length) -> (batch, channels)."""
    if x.ndim != 3:
        raise ValueError(f"expected (batch, channels, length), got {x.shape}")
    return x.mean(axis=2)


def global_avg_pool_backward(d_out: np.ndarray, length: int) -> np.ndarray:
    return np.repeat(d_out[:, :, None], length, axis=2) / length


class ForwardResult(NamedTuple):
    embedding: np.ndarray  # (batch, EMBED_WIDTH)
    latent: np.ndarray  # (batch, LATENT_WIDTH)
    cache: tuple | None


@dataclass
class EncoderModel:
    """Three-block 1-D CNN encoder with a linear projection head.

    Blocks are Conv(7) -> BN -> ReLU, Conv(5) -> BN -> ReLU,
    Conv(3) -> BN -> ReLU, followed by global average pooling to the
    128-wide latent and a dense projection to the 16-wide embedding.
    """

    band_count: int
    conv1: Conv1d
    bn1: BatchNorm1d
    conv2: Conv1d
    bn2: BatchNorm1d
    conv3: Conv1d
    bn3: BatchNorm1d
    head: Dense

    @classmethod
    def initialize(cls, band_count: int, seed: int) -> "EncoderModel":
        if band_count < KERNEL_SIZES[0]:
            raise ValueError(
                f"need at least {KERNEL_SIZES[0]} bands, got {band_count}"
            )
        rng = substream(seed, "init")
        c1, c2, c3 = CHANNEL_WIDTHS
        k1, k2, k3 = KERNEL_SIZES
        return cls(
            band_count=band_count,
            conv1=Conv1d.initialize(1, c1, k1, rng),
            bn1=BatchNorm1d.initialize(c1),
            conv2=Conv1d.initialize(c1, c2, k2, rng),
            bn2=BatchNorm1d.initialize(c2),
            conv3=Conv1d.initialize(c2, c3, k3, rng),
            bn3=BatchNorm1d.initialize(c3),
            head=Dense.initialize(LATENT_WIDTH, EMBED_WIDTH, rng),
        )

    def forward(self, x: np.ndarray, train: bool = False) -> ForwardResult:
        """Run the full encoder; ``x`` is (batch, 1, band_count)."""
        x = np.asarray(x, dtype=np.float64)
        _check_batch(x, 1, "EncoderModel")
        if x.shape[2] != self.band_count:
            raise ValueError(f"expected {self.band_count} bands, got {x.shape[2]}")
        a1, conv1_cache = self.conv1.forward(x, train)
        n1, bn1_cache = self.bn1.forward(a1, train)
        r1, mask1 = relu_forward(n1)
        a2, conv2_cache = self.conv2.forward(r1, train)
        n2, bn2_cache = self.bn2.forward(a2, train)
        r2, mask2 = relu_forward(n2)
        a3, conv3_cache = self.conv3.forward(r2, train)
        n3, bn3_cache = self.bn3.forward(a3, train)
        r3, mask3 = relu_forward(n3)
        latent = global_avg_pool(r3)
        embedding, head_cache = self.head.forward(latent, train)
        cache = None
        if train:
            cache = (
                conv1_cache, bn1_cache, mask1,
                conv2_cache, bn2_cache, mask2,
                conv3_cache, bn3_cache, mask3,
                x.shape[2], head_cache,
            )
        return ForwardResult(embedding=embedding, latent=latent, cache=cache)

    def backward(self, cache, d_embedding: np.ndarray,
                 d_latent: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Backpropagate embedding (and optional latent) gradients.

        Returns a dict keyed like :meth:`parameters`.
        """
        if cache is None:
            raise ValueError("backward requires a train-mode forward cache")
        (conv1_cache, bn1_cache, mask1,
         conv2_cache, bn2_cache, mask2,
         conv3_cache, bn3_cache, mask3,
         length, head_cache) = cache
        d_pool, head_grads = self.head.backward(d_embedding, head_cache)
        if d_latent is not None:
            d_pool = d_pool + d_latent
        d_r3 = global_avg_pool_backward(d_pool, length)
        d_n3 = relu_backward(d_r3, mask3)
        d_a3, bn3_grads = self.bn3.backward(d_n3, bn3_cache)
        d_r2, conv3_grads = self.conv3.backward(d_a3, conv3_cache)
        d_n2 = relu_backward(d_r2, mask2)
        d_a2, bn2_grads = self.bn2.backward(d_n2, bn2_cache)
        d_r1, conv2_grads = self.conv2.backward(d_a2, conv2_cache)
        d_n1 = relu_backward(d_r1, mask1)
        d_a1, bn1_grads = self.bn1.backward(d_n1, bn1_cache)
        _, conv1_grads = self.conv1.backward(d_a1, conv1_cache)
        return {
            "conv1.weight": conv1_grads["weight"], "conv1.bias": conv1_grads["bias"],
            "bn1.gamma": bn1_grads["gamma"], "bn1.beta": bn1_grads["beta"],
            "conv2.weight": conv2_grads["weight"], "conv2.bias": conv2_grads["bias"],
            "bn2.gamma": bn2_grads["gamma"], "bn2.beta": bn2_grads["beta"],
            "conv3.weight": conv3_grads["weight"], "conv3.bias": conv3_grads["bias"],
            "bn3.gamma": bn3_grads["gamma"], "bn3.beta": bn3_grads["beta"],
            "head.weight": head_grads["weight"], "head.bias": head_grads["bias"],
        }

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable parameters in a stable order (views, not copies)."""
        return {
            "conv1.weight": self.conv1.weight, "conv1.bias": self.conv1.bias,
            "bn1.gamma": self.bn1.gamma, "bn1.beta": self.bn1.beta,
            "conv2.weight": self.conv2.weight, "conv2.bias": self.conv2.bias,
            "bn2.gamma": self.bn2.gamma, "bn2.beta": self.bn2.beta,
            "conv3.weight": self.conv3.weight, "conv3.bias": self.conv3.bias,
            "bn3.gamma": self.bn3.gamma, "bn3.beta": self.bn3.beta,
            "head.weight": self.head.weight, "head.bias": self.head.bias,
        }

    def head_parameters(self) -> dict[str, np.ndarray]:
        return {"head.weight": self.head.weight, "head.bias": self.head.bias}

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters plus running statistics, in checkpoint order."""
        out = {}
        for i, (conv, bn) in enumerate(
            [(self.conv1, self.bn1), (self.conv2, self.bn2), (self.conv3, self.bn3)],
            start=1,
        ):
            out[f"conv{i}.weight"] = conv.weight
            out[f"conv{i}.bias"] = conv.bias
            out[f"bn{i}.gamma"] = bn.gamma
            out[f"bn{i}.beta"] = bn.beta
            out[f"bn{i}.running_mean"] = bn.running_mean
            out[f"bn{i}.running_var"] = bn.running_var
        out["head.weight"] = self.head.weight
        out["head.bias"] = self.head.bias
        return out

    def clone(self) -> "EncoderModel":
        """Deep copy (parameters and running statistics)."""
        import copy

        return copy.deepcopy(self)


@dataclass
class AdamW:
    """Adam with decoupled weight decay.

    The decay term is applied directly to the parameters, outside the
    moment estimates, so a zero gradient with positive decay still
    shrinks a parameter toward zero.
    """

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("decay rates must lie in [0, 1)")

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads`` (matching keys required)."""
        if set(params) != set(grads):
            missing = set(params) ^ set(grads)
            raise ValueError(f"parameter/gradient key mismatch: {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, param in params.items():
            grad = grads[name]
            if grad.shape != param.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if name not in self.moments:
                self.moments[name] = (np.zeros_like(param), np.zeros_like(param))
            m, v = self.moments[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad**2
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay != 0.0:
                update = update + self.weight_decay * param
            param -= self.lr * update


def save_encoder(path, model: EncoderModel) -> None:
    """Serialize an encoder checkpoint (little-endian float64 payload)."""
    from .cubeio import open_binary

    with open_binary(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _CHECKPOINT_VERSION, model.band_count))
        for arr in model.state_arrays().values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_encoder(path) -> EncoderModel:
    """Read a checkpoint written by :func:`save_encoder`."""
    from .cubeio import open_binary

    with open_binary(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not an encoder checkpoint")
    version, band_count = struct.unpack_from("<II", raw, 4)
    if version != _CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    if band_count < KERNEL_SIZES[0]:
        raise DataFormatError(f"{path}: implausible band count {band_count}")
    model = EncoderModel.initialize(band_count, seed=0)
    offset = 12
    for name, arr in model.state_arrays().items():
        nbytes = arr.size * 8
        if offset + nbytes > len(raw):
            raise DataFormatError(f"{path}: truncated checkpoint at {name!r}")
        values = np.frombuffer(raw, dtype="<f8", count=arr.size, offset=offset)
        if not np.all(np.isfinite(values)):
            raise DataFormatError(f"{path}: non-finite values in {name!r}")
        arr[...] = values.reshape(arr.shape)
        offset += nbytes
    if offset != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return model
