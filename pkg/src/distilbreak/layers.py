"""Network layers with explicit forward/backward passes.

Five layer kinds: dense, conv2d (valid padding, stride 1), maxpool2x2,
relu, flatten.  Every layer computes

    forward(x)            -> (y, cache)
    backward(dy, cache)   -> dx, accumulating parameter gradients in-place
    backward_input(dy, cache) -> dx only (no parameter gradients)

All arrays are float64 and carry a leading batch dimension.
``backward_input`` accepts an upstream gradient whose leading dimension
differs from the cached batch (the cache must then be for a single
example); this lets one cached forward pass serve a whole stack of
output seeds when building input Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

LAYER_KINDS = ("dense", "conv2d", "maxpool2x2", "relu", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    Size fields are only meaningful for the kinds that use them:
    dense uses (in_features, out_features); conv2d uses
    (in_channels, out_channels, kernel_h, kernel_w).
    """

    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0

    def to_string(self) -> str:
        if self.kind == "dense":
            return f"dense:{self.in_features}:{self.out_features}"
        if self.kind == "conv2d":
            return (f"conv2d:{self.in_channels}:{self.out_channels}"
                    f":{self.kernel_h}:{self.kernel_w}")
        return self.kind

    @staticmethod
    def from_string(text: str) -> "LayerSpec":
        parts = text.split(":")
        kind = parts[0]
        if kind == "dense" and len(parts) == 3:
            return dense(int(parts[1]), int(parts[2]))
        if kind == "conv2d" and len(parts) == 5:
            return conv2d(int(parts[1]), int(parts[2]), int(parts[3]), int(parts[4]))
        if kind in ("maxpool2x2", "relu", "flatten") and len(parts) == 1:
            return LayerSpec(kind)
        raise ShapeError(f"unparseable layer spec {text!r}")


def dense(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def conv2d(in_channels: int, out_channels: int, kernel_h: int = 3, kernel_w: int = 3) -> LayerSpec:
    return LayerSpec("conv2d", in_channels=in_channels, out_channels=out_channels,
                     kernel_h=kernel_h, kernel_w=kernel_w)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool2x2() -> LayerSpec:
    return LayerSpec("maxpool2x2")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(B, C, H, W) -> (B, OH, OW, C*kh*kw) patch matrix for valid convolution."""
    b, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, shape=(b, oh, ow, c, kh, kw), strides=(s0, s2, s3, s1, s2, s3))
    return windows.reshape(b, oh, ow, c * kh * kw)


class Layer:
    """Base class; parameter-free layers inherit the empty param interface."""

    spec: LayerSpec

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache):
        raise NotImplementedError

    def backward_input(self, dy: np.ndarray, cache):
        # default: layers without parameters share one backward implementation
        return self.backward(dy, cache)

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def params(self) -> list[tuple[str, np.ndarray]]:
        return []

    def grads(self) -> list[tuple[str, np.ndarray]]:
        return []

    def zero_grads(self) -> None:
        for _, g in self.grads():
            g[...] = 0.0


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                  fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Dense(Layer):
    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.w = np.zeros((spec.in_features, spec.out_features))
        self.b = np.zeros(spec.out_features)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def init_params(self, rng: np.random.Generator) -> None:
        self.w = _uniform_init(rng, self.w.shape, self.spec.in_features, self.spec.out_features)
        self.b = np.zeros(self.spec.out_features)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def out_shape(self, in_shape):
        if in_shape != (self.spec.in_features,):
            raise ShapeError(f"dense layer expects {(self.spec.in_features,)}, got {in_shape}")
        return (self.spec.out_features,)

    def forward(self, x):
        return x @ self.w + self.b, x

    def backward(self, dy, cache):
        x = cache
        self.gw += x.T @ dy
        self.gb += dy.sum(axis=0)
        return dy @ self.w.T

    def backward_input(self, dy, cache):
        return dy @ self.w.T

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [("w", self.gw), ("b", self.gb)]


class Conv2D(Layer):
    """Valid convolution, stride 1.  Weights are (out_ch, in_ch, kh, kw)."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        f, c, kh, kw = spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w
        self.w = np.zeros((f, c, kh, kw))
        self.b = np.zeros(f)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def init_params(self, rng):
        s = self.spec
        fan_in = s.in_channels * s.kernel_h * s.kernel_w
        fan_out = s.out_channels * s.kernel_h * s.kernel_w
        self.w = _uniform_init(rng, self.w.shape, fan_in, fan_out)
        self.b = np.zeros(s.out_channels)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def out_shape(self, in_shape):
        s = self.spec
        if len(in_shape) != 3 or in_shape[0] != s.in_channels:
            raise ShapeError(f"conv2d expects ({s.in_channels}, H, W), got {in_shape}")
        c, h, w = in_shape
        oh, ow = h - s.kernel_h + 1, w - s.kernel_w + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv2d kernel {s.kernel_h}x{s.kernel_w} larger than input {h}x{w}")
        return (s.out_channels, oh, ow)

    def forward(self, x):
        s = self.spec
        cols = _im2col(x, s.kernel_h, s.kernel_w)              # (B, OH, OW, K)
        wmat = self.w.reshape(s.out_channels, -1).T            # (K, F)
        y = cols @ wmat + self.b                               # (B, OH, OW, F)
        return np.ascontiguousarray(y.transpose(0, 3, 1, 2)), cols

    def backward(self, dy, cache):
        s = self.spec
        cols = cache
        k = cols.shape[-1]
        dyt = dy.transpose(0, 2, 3, 1)                         # (B, OH, OW, F)
        flat_cols = cols.reshape(-1, k)
        flat_dy = dyt.reshape(-1, s.out_channels)
        self.gw += (flat_cols.T @ flat_dy).T.reshape(self.w.shape)
        self.gb += flat_dy.sum(axis=0)
        return self._input_grad(dyt)

    def backward_input(self, dy, cache):
        return self._input_grad(dy.transpose(0, 2, 3, 1))

    def _input_grad(self, dyt):
        # full correlation of the upstream gradient with flipped kernels
        s = self.spec
        kh, kw = s.kernel_h, s.kernel_w
        pad = np.pad(dyt.transpose(0, 3, 1, 2), ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        cols = _im2col(pad, kh, kw)                            # (B, H, W, F*kh*kw)
        wflip = self.w[:, :, ::-1, ::-1].transpose(0, 2, 3, 1) # (F, kh, kw, C)
        wback = np.ascontiguousarray(wflip).reshape(-1, s.in_channels)
        dx = cols @ wback                                      # (B, H, W, C)
        return np.ascontiguousarray(dx.transpose(0, 3, 1, 2))

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [("w", self.gw), ("b", self.gb)]


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2.  Gradient routes to the first (row-major)
    maximum in each window, so tied windows backpropagate deterministically."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2x2 expects (C, H, W), got {in_shape}")
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x):
        b, c, h, w = x.shape
        windows = (x.reshape(b, c, h // 2, 2, w // 2, 2)
                    .transpose(0, 1, 2, 4, 3, 5)
                    .reshape(b, c, h // 2, w // 2, 4))
        idx = windows.argmax(axis=-1)
        y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        return y, (idx, h, w)

    def backward(self, dy, cache):
        idx, h, w = cache
        b, c, oh, ow = dy.shape
        scattered = np.zeros((b, c, oh, ow, 4))
        np.put_along_axis(scattered,
                          np.broadcast_to(idx[..., None], (b, c, oh, ow, 1)),
                          dy[..., None], axis=-1)
        return (scattered.reshape(b, c, oh, ow, 2, 2)
                         .transpose(0, 1, 2, 4, 3, 5)
                         .reshape(b, c, h, w))


class ReLU(Layer):
    def __init__(self, spec: LayerSpec):
        self.spec = spec

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache):
        return dy * cache


class Flatten(Layer):
    def __init__(self, spec: LayerSpec):
        self.spec = spec

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape[1:]

    def backward(self, dy, cache):
        return dy.reshape((dy.shape[0],) + cache)


_LAYER_CLASSES = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool2x2": MaxPool2x2,
    "relu": ReLU,
    "flatten": Flatten,
}


def build_layer(spec: LayerSpec) -> Layer:
    if spec.kind not in _LAYER_CLASSES:
        raise ShapeError(f"unknown layer kind {spec.kind!r}")
    return _LAYER_CLASSES[spec.kind](spec)
