"""Feed-forward classifier networks with temperature softmax.

A ``Network`` owns an ordered layer list plus its parameters, produces a
10-class logits vector, and exposes reverse-mode passes for both
parameter gradients and input Jacobians.  The tempered softmax divides
logits by a temperature before normalizing; classification always takes
the argmax, which is temperature-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CacheError, InvalidInputError, ShapeError
from .layers import (Layer, LayerSpec, build_layer, conv2d, dense, flatten,
                     maxpool2x2, relu)

NUM_CLASSES = 10

JACOBIAN_SPACES = ("logits", "softmax")


def temperature_softmax(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax of ``z / temperature`` along the last axis.

    Numerically stabilized by max-subtraction; dividing first means
    ``temperature_softmax(z, t)`` equals ``temperature_softmax(z / t, 1)``
    bit for bit.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax input contains non-finite values")
    if not temperature > 0:
        raise InvalidInputError(f"temperature must be positive, got {temperature}")
    zt = z / temperature
    zt = zt - zt.max(axis=-1, keepdims=True)
    e = np.exp(zt)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Architecture:
    """Named layer stack with its expected input shape."""

    name: str
    input_shape: tuple[int, ...]
    specs: tuple[LayerSpec, ...]

    def validate(self) -> tuple[tuple[int, ...], ...]:
        """Propagate shapes through the stack; raises ShapeError on any
        mismatch or if the stack does not end in a 10-way output."""
        shapes = [self.input_shape]
        for spec in self.specs:
            layer = build_layer(spec)
            shapes.append(layer.out_shape(shapes[-1]))
        if shapes[-1] != (NUM_CLASSES,):
            raise ShapeError(f"architecture must end with {NUM_CLASSES} outputs, got {shapes[-1]}")
        return tuple(shapes)


def cnn9_profile() -> Architecture:
    """Nine-layer convolutional profile for 28x28 grayscale digits."""
    return Architecture(
        name="cnn9",
        input_shape=(1, 28, 28),
        specs=(
            conv2d(1, 32), relu(),
            conv2d(32, 32), relu(),
            maxpool2x2(),
            conv2d(32, 64), relu(),
            conv2d(64, 64), relu(),
            maxpool2x2(),
            flatten(),
            dense(1024, 200), relu(),
            dense(200, 200), relu(),
            dense(200, 10),
        ),
    )


def mlp_profile() -> Architecture:
    """Small fully-connected profile for fast CI runs."""
    return Architecture(
        name="mlp",
        input_shape=(784,),
        specs=(
            dense(784, 256), relu(),
            dense(256, 256), relu(),
            dense(256, 10),
        ),
    )


PROFILES = {"cnn9": cnn9_profile, "mlp": mlp_profile}


@dataclass
class ForwardCache:
    """Per-layer activations from one forward pass, tied to the network
    state that produced them."""

    net_id: int
    version: int
    batch: int
    temperature: float
    layer_caches: list = field(default_factory=list)
    probs: np.ndarray | None = None


@dataclass
class ForwardResult:
    logits: np.ndarray
    probs: np.ndarray
    cache: ForwardCache


class Network:
    """Layer stack with parameters and the temperature it was trained at."""

    def __init__(self, arch: Architecture, seed: int = 0,
                 training_temperature: float = 1.0):
        arch.validate()
        self.arch = arch
        self.layers: list[Layer] = [build_layer(s) for s in arch.specs]
        self.training_temperature = float(training_temperature)
        self.rng_seed = int(seed)
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init_params(rng)
        self._version = 0

    # -- parameter plumbing -------------------------------------------------

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.arch.input_shape

    @property
    def input_size(self) -> int:
        return int(np.prod(self.arch.input_shape))

    def param_items(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params():
                yield (i, name), arr

    def grad_items(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads():
                yield (i, name), arr

    def num_params(self) -> int:
        return sum(arr.size for _, arr in self.param_items())

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def bump_version(self) -> None:
        """Invalidate outstanding forward caches after a parameter update."""
        self._version += 1

    # -- forward ------------------------------------------------------------

    def _shape_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape or x.shape == (self.input_size,):
            x = x.reshape((1,) + self.input_shape)
        elif x.ndim >= 2 and x.shape[1:] == self.input_shape:
            pass
        elif x.ndim == 2 and x.shape[1] == self.input_size:
            x = x.reshape((x.shape[0],) + self.input_shape)
        else:
            raise ShapeError(
                f"input shape {x.shape} does not match network input {self.input_shape}")
        return x

    def forward(self, x: np.ndarray, temperature: float = 1.0) -> ForwardResult:
        """Run the stack; returns logits, tempered probabilities, and the
        activation cache needed for backward passes."""
        x = self._shape_input(x)
        cache = ForwardCache(net_id=id(self), version=self._version,
                             batch=x.shape[0], temperature=float(temperature))
        out = x
        for layer in self.layers:
            out, c = layer.forward(out)
            cache.layer_caches.append(c)
        probs = temperature_softmax(out, temperature)
        cache.probs = probs
        return ForwardResult(logits=out, probs=probs, cache=cache)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, temperature=1.0).logits

    def classify(self, x: np.ndarray):
        """Predicted class indices (argmax of the output distribution;
        invariant to temperature)."""
        z = self.logits(x)
        pred = z.argmax(axis=-1)
        return int(pred[0]) if pred.size == 1 else pred

    # -- backward -----------------------------------------------------------

    def _check_cache(self, cache: ForwardCache) -> None:
        if cache.net_id != id(self):
            raise CacheError("forward cache belongs to a different network")
        if cache.version != self._version:
            raise CacheError("forward cache is stale (parameters changed since forward)")

    def backward_logits(self, cache: ForwardCache, dlogits: np.ndarray) -> None:
        """Accumulate parameter gradients from an upstream gradient on the
        logits.  Gradients land in each layer's grad buffers."""
        self._check_cache(cache)
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.shape != (cache.batch, NUM_CLASSES):
            raise ShapeError(f"upstream gradient shape {dlogits.shape} does not match "
                             f"cached batch ({cache.batch}, {NUM_CLASSES})")
        d = dlogits
        for layer, c in zip(reversed(self.layers), reversed(cache.layer_caches)):
            d = layer.backward(d, c)

    def backward_params(self, cache: ForwardCache, dprobs: np.ndarray) -> dict:
        """Parameter gradients for an upstream gradient on the tempered
        probabilities.  Returns {(layer_index, name): gradient array}."""
        self._check_cache(cache)
        dprobs = np.asarray(dprobs, dtype=np.float64)
        p = cache.probs
        if dprobs.shape != p.shape:
            raise ShapeError(f"upstream gradient shape {dprobs.shape} does not match "
                             f"probability shape {p.shape}")
        # chain through the tempered softmax: dz = (diag(p) - p p^T) / T @ dp
        inner = (dprobs * p).sum(axis=-1, keepdims=True)
        dlogits = p * (dprobs - inner) / cache.temperature
        self.zero_grads()
        self.backward_logits(cache, dlogits)
        return {key: arr.copy() for key, arr in self.grad_items()}

    def backward_input(self, cache: ForwardCache, dlogits: np.ndarray) -> np.ndarray:
        """Input gradients for a stack of upstream logit gradients.

        ``dlogits`` is (S, 10); the cache must hold a single-example
        forward pass (or S must equal the cached batch).  Returns (S, n)
        with n the flattened input size.
        """
        self._check_cache(cache)
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.ndim != 2 or dlogits.shape[1] != NUM_CLASSES:
            raise ShapeError(f"seed stack must be (S, {NUM_CLASSES}), got {dlogits.shape}")
        if cache.batch not in (1, dlogits.shape[0]):
            raise CacheError("cache batch does not match seed stack and is not 1")
        d = dlogits
        for layer, c in zip(reversed(self.layers), reversed(cache.layer_caches)):
            d = layer.backward_input(d, c)
        return d.reshape(dlogits.shape[0], -1)

    def input_jacobian(self, x: np.ndarray, space: str = "logits",
                       temperature: float = 1.0) -> np.ndarray:
        """(10, n) matrix of output derivatives w.r.t. each input pixel.

        ``space`` selects the logits themselves or the tempered softmax of
        the logits (softmax of z / temperature).
        """
        if space not in JACOBIAN_SPACES:
            raise InvalidInputError(f"unknown jacobian space {space!r}")
        x = self._shape_input(x)
        if x.shape[0] != 1:
            raise ShapeError("input_jacobian expects a single example")
        fr = self.forward(x, temperature=temperature)
        seeds = np.eye(NUM_CLASSES)
        jz = self.backward_input(fr.cache, seeds)
        if space == "logits":
            return jz
        p = fr.probs[0]
        chain = (np.diag(p) - np.outer(p, p)) / temperature
        return chain @ jz
