"""Supervised training and the three-step distillation pipeline.

Training minimizes cross-entropy between the tempered softmax of the
logits and the labels (hard one-hot or soft rows) with plain
momentum SGD.  Distillation: train a teacher at temperature T, read
its tempered probabilities back out as soft labels, train a second
network on those labels at the same T.  All randomness (init, shuffle)
derives from the config seed, so identical configs give byte-identical
networks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError, ShapeError, TrainingDivergedError
from .network import NUM_CLASSES, Architecture, Network, temperature_softmax


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    temperature: float = 1.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")


@dataclass
class SoftLabelSet:
    """Per-example probability rows produced by a teacher network."""

    rows: np.ndarray
    generation_temperature: float

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != NUM_CLASSES:
            raise ShapeError(f"soft labels must be (N, {NUM_CLASSES}), got {self.rows.shape}")
        if np.any(self.rows < 0) or np.any(self.rows > 1):
            raise InvalidInputError("soft label entries must lie in [0, 1]")
        if np.max(np.abs(self.rows.sum(axis=1) - 1.0)) > 1e-6:
            raise InvalidInputError("soft label rows must sum to 1")

    def __len__(self) -> int:
        return self.rows.shape[0]


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_train_accuracy: float | None = None
    final_test_accuracy: float | None = None
    wall_seconds: float = 0.0


class MomentumSGD:
    """v <- m v + g;  theta <- theta - lr v"""

    def __init__(self, net: Network, learning_rate: float, momentum: float):
        self.lr = learning_rate
        self.momentum = momentum
        self.velocity = {key: np.zeros_like(arr) for key, arr in net.param_items()}

    def step(self, net: Network) -> None:
        grads = dict(net.grad_items())
        for key, arr in net.param_items():
            v = self.velocity[key]
            v *= self.momentum
            v += grads[key]
            arr -= self.lr * v
        net.bump_version()


def one_hot(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy(logits: np.ndarray, targets: np.ndarray, temperature: float = 1.0) -> float:
    """Mean cross-entropy between the tempered softmax of ``logits`` and
    probability-row ``targets``, computed in log space for stability."""
    zt = np.asarray(logits, dtype=np.float64) / temperature
    zt = zt - zt.max(axis=-1, keepdims=True)
    log_probs = zt - np.log(np.exp(zt).sum(axis=-1, keepdims=True))
    return float(-(targets * log_probs).sum(axis=-1).mean())


def _as_target_rows(labels, n_examples: int, temperature: float) -> np.ndarray:
    if isinstance(labels, SoftLabelSet):
        if labels.generation_temperature != temperature:
            raise ConfigError(
                f"soft labels generated at T={labels.generation_temperature} "
                f"but training temperature is T={temperature}")
        rows = labels.rows
    else:
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise ShapeError(f"hard labels must be a 1-d class array, got shape {labels.shape}")
        rows = one_hot(labels)
    if rows.shape[0] != n_examples:
        raise ShapeError(f"label count {rows.shape[0]} does not match image count {n_examples}")
    return rows


def train(arch: Architecture, images: np.ndarray, labels, cfg: TrainConfig,
          test_images: np.ndarray | None = None, test_labels: np.ndarray | None = None,
          log: bool = False) -> tuple[Network, TrainReport]:
    """Train a fresh network of ``arch`` on (images, labels).

    ``labels`` is either an integer class vector or a SoftLabelSet whose
    generation temperature must equal ``cfg.temperature``.  The returned
    network records ``cfg.temperature`` as its training temperature.
    """
    cfg.validate()
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    targets = _as_target_rows(labels, n, cfg.temperature)

    start = time.time()
    net = Network(arch, seed=cfg.rng_seed, training_temperature=cfg.temperature)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed).spawn(1)[0])
    opt = MomentumSGD(net, cfg.learning_rate, cfg.momentum)
    report = TrainReport()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            xb, yb = images[batch], targets[batch]
            fr = net.forward(xb, temperature=cfg.temperature)
            loss = cross_entropy(fr.logits, yb, cfg.temperature)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch + 1)
            epoch_loss += loss * len(batch)
            # fused CE+softmax gradient: dL/dz = (p - y) / (T * B)
            dlogits = (fr.probs - yb) / (cfg.temperature * len(batch))
            net.zero_grads()
            net.backward_logits(fr.cache, dlogits)
            opt.step(net)
        report.epoch_losses.append(epoch_loss / n)
        if log:
            print(f"epoch {epoch + 1}/{cfg.epochs}  loss {report.epoch_losses[-1]:.4f}",
                  flush=True)

    hard = labels.rows.argmax(axis=1) if isinstance(labels, SoftLabelSet) else np.asarray(labels)
    report.final_train_accuracy = evaluate_accuracy(net, images, hard)
    if test_images is not None and test_labels is not None:
        report.final_test_accuracy = evaluate_accuracy(net, test_images, test_labels)
    report.wall_seconds = time.time() - start
    return net, report


def evaluate_accuracy(net: Network, images: np.ndarray, labels: np.ndarray,
                      batch_size: int = 512) -> float:
    """Fraction of examples whose argmax prediction matches the label."""
    labels = np.asarray(labels)
    correct = 0
    for lo in range(0, images.shape[0], batch_size):
        pred = net.logits(images[lo:lo + batch_size]).argmax(axis=-1)
        correct += int((pred == labels[lo:lo + batch_size]).sum())
    return correct / images.shape[0]


def gen_soft_labels(teacher: Network, images: np.ndarray,
                    batch_size: int = 512) -> SoftLabelSet:
    """Teacher's tempered probabilities on each image, at the temperature
    the teacher was trained with.  Pure function of (teacher, images)."""
    rows = np.empty((images.shape[0], NUM_CLASSES))
    t = teacher.training_temperature
    for lo in range(0, images.shape[0], batch_size):
        z = teacher.logits(images[lo:lo + batch_size])
        rows[lo:lo + z.shape[0]] = temperature_softmax(z, t)
    return SoftLabelSet(rows=rows, generation_temperature=t)


def distill(arch: Architecture, images: np.ndarray, soft: SoftLabelSet, cfg: TrainConfig,
            test_images: np.ndarray | None = None, test_labels: np.ndarray | None = None,
            log: bool = False) -> tuple[Network, TrainReport]:
    """Train a second network on teacher soft labels at the same temperature.

    Classification afterwards happens at temperature 1 (``Network.classify``).
    """
    if cfg.temperature != soft.generation_temperature:
        raise ConfigError(
            f"distillation temperature {cfg.temperature} must equal the soft-label "
            f"generation temperature {soft.generation_temperature}")
    return train(arch, images, soft, cfg, test_images, test_labels, log=log)
