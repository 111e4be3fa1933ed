"""Targeted L0 pixel-saturation attacks.

Three modes, all greedy loops that saturate a few pixels per iteration
to 0 or 1 until the image classifies as the target:

* ``original-pair``: picks the pixel pair maximizing -alpha*beta over
  pairs with alpha > 0 and beta < 0, where alpha sums the logit-space
  target gradients of the pair and beta the pair's remaining logit
  mass change.
* ``original-pair-softmax``: the same pair rule with the Jacobian taken
  on the softmax output at temperature 1.
* ``modified-single``: picks the single pixel maximizing
  2*d(tempered softmax target)/dx_p - sum_j d(tempered softmax j)/dx_p,
  with the softmax inputs divided by the attack temperature so the
  gradients of a confidence-inflated network stay usable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError, ShapeError
from .network import NUM_CLASSES, Network

ATTACK_MODES = ("original-pair", "original-pair-softmax", "modified-single")

DEFAULT_MAX_PIXELS = 112


@dataclass
class AttackConfig:
    mode: str
    target: int
    max_pixels: int = DEFAULT_MAX_PIXELS
    # tempered-softmax divisor for modified-single; None means "use the
    # attacked network's training temperature"
    attack_temperature: float | None = None
    record_trace: bool = False

    def validate(self) -> None:
        if self.mode not in ATTACK_MODES:
            raise ConfigError(f"unknown attack mode {self.mode!r}")
        if not 0 <= self.target < NUM_CLASSES:
            raise ConfigError(f"target class must be in 0..{NUM_CLASSES - 1}, got {self.target}")
        if self.max_pixels < 1:
            raise ConfigError("max_pixels must be >= 1")
        if self.attack_temperature is not None and not self.attack_temperature > 0:
            raise ConfigError("attack_temperature must be positive")


@dataclass
class AttackResult:
    success: bool
    adversarial: np.ndarray
    pixels_changed: int
    iterations: int
    final_class: int
    trace: list = field(default_factory=list)


_TRIU_CACHE: dict[int, np.ndarray] = {}


def _upper_triangle(n: int) -> np.ndarray:
    # reused across pair-scan calls; read-only
    if n not in _TRIU_CACHE:
        _TRIU_CACHE[n] = np.triu(np.ones((n, n), dtype=bool), k=1)
    return _TRIU_CACHE[n]


def _domain_mask(domain, n: int) -> np.ndarray:
    if isinstance(domain, np.ndarray) and domain.dtype == bool:
        if domain.shape != (n,):
            raise ShapeError(f"domain mask must have shape ({n},), got {domain.shape}")
        return domain
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter(domain, dtype=np.int64)
    mask[idx] = True
    return mask


def select_pair(jacobian: np.ndarray, target: int, domain):
    """Best pixel pair under the product criterion, or None.

    Over unordered pairs {p, q} of domain pixels with
    alpha = dZ_t/dx_p + dZ_t/dx_q > 0 and
    beta = (column sums of the pair) - alpha < 0,
    returns the (p, q, alpha, beta) maximizing -alpha*beta.  Ties break
    toward the smallest p, then q.
    """
    j = np.asarray(jacobian, dtype=np.float64)
    if j.ndim != 2 or j.shape[0] != NUM_CLASSES:
        raise ShapeError(f"jacobian must be ({NUM_CLASSES}, n), got {j.shape}")
    n = j.shape[1]
    mask = _domain_mask(domain, n)
    gt = j[target]
    colsum = j.sum(axis=0)

    alpha = gt[:, None] + gt[None, :]
    beta = (colsum[:, None] + colsum[None, :]) - alpha
    valid = (alpha > 0) & (beta < 0) & mask[:, None] & mask[None, :]
    valid &= _upper_triangle(n)
    if not valid.any():
        return None
    score = np.where(valid, -alpha * beta, -np.inf)
    flat = int(np.argmax(score))            # first occurrence: smallest (p, q)
    p, q = divmod(flat, n)
    return p, q, float(alpha[p, q]), float(beta[p, q])


def select_single(jacobian: np.ndarray, target: int, domain):
    """Best single pixel under the 2*target - column-sum score, or None.

    ``jacobian`` must be in softmax space, where the column sums vanish
    and the score reduces to twice the target row.  Only strictly
    positive scores qualify; ties break toward the smallest index.
    """
    j = np.asarray(jacobian, dtype=np.float64)
    if j.ndim != 2 or j.shape[0] != NUM_CLASSES:
        raise ShapeError(f"jacobian must be ({NUM_CLASSES}, n), got {j.shape}")
    mask = _domain_mask(domain, j.shape[1])
    score = 2.0 * j[target] - j.sum(axis=0)
    score = np.where(mask, score, -np.inf)
    best = int(np.argmax(score))
    if not score[best] > 0:
        return None
    return best


def saturate(x: np.ndarray, pixels, jacobian: np.ndarray, target: int) -> np.ndarray:
    """Copy of ``x`` with each selected pixel pushed to an endpoint:
    1 if the target-row gradient at that pixel is positive, else 0."""
    x = np.asarray(x, dtype=np.float64)
    out = x.copy()
    for p in pixels:
        out[p] = 1.0 if jacobian[target, p] > 0 else 0.0
    return out


def _mode_jacobian(net: Network, x: np.ndarray, mode: str, attack_t: float) -> np.ndarray:
    if mode == "original-pair":
        return net.input_jacobian(x, space="logits")
    if mode == "original-pair-softmax":
        return net.input_jacobian(x, space="softmax", temperature=1.0)
    return net.input_jacobian(x, space="softmax", temperature=attack_t)


def run_attack(net: Network, x: np.ndarray, cfg: AttackConfig) -> AttackResult:
    """Greedy saturation loop.

    Each iteration takes the mode's Jacobian at the current image, selects
    a pair or single pixel, saturates it, removes it from the search
    domain, and reclassifies at temperature 1.  Stops on success, when the
    next modification would exceed the pixel budget, or when selection
    finds no qualifying pixel.  Failure is a normal result, not an error.
    """
    cfg.validate()
    x0 = np.asarray(x, dtype=np.float64).ravel().copy()
    if x0.size != net.input_size:
        raise ShapeError(f"image size {x0.size} does not match network input {net.input_size}")
    attack_t = cfg.attack_temperature if cfg.attack_temperature is not None \
        else net.training_temperature

    xa = x0.copy()
    domain = np.ones(x0.size, dtype=bool)
    trace: list = []
    changed = 0
    iterations = 0

    current = net.classify(xa)
    while current != cfg.target:
        if not domain.any():
            break
        j = _mode_jacobian(net, xa, cfg.mode, attack_t)
        if cfg.mode == "modified-single":
            sel = select_single(j, cfg.target, domain)
            if sel is None:
                break
            pixels = (sel,)
            detail = {"pixel": sel}
        else:
            sel = select_pair(j, cfg.target, domain)
            if sel is None:
                break
            p, q, alpha, beta = sel
            pixels = (p, q)
            detail = {"pixels": (p, q), "alpha": alpha, "beta": beta}

        new_x = saturate(xa, pixels, j, cfg.target)
        would_change = int(sum(new_x[p] != x0[p] for p in pixels))
        if changed + would_change > cfg.max_pixels:
            break
        xa = new_x
        domain[list(pixels)] = False
        changed += would_change
        iterations += 1
        if cfg.record_trace:
            trace.append(detail)
        current = net.classify(xa)

    final_class = net.classify(xa)
    pixels_changed = int(np.sum(xa != x0))
    return AttackResult(success=final_class == cfg.target, adversarial=xa,
                        pixels_changed=pixels_changed, iterations=iterations,
                        final_class=final_class,
                        trace=trace if cfg.record_trace else [])


def logit_stats(net: Network, images: np.ndarray,
                batch_size: int = 512) -> tuple[float, float]:
    """Population mean and standard deviation of the per-image L1 norm of
    the logits."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 1:
        images = images[None, :]
    if images.shape[0] == 0:
        raise InvalidInputError("logit_stats needs at least one image")
    norms = np.empty(images.shape[0])
    for lo in range(0, images.shape[0], batch_size):
        z = net.logits(images[lo:lo + batch_size])
        norms[lo:lo + z.shape[0]] = np.abs(z).sum(axis=-1)
    return float(norms.mean()), float(norms.std())
