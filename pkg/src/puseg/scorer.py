"""Per-pixel foreground scorer: hand-crafted features plus a small MLP.

The scorer maps each pixel to a logit; the foreground probability is the
logistic of that logit.  Gradients are exact reverse-mode derivatives,
so the training loop can be verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .seqdata import Frame

FEATURE_DIM = 8
HIDDEN_DIM = 32
LOGIT_CLAMP = 40.0

# window sizes for the local mean / std features
_WINDOWS = (3, 9)


def extract_features(frame: Frame) -> np.ndarray:
    """Per-pixel feature matrix of shape (H*W, 8), row-major pixel order.

    Features: intensity, local mean and std at windows 3 and 9 (mirror
    padding at the borders), central-difference gradient magnitude, and
    normalized coordinates x/W, y/H.
    """
    img = np.asarray(frame.intensities, dtype=np.float64)
    h, w = img.shape
    cols = [img]
    for size in _WINDOWS:
        mean = ndimage.uniform_filter(img, size=size, mode="mirror")
        sq_mean = ndimage.uniform_filter(img * img, size=size, mode="mirror")
        var = np.maximum(sq_mean - mean * mean, 0.0)
        cols.extend([mean, np.sqrt(var)])
    padded = np.pad(img, 1, mode="reflect") if min(h, w) > 1 else np.pad(img, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    cols.append(np.hypot(gx, gy))
    ys, xs = np.mgrid[0:h, 0:w]
    cols.append(xs / w)
    cols.append(ys / h)
    return np.stack([c.ravel() for c in cols], axis=1)


@dataclass
class ScorerModel:
    """Weights of the 8 -> 32 -> 32 -> 1 rectifier network."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float

    def copy(self) -> "ScorerModel":
        return ScorerModel(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
            self.w3.copy(), float(self.b3),
        )


@dataclass
class GradientBuffer:
    """Per-parameter gradient accumulator, same shapes as :class:`ScorerModel`."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float


def param_items(model: ScorerModel | GradientBuffer):
    """(name, value) pairs in a fixed order."""
    return [(name, getattr(model, name)) for name in ("w1", "b1", "w2", "b2", "w3", "b3")]


def init_model(seed: int, pi_init: float = 0.01) -> ScorerModel:
    """He-scaled weights; the output bias is set so an all-zero hidden layer
    would predict probability ``pi_init``."""
    if not 0.0 < pi_init < 1.0:
        raise ValueError("pi_init must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / FEATURE_DIM), size=(FEATURE_DIM, HIDDEN_DIM))
    w2 = rng.normal(0.0, np.sqrt(2.0 / HIDDEN_DIM), size=(HIDDEN_DIM, HIDDEN_DIM))
    w3 = rng.normal(0.0, np.sqrt(2.0 / HIDDEN_DIM), size=(HIDDEN_DIM,))
    b3 = -np.log((1.0 - pi_init) / pi_init)
    return ScorerModel(w1, np.zeros(HIDDEN_DIM), w2, np.zeros(HIDDEN_DIM), w3, float(b3))


def forward_cached(model: ScorerModel, x: np.ndarray):
    pre1 = x @ model.w1 + model.b1
    h1 = np.maximum(pre1, 0.0)
    pre2 = h1 @ model.w2 + model.b2
    h2 = np.maximum(pre2, 0.0)
    logits = h2 @ model.w3 + model.b3
    return logits, (x, pre1, h1, pre2, h2)


def forward(model: ScorerModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and probabilities for a feature batch of shape (n, d).

    The logit is clamped to +/-40 before the logistic so probabilities
    never over/underflow.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    logits, _ = forward_cached(model, x)
    probs = expit(np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))
    return logits, probs


def predict_probs(model: ScorerModel, features: np.ndarray) -> np.ndarray:
    return forward(model, features)[1]


def backward(model: ScorerModel, x: np.ndarray, upstream: np.ndarray) -> GradientBuffer:
    """Accumulate dLoss/dparam for per-sample upstream dLoss/dlogit."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, cache = forward_cached(model, x)
    return backward_from_cache(model, cache, np.asarray(upstream, dtype=np.float64))


def backward_from_cache(model: ScorerModel, cache, upstream: np.ndarray) -> GradientBuffer:
    x, pre1, h1, pre2, h2 = cache
    dz = upstream
    gw3 = h2.T @ dz
    gb3 = float(dz.sum())
    dpre2 = np.where(pre2 > 0.0, dz[:, None] * model.w3[None, :], 0.0)
    gw2 = h1.T @ dpre2
    gb2 = dpre2.sum(axis=0)
    dpre1 = np.where(pre1 > 0.0, dpre2 @ model.w2.T, 0.0)
    gw1 = x.T @ dpre1
    gb1 = dpre1.sum(axis=0)
    return GradientBuffer(gw1, gb1, gw2, gb2, gw3, gb3)


def save_model(model: ScorerModel, path: str | Path) -> None:
    """Checkpoint with an architecture header; round-trips exactly."""
    np.savez(
        path,
        arch=np.array([FEATURE_DIM, HIDDEN_DIM, HIDDEN_DIM, 1]),
        w1=model.w1, b1=model.b1, w2=model.w2, b2=model.b2,
        w3=model.w3, b3=np.float64(model.b3),
    )


def load_model(path: str | Path) -> ScorerModel:
    with np.load(path) as data:
        arch = data["arch"]
        if tuple(arch) != (FEATURE_DIM, HIDDEN_DIM, HIDDEN_DIM, 1):
            raise ValueError(f"unsupported architecture {arch.tolist()}")
        return ScorerModel(
            data["w1"], data["b1"], data["w2"], data["b2"],
            data["w3"], float(data["b3"]),
        )
