"""Deterministic synthetic sequences with exact ground truth.

A bright object (disc or ring) drifts over a darker background while its
radius breathes sinusoidally.  Gaussian intensity noise keeps the two
intensity distributions overlapping, so thresholding alone cannot solve
the task.  Every frame carries one point annotation placed on the object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seqdata import Frame, PointAnnotation, Sequence


@dataclass
class SynthConfig:
    shape: str = "disc"  # "disc" or "ring"
    n_frames: int = 40
    width: int = 64
    height: int = 64
    radius_base: float = 7.0
    radius_amp: float = 1.8
    radius_cycles: float = 1.0
    motion: str = "circular"  # "circular" or "linear"
    motion_extent: float = 6.0
    fg_mean: float = 0.65
    bg_mean: float = 0.35
    noise_std: float = 0.10
    ring_thickness: float = 3.0
    annotation_jitter: float = 1.0
    seed: int = 7

    def __post_init__(self) -> None:
        if self.shape not in ("disc", "ring"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.motion not in ("circular", "linear"):
            raise ValueError(f"unknown motion {self.motion!r}")
        if self.n_frames < 1 or self.width < 8 or self.height < 8:
            raise ValueError("sequence too small")
        gap = abs(self.fg_mean - self.bg_mean)
        if self.noise_std < 0.3 * gap:
            raise ValueError("noise_std must be at least 0.3x the intensity gap")
        reach = self.motion_extent + self.radius_base + self.radius_amp
        if reach >= min(self.width, self.height) / 2.0 - 1.0:
            raise ValueError("object would leave the frame")


def _center(cfg: SynthConfig, t: int) -> tuple[float, float]:
    cx, cy = cfg.width / 2.0, cfg.height / 2.0
    phase = 2.0 * np.pi * t / cfg.n_frames
    if cfg.motion == "circular":
        return cx + cfg.motion_extent * np.cos(phase), cy + cfg.motion_extent * np.sin(phase)
    # linear: sweep horizontally and back
    frac = t / max(cfg.n_frames - 1, 1)
    return cx + cfg.motion_extent * (2.0 * frac - 1.0), cy


def _radius(cfg: SynthConfig, t: int) -> float:
    return cfg.radius_base + cfg.radius_amp * np.sin(
        2.0 * np.pi * cfg.radius_cycles * t / cfg.n_frames
    )


def generate(cfg: SynthConfig) -> Sequence:
    """Build the sequence: ground-truth masks, noisy 8-bit intensities and
    one jittered annotation per frame (always inside the object)."""
    ys, xs = np.mgrid[0 : cfg.height, 0 : cfg.width]
    frames = []
    for t in range(cfg.n_frames):
        rng = np.random.default_rng([cfg.seed, t])
        cx, cy = _center(cfg, t)
        radius = _radius(cfg, t)
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        if cfg.shape == "disc":
            gt = d2 <= radius * radius
        else:
            inner = max(radius - cfg.ring_thickness, 1.0)
            gt = (d2 <= radius * radius) & (d2 >= inner * inner)

        img = np.where(gt, cfg.fg_mean, cfg.bg_mean) + rng.normal(
            0.0, cfg.noise_std, size=gt.shape
        )
        img = np.clip(img, 0.0, 1.0)
        # quantize to the 8-bit grid so disk round-trips are exact
        img = np.rint(img * 255.0) / 255.0

        if cfg.shape == "disc":
            target = np.array([cx, cy])
        else:
            mid = radius - cfg.ring_thickness / 2.0
            target = np.array([cx + mid, cy])
        point = target + rng.normal(0.0, cfg.annotation_jitter, size=2)
        ax, ay = int(np.clip(np.rint(point[0]), 0, cfg.width - 1)), int(
            np.clip(np.rint(point[1]), 0, cfg.height - 1)
        )
        if not gt[ay, ax]:  # snap to the nearest object pixel
            on_y, on_x = np.nonzero(gt)
            nearest = np.argmin((on_x - ax) ** 2 + (on_y - ay) ** 2)
            ax, ay = int(on_x[nearest]), int(on_y[nearest])

        frames.append(Frame(img, [PointAnnotation(t, ax, ay)], gt))
    return Sequence(frames)


def true_priors(seq: Sequence) -> np.ndarray:
    """Per-frame fraction of ground-truth foreground pixels."""
    if not seq.has_gt():
        raise ValueError("sequence has no ground-truth masks")
    return np.array([float(f.gt_mask.mean()) for f in seq.frames])
