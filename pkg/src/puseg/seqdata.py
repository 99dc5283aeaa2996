"""Frame-sequence data model and its on-disk formats.

A sequence lives in a directory::

    root/
        frames/000.pgm ...      8-bit grayscale PGM (P5), zero-padded index
        annotations.csv         header ``frame,x,y``, one row per point
        masks/000.pgm ...       optional ground truth, 0=background 255=foreground

Intensities are kept as float64 in [0, 1] (value/255); masks as boolean
arrays.  Probability maps are written as 16-bit PGM scaled by 65535.
Pixels are indexed row-major: flat index = y * W + x.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FRAMES_DIR = "frames"
MASKS_DIR = "masks"
ANNOTATIONS_FILE = "annotations.csv"

DEFAULT_RADIUS_FRAC = 0.05


class SequenceLoadError(ValueError):
    """Raised when a sequence directory is missing pieces or inconsistent."""


@dataclass(frozen=True)
class PointAnnotation:
    """A single positive 2D point on one frame."""

    frame: int
    x: int
    y: int


@dataclass
class Frame:
    """One frame: intensities in [0, 1], its annotations, optional ground truth."""

    intensities: np.ndarray
    annotations: list[PointAnnotation] = field(default_factory=list)
    gt_mask: np.ndarray | None = None

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]


@dataclass
class Sequence:
    """An ordered list of equally sized frames."""

    frames: list[Frame]

    def __post_init__(self) -> None:
        if not self.frames:
            raise SequenceLoadError("a sequence needs at least one frame")
        h, w = self.frames[0].intensities.shape
        for i, frame in enumerate(self.frames):
            if frame.intensities.shape != (h, w):
                raise SequenceLoadError(
                    f"frame {i} is {frame.intensities.shape[::-1]}, expected {(w, h)}"
                )
            if frame.gt_mask is not None and frame.gt_mask.shape != (h, w):
                raise SequenceLoadError(f"gt mask of frame {i} does not match frame size")
            for ann in frame.annotations:
                if not (0 <= ann.x < w and 0 <= ann.y < h):
                    raise SequenceLoadError(
                        f"annotation ({ann.x},{ann.y}) outside {w}x{h} frame {i}"
                    )

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].intensities.shape[1]

    @property
    def height(self) -> int:
        return self.frames[0].intensities.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def has_gt(self) -> bool:
        return all(f.gt_mask is not None for f in self.frames)


@dataclass
class SampleSplit:
    """Per-frame positive / unlabeled pixel partitions (flat row-major indices)."""

    positives: list[np.ndarray]
    unlabeled: list[np.ndarray]


# ---------------------------------------------------------------------------
# PGM I/O.  Only the binary (P5) flavour, 8- or 16-bit.

def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise SequenceLoadError(f"{path}: not a binary PGM (P5) file")
    # header tokens: magic, width, height, maxval; '#' comments allowed
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raster.size != count:
        raise SequenceLoadError(f"{path}: truncated raster")
    return raster.reshape(height, width).astype(np.uint16 if maxval > 255 else np.uint8)


def _write_pgm(path: Path, values: np.ndarray, maxval: int) -> None:
    height, width = values.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    raw = values.astype(">u2" if maxval > 255 else "u1").tobytes()
    path.write_bytes(header + raw)


def _indexed_pgms(directory: Path) -> list[Path]:
    paths = []
    for p in sorted(directory.glob("*.pgm")):
        m = re.fullmatch(r"(\d+)", p.stem)
        if m is None:
            raise SequenceLoadError(f"{p}: frame filenames must be numeric")
        paths.append((int(m.group(1)), p))
    paths.sort(key=lambda ip: ip[0])
    return [p for _, p in paths]


# ---------------------------------------------------------------------------
# Sequence load / save.

def load_sequence(root: str | Path) -> Sequence:
    """Load and validate a sequence directory.

    Raises :class:`SequenceLoadError` on missing frames, mismatched
    dimensions or out-of-bounds annotations.
    """
    root = Path(root)
    frames_dir = root / FRAMES_DIR
    if not frames_dir.is_dir():
        raise SequenceLoadError(f"{root}: no '{FRAMES_DIR}' directory")
    frame_paths = _indexed_pgms(frames_dir)
    if not frame_paths:
        raise SequenceLoadError(f"{frames_dir}: no frames found")
    frames = [Frame(_read_pgm(p).astype(np.float64) / 255.0) for p in frame_paths]

    ann_path = root / ANNOTATIONS_FILE
    if not ann_path.is_file():
        raise SequenceLoadError(f"{root}: missing {ANNOTATIONS_FILE}")
    with open(ann_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ann = PointAnnotation(int(row["frame"]), int(row["x"]), int(row["y"]))
            if not 0 <= ann.frame < len(frames):
                raise SequenceLoadError(f"annotation on missing frame {ann.frame}")
            frames[ann.frame].annotations.append(ann)

    masks_dir = root / MASKS_DIR
    if masks_dir.is_dir():
        mask_paths = _indexed_pgms(masks_dir)
        if len(mask_paths) != len(frames):
            raise SequenceLoadError(
                f"{masks_dir}: {len(mask_paths)} masks for {len(frames)} frames"
            )
        for frame, p in zip(frames, mask_paths):
            frame.gt_mask = _read_pgm(p) > 127

    return Sequence(frames)


def save_sequence(seq: Sequence, root: str | Path) -> None:
    """Write frames, annotations and (if present) ground-truth masks."""
    root = Path(root)
    frames_dir = root / FRAMES_DIR
    frames_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        values = np.rint(np.clip(frame.intensities, 0.0, 1.0) * 255.0).astype(np.uint8)
        _write_pgm(frames_dir / f"{i:03d}.pgm", values, 255)
    with open(root / ANNOTATIONS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "x", "y"])
        for i, frame in enumerate(seq.frames):
            for ann in frame.annotations:
                writer.writerow([i, ann.x, ann.y])
    if seq.has_gt():
        masks = [f.gt_mask for f in seq.frames]
        save_masks(seq, masks, root / MASKS_DIR)


def save_masks(seq: Sequence, masks: list[np.ndarray], root: str | Path) -> None:
    """Write one binary PGM per frame; load-after-save is identity."""
    if len(masks) != seq.n_frames:
        raise ValueError(f"{len(masks)} masks for {seq.n_frames} frames")
    for i, mask in enumerate(masks):
        if mask.shape != (seq.height, seq.width):
            raise ValueError(f"mask {i} has shape {mask.shape[::-1]}")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i, mask in enumerate(masks):
        _write_pgm(root / f"{i:03d}.pgm", np.where(mask, 255, 0), 255)


def load_masks(root: str | Path) -> list[np.ndarray]:
    """Load all numbered binary masks from a directory, sorted by index."""
    root = Path(root)
    if not root.is_dir():
        raise SequenceLoadError(f"{root}: not a directory")
    paths = _indexed_pgms(root)
    if not paths:
        raise SequenceLoadError(f"{root}: no masks found")
    return [_read_pgm(p) > 127 for p in paths]


def save_prob_maps(maps: list[np.ndarray], root: str | Path) -> None:
    """Write per-frame probability maps as 16-bit PGM scaled by 65535."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i, pm in enumerate(maps):
        values = np.rint(np.clip(pm, 0.0, 1.0) * 65535.0).astype(np.uint16)
        _write_pgm(root / f"{i:03d}.pgm", values, 65535)


def load_prob_maps(root: str | Path) -> list[np.ndarray]:
    root = Path(root)
    return [_read_pgm(p).astype(np.float64) / 65535.0 for p in _indexed_pgms(root)]


# ---------------------------------------------------------------------------
# Positive / unlabeled split.

def annotation_radius(width: int, height: int, radius_frac: float) -> float:
    """Radius of the positive disc around each annotation point."""
    return radius_frac * max(width, height)


def positive_mask(
    frame: Frame, radius: float, width: int, height: int
) -> np.ndarray:
    """Boolean mask of pixels within ``radius`` of any annotation of the frame."""
    mask = np.zeros((height, width), dtype=bool)
    if not frame.annotations:
        return mask
    ys, xs = np.mgrid[0:height, 0:width]
    for ann in frame.annotations:
        d2 = (xs - ann.x) ** 2 + (ys - ann.y) ** 2
        mask |= d2 <= radius * radius
    return mask


def positives_from_annotations(
    seq: Sequence,
    radius_frac: float = DEFAULT_RADIUS_FRAC,
    unlabeled_all_pixels: bool = False,
) -> SampleSplit:
    """Split each frame into positive and unlabeled pixel index sets.

    Positives are the pixels whose centre lies within a closed disc of
    radius ``radius_frac * max(W, H)`` around any annotation of the frame.
    By default the unlabeled set is the complement of the positives; with
    ``unlabeled_all_pixels`` it is the entire frame.
    """
    if radius_frac <= 0:
        raise ValueError("radius_frac must be > 0")
    width, height = seq.width, seq.height
    radius = annotation_radius(width, height, radius_frac)
    positives, unlabeled = [], []
    all_idx = np.arange(width * height)
    for frame in seq.frames:
        mask = positive_mask(frame, radius, width, height).ravel()
        positives.append(all_idx[mask])
        unlabeled.append(all_idx if unlabeled_all_pixels else all_idx[~mask])
    return SampleSplit(positives, unlabeled)
