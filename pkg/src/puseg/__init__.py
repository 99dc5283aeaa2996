"""Point-supervised sequence segmentation.

Trains a per-pixel scorer from positive point annotations alone using a
non-negative positive/unlabeled risk, estimates the per-frame fraction of
positive pixels with an interval-constrained unscented Kalman filter, and
regularizes the result with shortest-path tracking over grid superpixels.
"""

from .seqdata import (
    Frame,
    PointAnnotation,
    SampleSplit,
    Sequence,
    load_sequence,
    positives_from_annotations,
    save_masks,
    save_sequence,
)
from .purisk import RiskComponents, pn_risk, pu_risk
from .ssnnpu import PipelineConfig, run_full_pipeline
from .synth import SynthConfig, generate, true_priors

__version__ = "0.1.0"

__all__ = [
    "Frame",
    "PointAnnotation",
    "PipelineConfig",
    "RiskComponents",
    "SampleSplit",
    "Sequence",
    "SynthConfig",
    "generate",
    "load_sequence",
    "pn_risk",
    "positives_from_annotations",
    "pu_risk",
    "run_full_pipeline",
    "save_masks",
    "save_sequence",
    "true_priors",
]
