"""Self-supervised training loop: alternate scorer epochs and prior updates.

One iteration trains the scorer for a single epoch with the current
per-frame prior estimates, observes the powered mean probabilities, and
runs one constrained UKF step.  Training halts once the pseudo-label
statistics stay healthy for a fixed number of consecutive epochs, and the
prior estimate at that point is frozen for the final training phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import priorfilter, scorer, trainer
from .priorfilter import ControlSchedule, FilterConfig, NoiseConfig
from .scorer import ScorerModel, predict_probs
from .seqdata import SampleSplit, Sequence, positives_from_annotations
from .synth import true_priors
from .trainer import TrainConfig

MODE_SSNNPU = "ssnnpu"
MODE_NNPU_TRUE = "nnpu_true"
MODE_NNPU_CONST = "nnpu_const"


@dataclass
class StoppingConfig:
    """Thresholds of the two stopping conditions and their persistence."""

    pi0_upper: float
    tau: float = 0.007
    ts: int = 10
    max_epochs: int = 100

    def __post_init__(self) -> None:
        if self.tau <= 0 or self.ts < 1:
            raise ValueError("tau must be > 0 and ts >= 1")


@dataclass
class PseudoLabelStats:
    """Per-frame pseudo-positive fractions and the pooled pseudo-negative variance."""

    pos_fractions: np.ndarray
    neg_variance: float


def pseudo_stats(
    model: ScorerModel, seq: Sequence, features: list[np.ndarray] | None = None
) -> PseudoLabelStats:
    """Threshold predictions at 0.5 (ties count as pseudo-positive).

    The variance is the population variance over all pseudo-negative
    pixels of the whole sequence; an empty set yields 0.
    """
    if features is None:
        features = trainer.frame_features(seq)
    fractions = np.empty(len(features))
    negatives = []
    for i, feats in enumerate(features):
        probs = predict_probs(model, feats)
        pos = probs >= 0.5
        fractions[i] = float(pos.mean())
        negatives.append(probs[~pos])
    pooled = np.concatenate(negatives) if negatives else np.empty(0)
    variance = float(np.var(pooled)) if pooled.size else 0.0
    return PseudoLabelStats(fractions, variance)


def should_stop(history: list[PseudoLabelStats], cfg: StoppingConfig) -> bool:
    """True iff both conditions held in every one of the last ``ts`` epochs:
    all pseudo-positive fractions strictly below the upper bound, and the
    pseudo-negative variance strictly below tau."""
    if len(history) < cfg.ts:
        return False
    return all(
        float(st.pos_fractions.max()) < cfg.pi0_upper and st.neg_variance < cfg.tau
        for st in history[-cfg.ts:]
    )


@dataclass
class EpochRecord:
    epoch: int
    rho: np.ndarray
    pi_hat: np.ndarray
    pos_fractions: np.ndarray
    neg_variance: float
    train: trainer.EpochStats


@dataclass
class SsnnpuResult:
    model: ScorerModel
    priors: np.ndarray
    records: list[EpochRecord]
    stopped_early: bool


def run_ssnnpu(
    model: ScorerModel,
    seq: Sequence,
    split: SampleSplit,
    stopping: StoppingConfig,
    filter_cfg: FilterConfig,
    train_cfg: TrainConfig,
    gamma: float = 2.0,
    features: list[np.ndarray] | None = None,
    epoch_offset: int = 0,
) -> SsnnpuResult:
    """Alternate one training epoch and one filter update until stopping.

    Each epoch trains with the current estimates, then updates them; the
    returned priors are the estimate at the epoch where the stopping
    conditions were met (or at ``max_epochs``).
    """
    if features is None:
        features = trainer.frame_features(seq)
    pi0 = stopping.pi0_upper
    state = priorfilter.init_state(pi0, len(features), filter_cfg.noise)
    opt = trainer.OptimizerState.for_model(model)
    history: list[PseudoLabelStats] = []
    records: list[EpochRecord] = []
    stopped = False
    for k in range(stopping.max_epochs):
        model, opt, tstats = trainer.train_epoch(
            model, opt, features, split, state.mean, train_cfg.lr_phase23,
            train_cfg, epoch_offset + k,
        )
        rho = priorfilter.observe_priors(model, seq, gamma, pi0, features=features)
        state = priorfilter.ukf_step(state, rho, k, filter_cfg)
        stats = pseudo_stats(model, seq, features=features)
        history.append(stats)
        records.append(EpochRecord(k, rho, state.mean.copy(), stats.pos_fractions,
                                   stats.neg_variance, tstats))
        if should_stop(history, stopping):
            stopped = True
            break
    return SsnnpuResult(model, state.mean.copy(), records, stopped)


@dataclass
class PipelineConfig:
    """Every knob of a full run; defaults follow the reference settings."""

    mode: str = MODE_SSNNPU
    seed: int = 0
    eta: float = 1.4
    pi0: float | None = None  # explicit upper bound; otherwise eta * max true prior
    pi_init: float = 0.01
    gamma: float = 2.0
    radius_frac: float = 0.05
    window_frac: float = 0.05
    u0_frac: float = 0.02
    ut_frac: float = 0.4
    tau: float = 0.007
    ts: int = 10
    prune: float = 0.4
    superpixel_count: int = 256
    unlabeled_all_pixels: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def resolve_pi0(self, seq: Sequence) -> float:
        if self.pi0 is not None:
            return self.pi0
        if not seq.has_gt():
            raise ValueError("pi0 must be given explicitly when no ground truth exists")
        return float(self.eta * true_priors(seq).max())


@dataclass
class PipelineResult:
    model: ScorerModel
    prob_maps: list[np.ndarray]
    priors: np.ndarray
    pi0: float
    records: list[EpochRecord]
    stopping_epoch: int | None
    phase_stats: list[trainer.EpochStats]


def probability_maps(
    model: ScorerModel, seq: Sequence, features: list[np.ndarray] | None = None
) -> list[np.ndarray]:
    if features is None:
        features = trainer.frame_features(seq)
    shape = (seq.height, seq.width)
    return [predict_probs(model, f).reshape(shape) for f in features]


def run_full_pipeline(seq: Sequence, cfg: PipelineConfig) -> PipelineResult:
    """Warm-up, prior estimation (or an ablation arm), final training.

    ``nnpu_true`` skips the estimation phase and trains 150 epochs with
    the per-frame ground-truth priors; ``nnpu_const`` does the same with
    a constant prior, eta times the mean ground-truth prior.
    """
    features = trainer.frame_features(seq)
    split = positives_from_annotations(
        seq, cfg.radius_frac, unlabeled_all_pixels=cfg.unlabeled_all_pixels
    )
    model = scorer.init_model(cfg.seed, cfg.pi_init)
    # all shuffling derives from the pipeline seed so a manifest reproduces runs
    train_cfg = replace(cfg.train, shuffle_seed=cfg.seed)

    if cfg.mode in (MODE_NNPU_TRUE, MODE_NNPU_CONST):
        truth = true_priors(seq)
        if cfg.mode == MODE_NNPU_TRUE:
            priors = truth
        else:
            priors = np.full(len(truth), float(np.clip(cfg.eta * truth.mean(), 1e-4, 1 - 1e-4)))
        model, stats = trainer.run_fixed_prior(model, seq, split, priors, train_cfg,
                                               features=features)
        return PipelineResult(model, probability_maps(model, seq, features), priors,
                              float(priors.max()), [], None, stats)

    if cfg.mode != MODE_SSNNPU:
        raise ValueError(f"unknown pipeline mode {cfg.mode!r}")

    pi0 = cfg.resolve_pi0(seq)
    model, stats1 = trainer.run_phase1(model, seq, split, pi0, train_cfg, features=features)

    window = max(int(round(cfg.window_frac * seq.n_frames)), 1)
    stopping = StoppingConfig(pi0_upper=pi0, tau=cfg.tau, ts=cfg.ts,
                              max_epochs=train_cfg.max_epochs_phase2)
    filter_cfg = FilterConfig(
        noise=cfg.noise,
        control=ControlSchedule.from_pi0(pi0, stopping.max_epochs, cfg.u0_frac, cfg.ut_frac),
        upper=pi0,
        window=window,
    )
    result = run_ssnnpu(model, seq, split, stopping, filter_cfg, train_cfg,
                        gamma=cfg.gamma, features=features,
                        epoch_offset=train_cfg.epochs_phase1)
    stopping_epoch = len(result.records) - 1 if result.stopped_early else None

    model, stats3 = trainer.run_phase3(
        result.model, seq, split, result.priors, train_cfg, features=features,
        epoch_offset=train_cfg.epochs_phase1 + len(result.records),
    )
    return PipelineResult(
        model, probability_maps(model, seq, features), result.priors, pi0,
        result.records, stopping_epoch, stats1 + stats3,
    )


def write_manifest(path: str | Path, entries: dict) -> None:
    """Plain ``key=value`` dump of every hyperparameter and seed of a run."""
    lines = [f"{key}={entries[key]}" for key in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> dict[str, str]:
    entries = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            entries[key] = value
    return entries
