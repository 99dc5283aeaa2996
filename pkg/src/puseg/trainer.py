"""Mini-batch training loop: one frame per batch, ascent/descent branching.

Phases follow a fixed schedule: 50 warm-up epochs at lr 1e-4 with a
constant prior, then prior estimation epochs and a final 100 epochs at
lr 1e-5 with frozen per-frame priors.  Optimization is Adam with
decoupled weight decay.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import purisk, scorer
from .purisk import ASCENT, DESCENT
from .scorer import GradientBuffer, ScorerModel
from .seqdata import SampleSplit, Sequence


@dataclass
class TrainConfig:
    epochs_phase1: int = 50
    max_epochs_phase2: int = 100
    epochs_phase3: int = 100
    lr_phase1: float = 1e-4
    lr_phase23: float = 1e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    # optional robustness toggle: additive gaussian noise on the features
    augment_noise_std: float = 0.0


@dataclass
class OptimizerState:
    """Adam moment accumulators, matching the model parameter shapes."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_model(cls, model: ScorerModel) -> "OptimizerState":
        m = {name: np.zeros_like(np.asarray(val, dtype=np.float64))
             for name, val in scorer.param_items(model)}
        v = {name: arr.copy() for name, arr in m.items()}
        return cls(m, v)


@dataclass
class EpochStats:
    epoch: int
    mean_pos_risk: float
    mean_neg_risk: float
    ascent_fraction: float
    wall_time: float


def adam_step(
    model: ScorerModel,
    grads: GradientBuffer,
    opt: OptimizerState,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ScorerModel, OptimizerState]:
    """One decoupled-weight-decay Adam step; returns updated copies."""
    t = opt.step + 1
    new_params: dict[str, np.ndarray | float] = {}
    new_m, new_v = {}, {}
    grad_by_name = dict(scorer.param_items(grads))
    for name, param in scorer.param_items(model):
        p = np.asarray(param, dtype=np.float64)
        g = np.asarray(grad_by_name[name], dtype=np.float64)
        p = p * (1.0 - lr * weight_decay)
        m = beta1 * opt.m[name] + (1.0 - beta1) * g
        v = beta2 * opt.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
        new_params[name] = float(p) if np.ndim(param) == 0 else p
    return ScorerModel(**new_params), OptimizerState(new_m, new_v, t)


def frame_features(seq: Sequence) -> list[np.ndarray]:
    """Per-frame feature matrices, extracted once and reused across epochs."""
    return [scorer.extract_features(f) for f in seq.frames]


def batch_order(n_frames: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    """Deterministic frame visiting order for one epoch."""
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n_frames)


def frame_batch_step(
    model: ScorerModel,
    opt: OptimizerState,
    feats: np.ndarray,
    pos_idx: np.ndarray,
    unl_idx: np.ndarray,
    prior: float,
    lr: float,
    cfg: TrainConfig,
) -> tuple[ScorerModel, OptimizerState, purisk.RiskComponents]:
    """Risk, branch selection and one optimizer step for a single frame."""
    logits, cache = scorer.forward_cached(model, feats)
    risks = purisk.pu_risk(logits[pos_idx], logits[unl_idx], prior)
    up_p, up_u = purisk.pu_risk_grad(logits[pos_idx], logits[unl_idx], prior, risks.mode)
    upstream = np.zeros(feats.shape[0])
    upstream[pos_idx] = up_p
    upstream[unl_idx] += up_u
    grads = scorer.backward_from_cache(model, cache, upstream)
    model, opt = adam_step(
        model, grads, opt, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps
    )
    return model, opt, risks


def train_epoch(
    model: ScorerModel,
    opt: OptimizerState,
    features: list[np.ndarray],
    split: SampleSplit,
    priors: np.ndarray,
    lr: float,
    cfg: TrainConfig,
    epoch: int,
) -> tuple[ScorerModel, OptimizerState, EpochStats]:
    """Visit every frame once in a seed-determined shuffled order."""
    n = len(features)
    if len(priors) != n:
        raise ValueError("one prior per frame required")
    t0 = time.perf_counter()
    pos_risks, neg_risks, ascents = [], [], 0
    for i in batch_order(n, cfg.shuffle_seed, epoch):
        feats = features[i]
        if cfg.augment_noise_std > 0.0:
            noise_rng = np.random.default_rng([cfg.shuffle_seed, epoch, int(i)])
            feats = feats + noise_rng.normal(0.0, cfg.augment_noise_std, feats.shape)
        model, opt, risks = frame_batch_step(
            model, opt, feats, split.positives[i], split.unlabeled[i],
            float(priors[i]), lr, cfg,
        )
        pos_risks.append(risks.pos_risk)
        neg_risks.append(risks.neg_risk)
        ascents += risks.mode == ASCENT
    stats = EpochStats(
        epoch=epoch,
        mean_pos_risk=float(np.mean(pos_risks)),
        mean_neg_risk=float(np.mean(neg_risks)),
        ascent_fraction=ascents / n,
        wall_time=time.perf_counter() - t0,
    )
    return model, opt, stats


def run_phase1(
    model: ScorerModel,
    seq: Sequence,
    split: SampleSplit,
    pi0: float,
    cfg: TrainConfig,
    features: list[np.ndarray] | None = None,
) -> tuple[ScorerModel, list[EpochStats]]:
    """Warm-up epochs at lr_phase1 with the constant prior ``pi0``."""
    if features is None:
        features = frame_features(seq)
    priors = np.full(len(features), pi0)
    opt = OptimizerState.for_model(model)
    stats = []
    for epoch in range(cfg.epochs_phase1):
        model, opt, st = train_epoch(model, opt, features, split, priors, cfg.lr_phase1, cfg, epoch)
        stats.append(st)
    return model, stats


def run_phase3(
    model: ScorerModel,
    seq: Sequence,
    split: SampleSplit,
    priors: np.ndarray,
    cfg: TrainConfig,
    features: list[np.ndarray] | None = None,
    epoch_offset: int = 0,
) -> tuple[ScorerModel, list[EpochStats]]:
    """Final epochs at lr_phase23 with frozen per-frame priors."""
    if features is None:
        features = frame_features(seq)
    opt = OptimizerState.for_model(model)
    stats = []
    for epoch in range(cfg.epochs_phase3):
        model, opt, st = train_epoch(
            model, opt, features, split, priors, cfg.lr_phase23, cfg, epoch_offset + epoch
        )
        stats.append(st)
    return model, stats


def run_fixed_prior(
    model: ScorerModel,
    seq: Sequence,
    split: SampleSplit,
    priors: np.ndarray,
    cfg: TrainConfig,
    features: list[np.ndarray] | None = None,
) -> tuple[ScorerModel, list[EpochStats]]:
    """Ablation arms: 150 epochs with fixed priors, lr dropping after 50."""
    if features is None:
        features = frame_features(seq)
    opt = OptimizerState.for_model(model)
    stats = []
    total = cfg.epochs_phase1 + cfg.epochs_phase3
    for epoch in range(total):
        lr = cfg.lr_phase1 if epoch < cfg.epochs_phase1 else cfg.lr_phase23
        model, opt, st = train_epoch(model, opt, features, split, priors, lr, cfg, epoch)
        stats.append(st)
    return model, stats


def append_stats_csv(path: str | Path, stats: list[EpochStats]) -> None:
    """Append per-epoch rows (with wall time) to a CSV, creating the header."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(
                ["epoch", "mean_pos_risk", "mean_neg_risk", "ascent_fraction", "wall_time"]
            )
        for st in stats:
            writer.writerow(
                [st.epoch, f"{st.mean_pos_risk:.17g}", f"{st.mean_neg_risk:.17g}",
                 f"{st.ascent_fraction:.17g}", f"{st.wall_time:.6f}"]
            )
