"""Empirical risks for positive/negative and positive/unlabeled training.

All losses take logits.  The positive and negative logistic losses are
``softplus(-z)`` and ``softplus(z)``; the unlabeled-set rewriting of the
negative risk can go below zero once an expressive model overfits the
positives, which flips the training step into gradient ascent on that
term (the non-negative correction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

PRIOR_EPS = 1e-4

DESCENT = "descent"
ASCENT = "ascent"


@dataclass(frozen=True)
class RiskComponents:
    """Risk pieces of one batch; ``mode`` is ascent iff ``neg_risk`` < 0."""

    pos_risk: float
    neg_risk: float
    total_pu: float
    mode: str


def clamp_prior(prior: float) -> float:
    """Keep the class prior inside [1e-4, 1 - 1e-4]."""
    return float(min(max(prior, PRIOR_EPS), 1.0 - PRIOR_EPS))


def loss_pos(z: np.ndarray | float) -> np.ndarray | float:
    """log(1 + exp(-z)), computed without overflow."""
    return np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def loss_neg(z: np.ndarray | float) -> np.ndarray | float:
    """log(1 + exp(z)), computed without overflow."""
    return np.logaddexp(0.0, np.asarray(z, dtype=np.float64))


def pn_risk(scores_p: np.ndarray, scores_n: np.ndarray, prior: float) -> float:
    """Balanced risk with known negatives: pi*mean l+ + (1-pi)*mean l-."""
    scores_p = np.asarray(scores_p, dtype=np.float64)
    scores_n = np.asarray(scores_n, dtype=np.float64)
    if scores_p.size == 0 or scores_n.size == 0:
        raise ValueError("pn_risk needs non-empty positive and negative sets")
    prior = clamp_prior(prior)
    return float(prior * loss_pos(scores_p).mean() + (1.0 - prior) * loss_neg(scores_n).mean())


def pu_risk(scores_p: np.ndarray, scores_u: np.ndarray, prior: float) -> RiskComponents:
    """Unbiased PU risk split into its positive and (signed) negative parts.

    pos_risk = pi * mean_p l+   and
    neg_risk = mean_u l-  -  pi * mean_p l-.
    """
    scores_p = np.asarray(scores_p, dtype=np.float64)
    scores_u = np.asarray(scores_u, dtype=np.float64)
    if scores_p.size == 0 or scores_u.size == 0:
        raise ValueError("pu_risk needs non-empty positive and unlabeled sets")
    prior = clamp_prior(prior)
    pos = prior * loss_pos(scores_p).mean()
    neg = loss_neg(scores_u).mean() - prior * loss_neg(scores_p).mean()
    mode = ASCENT if neg < 0.0 else DESCENT
    return RiskComponents(float(pos), float(neg), float(pos + neg), mode)


def pu_risk_grad(
    scores_p: np.ndarray, scores_u: np.ndarray, prior: float, mode: str
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample dLoss/dlogit for the chosen branch.

    Descent minimizes the full PU risk; ascent minimizes the negated
    negative risk (equivalently performs ascent on it).  Positive samples
    carry weight pi/|P|, unlabeled samples 1/|U|.
    """
    scores_p = np.asarray(scores_p, dtype=np.float64)
    scores_u = np.asarray(scores_u, dtype=np.float64)
    prior = clamp_prior(prior)
    sig_p = expit(scores_p)
    sig_u = expit(scores_u)
    n_p, n_u = scores_p.size, scores_u.size
    # d l+/dz = sigma(z) - 1,  d l-/dz = sigma(z)
    if mode == DESCENT:
        up_p = prior * ((sig_p - 1.0) - sig_p) / n_p
        up_u = sig_u / n_u
    elif mode == ASCENT:
        up_p = prior * sig_p / n_p
        up_u = -sig_u / n_u
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return up_p, up_u
