"""Recursive Bayesian estimation of per-frame class priors.

The state is the vector of per-frame priors.  Its transition smooths the
vector with a Hann-window moving average and subtracts a linearly
growing control input, which sweeps the estimates downward from the
initial upper bound.  The per-frame mean of powered scorer probabilities
acts as the (noisy) observation.  An unscented Kalman filter fuses the
two; interval constraints are enforced by clipping the sigma points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scorer import ScorerModel, predict_probs
from .seqdata import Sequence

PRIOR_FLOOR = 1e-4

# unscented transform constants (2N+1 points)
UT_ALPHA = 1.0
UT_BETA = 2.0
UT_KAPPA = 0.0

_CHOL_JITTER = 1e-9


class FilterDivergenceError(RuntimeError):
    """Raised when the filter covariance turns non-finite or non-repairable."""


@dataclass
class NoiseConfig:
    """Diagonal scales of the process, observation and initial covariances."""

    sigma_q: float = 10.0
    sigma_r: float = 0.05
    sigma_s: float = 0.03

    def __post_init__(self) -> None:
        if min(self.sigma_q, self.sigma_r, self.sigma_s) <= 0:
            raise ValueError("noise scales must be positive")


@dataclass
class ControlSchedule:
    """Linear ramp u_k = u0 + (uT - u0) * k / horizon."""

    u0: float
    uT: float
    horizon: int

    @classmethod
    def from_pi0(
        cls, pi0: float, horizon: int, u0_frac: float = 0.02, ut_frac: float = 0.4
    ) -> "ControlSchedule":
        return cls(u0_frac * pi0, ut_frac * pi0, horizon)

    def at(self, k: int) -> float:
        if self.horizon <= 0:
            return self.u0
        return self.u0 + (self.uT - self.u0) * k / self.horizon


@dataclass
class FilterConfig:
    """Everything one UKF step needs besides the state itself."""

    noise: NoiseConfig
    control: ControlSchedule
    upper: float
    lower: float = PRIOR_FLOOR
    window: int = 1


@dataclass
class PriorState:
    """Filter mean and covariance over the N per-frame priors."""

    mean: np.ndarray
    cov: np.ndarray


def init_state(pi0: float, n_frames: int, noise: NoiseConfig) -> PriorState:
    """All frames start at the upper bound with covariance sigma_s * I."""
    if not 0.0 < pi0 < 1.0:
        raise ValueError("pi0 must lie in (0, 1)")
    return PriorState(np.full(n_frames, pi0, dtype=np.float64),
                      noise.sigma_s * np.eye(n_frames))


def observe_priors(
    model: ScorerModel,
    seq: Sequence,
    gamma: float,
    pi0: float,
    features: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Per-frame mean of prob**gamma over all pixels, clipped to [0, pi0]."""
    if gamma < 1.0:
        raise ValueError("gamma must be >= 1")
    if features is None:
        from .trainer import frame_features

        features = frame_features(seq)
    rho = np.array([float(np.mean(predict_probs(model, f) ** gamma)) for f in features])
    return np.clip(rho, 0.0, pi0)


def hann_window(length: int) -> np.ndarray:
    """Normalized raised-cosine weights; degenerates to [1] for length <= 2."""
    if length <= 2:
        return np.ones(1)
    m = np.arange(length)
    w = 1.0 - np.cos(2.0 * np.pi * m / (length - 1))
    return w / w.sum()


def hann_smooth(values: np.ndarray, length: int) -> np.ndarray:
    """Moving average with a Hann window and reflection padding.

    ``length`` is forced odd (incremented when even) and clipped so the
    reflection padding stays valid; length 1 is the identity.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1]
    length = max(int(length), 1)
    if length % 2 == 0:
        length += 1
    length = min(length, 2 * n - 1)
    if length <= 2 or n == 1:
        return values.copy()
    w = hann_window(length)
    pad = (length - 1) // 2
    padded = np.pad(values, [(0, 0)] * (values.ndim - 1) + [(pad, pad)], mode="reflect")
    # correlate along the last axis; the window is symmetric
    out = np.apply_along_axis(lambda row: np.convolve(row, w, mode="valid"), -1, padded)
    return out


def smoothing_matrix(n: int, length: int) -> np.ndarray:
    """Dense matrix form of :func:`hann_smooth` (used by linear oracles)."""
    return np.column_stack([hann_smooth(e, length) for e in np.eye(n)])


def transition(mean: np.ndarray, k: int, control: ControlSchedule, window: int) -> np.ndarray:
    """Deterministic state transition: smooth, then subtract the control."""
    return hann_smooth(mean, window) - control.at(k)


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            return np.linalg.cholesky(cov + _CHOL_JITTER * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise FilterDivergenceError("covariance is not positive definite") from exc


def _sigma_points(mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled sigma points and their mean/covariance weights."""
    n = mean.size
    lam = UT_ALPHA * UT_ALPHA * (n + UT_KAPPA) - n
    c = n + lam
    scaled = np.sqrt(c) * _cholesky_with_jitter(cov)
    points = np.concatenate([mean[None, :], mean + scaled.T, mean - scaled.T], axis=0)
    wm = np.full(2 * n + 1, 0.5 / c)
    wm[0] = lam / c
    wc = wm.copy()
    wc[0] += 1.0 - UT_ALPHA * UT_ALPHA + UT_BETA
    return points, wm, wc


def _weighted_moments(points: np.ndarray, wm: np.ndarray, wc: np.ndarray):
    mean = wm @ points
    dev = points - mean
    cov = dev.T @ (wc[:, None] * dev)
    return mean, cov


def ukf_step(state: PriorState, rho: np.ndarray, k: int, cfg: FilterConfig) -> PriorState:
    """One predict/update cycle with interval-constrained sigma points.

    Sigma points are clipped to [lower, upper] right after generation and
    again after the transition; the posterior mean is clipped as well.
    The observation model is the identity with additive noise.
    """
    lo, hi = cfg.lower, cfg.upper
    n = state.mean.size
    q = cfg.noise.sigma_q * np.eye(n)
    r = cfg.noise.sigma_r * np.eye(n)

    # predict
    points, wm, wc = _sigma_points(state.mean, state.cov)
    points = np.clip(points, lo, hi)
    propagated = np.clip(transition(points, k, cfg.control, cfg.window), lo, hi)
    mean_pred, cov_pred = _weighted_moments(propagated, wm, wc)
    cov_pred = cov_pred + q

    # update (identity observation, additive R)
    points, wm, wc = _sigma_points(mean_pred, cov_pred)
    points = np.clip(points, lo, hi)
    z_mean, z_cov = _weighted_moments(points, wm, wc)
    innovation_cov = z_cov + r
    # identity observation: cross covariance equals the clipped point spread
    gain = np.linalg.solve(innovation_cov.T, z_cov.T).T
    mean_new = mean_pred + gain @ (np.asarray(rho, dtype=np.float64) - z_mean)
    cov_new = cov_pred - gain @ innovation_cov @ gain.T
    cov_new = 0.5 * (cov_new + cov_new.T)

    if not (np.all(np.isfinite(mean_new)) and np.all(np.isfinite(cov_new))):
        raise FilterDivergenceError("non-finite state after update")
    return PriorState(np.clip(mean_new, lo, hi), cov_new)


def append_prior_log(
    path: str | Path,
    epoch: int,
    rho: np.ndarray,
    pi_hat: np.ndarray,
    pseudo_pos_fraction: np.ndarray,
) -> None:
    """Append one epoch of the prior trajectory (one row per frame)."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["epoch", "frame", "rho", "pi_hat", "pseudo_pos_fraction"])
        for i, (r_i, p_i, f_i) in enumerate(zip(rho, pi_hat, pseudo_pos_fraction)):
            writer.writerow([epoch, i, f"{r_i:.17g}", f"{p_i:.17g}", f"{f_i:.17g}"])
