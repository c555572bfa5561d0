"""Auxiliary age estimation and the normalized ranking score.

The estimator is a ridge-affine regressor fit on labeled samples that
the transformers never train on. The score of a transformer on a stage
is the mean absolute deviation of its outputs' estimated ages from the
next stage's target mean, normalized by the population standard
deviation of those ages. The estimator provides no gradient to any
transformer; it only ranks them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import Sample, StageDataset


@dataclass(frozen=True)
class AgeEstimator:
    weights: np.ndarray
    bias: float
    ridge: float
    fit_record: dict

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValidationError("estimator parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ScoreReport:
    mean_abs_error: float
    std_dev: float
    normalized_error: float
    n_samples: int
    sigma_floored: bool


def fit_estimator(features: np.ndarray, ages: np.ndarray, ridge: float = 1e-6,
                  seed: int = 0) -> AgeEstimator:
    """Ridge least squares of age on features, intercept unpenalized.

    Deterministic; the seed is recorded for provenance only.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(ages, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("features must be (n, d)")
    n, d = X.shape
    if y.shape != (n,):
        raise ValidationError("ages must align with features")
    if n < d + 1:
        raise ValidationError(f"need at least d + 1 = {d + 1} labeled samples, got {n}")
    if ridge < 0:
        raise ValidationError("ridge must be >= 0")
    mx = X.mean(axis=0)
    my = y.mean()
    Xc = X - mx
    A = Xc.T @ Xc + ridge * np.eye(d)
    w = np.linalg.solve(A, Xc.T @ (y - my))
    bias = my - float(mx @ w)
    record = {"n_samples": int(n), "seed": int(seed), "ridge": float(ridge)}
    return AgeEstimator(weights=w, bias=bias, ridge=float(ridge), fit_record=record)


def estimate(gamma: AgeEstimator, s: Sample) -> float:
    if s.dim != gamma.dim:
        raise ValidationError(f"dimension mismatch: sample {s.dim}, estimator {gamma.dim}")
    return float(s.features @ gamma.weights + gamma.bias)


def estimate_batch(gamma: AgeEstimator, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != gamma.dim:
        raise ValidationError(f"dimension mismatch: features {X.shape[1]}, estimator {gamma.dim}")
    return X @ gamma.weights + gamma.bias


def score_ages(ages: np.ndarray, target_mean: float, sigma_floor: float) -> ScoreReport:
    """Normalized error of a batch of estimated ages against a target mean.

    sigma is the population standard deviation (divide by n). The floor
    defines the score when the output distribution collapses.
    """
    ages = np.asarray(ages, dtype=np.float64)
    if ages.size == 0:
        raise ValidationError("cannot score an empty age batch")
    if sigma_floor <= 0:
        raise ValidationError("sigma_floor must be > 0")
    mae = float(np.abs(ages - target_mean).mean())
    sigma = float(ages.std())
    floored = sigma < sigma_floor
    # the ratio is nonnegative already; abs kept to mirror the decision
    # rule's literal form
    e = abs(mae / max(sigma, sigma_floor))
    return ScoreReport(mean_abs_error=mae, std_dev=sigma, normalized_error=e,
                       n_samples=int(ages.size), sigma_floored=floored)


def score_error(phi, source: StageDataset, target_mean: float, gamma: AgeEstimator,
                sigma_floor: float = 1e-6) -> ScoreReport:
    """Score a transformer: push source through F, estimate ages, normalize."""
    from .transformer import transform_forward

    out = transform_forward(phi, source.features)
    ages = estimate_batch(gamma, out)
    return score_ages(ages, target_mean, sigma_floor)
