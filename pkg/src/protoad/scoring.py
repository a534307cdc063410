"""Reconstruction errors, Gaussian error model, anomaly scores and AUC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .data import SeriesDataset, WindowSet
    from .model import ProtoADModel

COV_REGULARIZER = 1e-6

SCORE_MODES = ("mahalanobis", "paper-density")


@dataclass
class ErrorDistribution:
    """Gaussian fit of reconstruction-error vectors from held-out regular data.

    ``cov`` already includes the ridge ``reg * I``, so it is symmetric positive
    definite and ``precision`` is its exact inverse.
    """

    mean: np.ndarray  # [d]
    cov: np.ndarray  # [d, d], regularized
    reg: float
    precision: np.ndarray  # [d, d]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def sigma(self) -> float:
        """Standard deviation, univariate case only."""
        if self.dim != 1:
            raise ValueError("sigma is only defined for univariate errors")
        return float(np.sqrt(self.cov[0, 0]))


def fit_error_distribution(errors: np.ndarray, reg: float = COV_REGULARIZER) -> ErrorDistribution:
    """Sample mean and covariance (N-1 denominator) of error vectors [N, d].

    The covariance gets a ridge ``reg * I`` so the precision matrix exists even
    for degenerate (e.g. all-identical) errors. Needs at least d+1 vectors.
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=np.float64))
    if errors.ndim != 2:
        raise ValueError(f"expected error vectors [N, d], got shape {errors.shape}")
    n, d = errors.shape
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} error vectors to fit, got {n}")
    mean = errors.mean(axis=0)
    centered = errors - mean
    cov = (centered.T @ centered) / (n - 1) + reg * np.eye(d)
    precision = np.linalg.inv(cov)
    return ErrorDistribution(mean=mean, cov=cov, reg=reg, precision=precision)


def point_scores(
    dist: ErrorDistribution, errors: np.ndarray, mode: str = "mahalanobis"
) -> np.ndarray:
    """Per-timestamp anomaly scores of error vectors [..., d].

    The default is the squared Mahalanobis distance (e-mu)^T S^-1 (e-mu) for
    every d, which reduces to ((e-mu)/sigma)^2 when d=1; larger means more
    anomalous. Mode "paper-density" instead evaluates the univariate Gaussian
    density at e, where larger means more ordinary; rank-based evaluation must
    negate it (see `auc_orientation`).
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape[-1] != dist.dim:
        raise ValueError(f"error dimension {errors.shape[-1]} != fitted dimension {dist.dim}")
    centered = errors - dist.mean
    if mode == "mahalanobis":
        return np.einsum("...i,ij,...j->...", centered, dist.precision, centered)
    if mode == "paper-density":
        if dist.dim != 1:
            raise ValueError("paper-density scoring is defined for univariate errors only")
        var = dist.cov[0, 0]
        q = centered[..., 0] ** 2 / (2.0 * var)
        return np.exp(-q) / np.sqrt(2.0 * np.pi * var)
    raise ValueError(f"unknown score mode {mode!r}; expected one of {SCORE_MODES}")


def auc_orientation(mode: str) -> float:
    """Sign applied to window scores before ranking: density scores flip."""
    if mode == "mahalanobis":
        return 1.0
    if mode == "paper-density":
        return -1.0
    raise ValueError(f"unknown score mode {mode!r}; expected one of {SCORE_MODES}")


def window_scores(points: np.ndarray, origins: np.ndarray) -> np.ndarray:
    """Window score = max over its timestamps of per-timestamp scores [n, L].

    When windows overlap, a timestamp scored by several windows first keeps
    only its maximum, then each window takes the max over its covered range.
    """
    points = np.asarray(points, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.int64)
    n, L = points.shape
    if origins.shape != (n,):
        raise ValueError("one origin per window required")
    idx = origins[:, None] + np.arange(L)[None, :]
    per_timestamp = np.full(int(idx.max()) + 1, -np.inf)
    np.maximum.at(per_timestamp, idx.ravel(), points.ravel())
    return per_timestamp[idx].max(axis=1)


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Window-level AUC as the Mann-Whitney rank statistic, ties counted 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"AUC needs both classes; got {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    bounds = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [scores.size]))
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + b + 1)  # average of 1-based ranks a+1..b
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ScoreSeries:
    """Anomaly scores of one window set, aligned with origins and labels."""

    origins: np.ndarray  # [n]
    scores: np.ndarray  # [n] window scores (max over covered timestamps)
    labels: np.ndarray  # [n]
    mode: str = "mahalanobis"

    def auc(self) -> float:
        return auc_score(auc_orientation(self.mode) * self.scores, self.labels)


def score_window_set(model: "ProtoADModel", windows: "WindowSet") -> ScoreSeries:
    """Score already-normalized windows with a trained model."""
    if model.error_dist is None:
        raise ValueError("model has no fitted error distribution; train it first")
    mode = model.config.score_mode
    errors = model.reconstruction_errors(windows.windows)
    points = point_scores(model.error_dist, errors, mode=mode)
    scores = window_scores(points, windows.origins)
    return ScoreSeries(
        origins=windows.origins.copy(), scores=scores, labels=windows.labels.copy(), mode=mode
    )


def score_series(model: "ProtoADModel", data: "SeriesDataset") -> ScoreSeries:
    """Normalize, window and score a raw series using the model's own settings."""
    from .data import make_windows

    if model.normalizer is not None:
        data = model.normalizer.apply(data)
    windows = make_windows(data, model.config.window_length, model.config.stride)
    return score_window_set(model, windows)
