"""Time-series loading, synthetic generation, normalization and windowing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import substream

# Divisor floor so constant dimensions normalize to zero instead of blowing up.
STD_FLOOR = 1e-8


class CsvFormatError(ValueError):
    """Raised when a CSV cell cannot be parsed; the message names row and column."""


@dataclass
class SeriesDataset:
    """A d-dimensional series of T timestamps with per-timestamp 0/1 labels."""

    values: np.ndarray  # [T, d] float64, all finite
    labels: np.ndarray  # [T] int, 0 regular / 1 anomaly
    name: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not np.isfinite(self.values).all():
            raise ValueError(f"dataset {self.name!r} contains non-finite values")
        if self.labels.shape != (self.values.shape[0],):
            raise ValueError(
                f"labels length {self.labels.shape} does not match series length "
                f"{self.values.shape[0]}"
            )
        if self.dim < 1:
            raise ValueError("series must have at least one dimension")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class WindowSet:
    """Sliding windows of a series plus the window-level labels.

    A window is labeled anomalous when any point it covers is anomalous.
    ``origins[i]`` is the timestamp offset at which window i starts.
    """

    windows: np.ndarray  # [n, L, d]
    labels: np.ndarray  # [n] int 0/1
    origins: np.ndarray  # [n] int, strictly increasing by `stride`
    window_length: int
    stride: int

    @property
    def count(self) -> int:
        return self.windows.shape[0]

    @property
    def dim(self) -> int:
        return self.windows.shape[2]


@dataclass
class Normalizer:
    """Per-dimension z-score transform fitted on training data only."""

    mean: np.ndarray  # [d]
    std: np.ndarray  # [d], floored at STD_FLOOR

    def apply(self, data: SeriesDataset) -> SeriesDataset:
        values = (data.values - self.mean) / self.std
        return SeriesDataset(values, data.labels.copy(), name=data.name)

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def fit_normalizer(train: SeriesDataset) -> Normalizer:
    if train.length == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    mean = train.values.mean(axis=0)
    std = np.maximum(train.values.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


def load_csv(path: str | Path, label_column: str | None = None) -> SeriesDataset:
    """Load a header-first CSV into a SeriesDataset.

    All non-label columns must parse as finite reals. If ``label_column`` is
    given it must exist and contain only 0/1; if it is None, a column named
    ``label`` is used when present, and otherwise all labels default to 0.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")
    header = [name.strip() for name in rows[0]]

    if label_column is not None:
        if label_column not in header:
            raise CsvFormatError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)
    elif "label" in header:
        label_idx = header.index("label")
    else:
        label_idx = None

    feature_idx = [j for j in range(len(header)) if j != label_idx]
    if not feature_idx:
        raise CsvFormatError(f"{path}: no feature columns")

    n_rows = len(rows) - 1
    values = np.empty((n_rows, len(feature_idx)), dtype=np.float64)
    labels = np.zeros(n_rows, dtype=np.int64)
    for r, row in enumerate(rows[1:], start=2):  # r is the 1-based file row
        if len(row) != len(header):
            raise CsvFormatError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for k, j in enumerate(feature_idx):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {r}, column {header[j]!r}: cannot parse {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise CsvFormatError(
                    f"{path}: row {r}, column {header[j]!r}: non-finite value {cell!r}"
                )
            values[r - 2, k] = v
        if label_idx is not None:
            cell = row[label_idx].strip()
            if cell not in ("0", "1"):
                try:
                    lv = float(cell)
                except ValueError:
                    lv = None
                if lv not in (0.0, 1.0):
                    raise CsvFormatError(
                        f"{path}: row {r}, column {header[label_idx]!r}: "
                        f"label must be 0 or 1, got {cell!r}"
                    )
                cell = str(int(lv))
            labels[r - 2] = int(cell)

    return SeriesDataset(values, labels, name=path.stem)


def write_csv(data: SeriesDataset, path: str | Path) -> None:
    """Write a series as CSV with columns dim_0..dim_{d-1},label. Round-trip exact."""
    path = Path(path)
    header = [f"dim_{j}" for j in range(data.dim)] + ["label"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(data.length):
            cells = [repr(float(v)) for v in data.values[t]]
            cells.append(str(int(data.labels[t])))
            fh.write(",".join(cells) + "\n")


def generate_synthetic(
    total_length: int = 20000,
    period: int = 100,
    noise_max: float = 0.1,
    anomaly_gap: int = 100,
    seed: int = 0,
    alpha_low: float = 0.0,
    alpha_high: float = 1.0,
) -> tuple[SeriesDataset, SeriesDataset]:
    """Sine wave with additive uniform noise, split 50/50 into train and test.

    The base signal is sin(2*pi*t/period) with amplitude 1, plus noise drawn
    uniformly from [0, noise_max] at every timestamp. The first half is the
    anomaly-free training set. In the test half, every timestamp congruent to
    0 modulo ``anomaly_gap`` receives an extra uplift drawn uniformly from
    [alpha_low, alpha_high] and is labeled anomalous. Defaults yield a
    20000-point univariate series whose test half holds 100 anomalies (1.0%).
    """
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    if total_length % 2 != 0:
        raise ValueError(f"total_length must be even, got {total_length}")
    if anomaly_gap <= 0 or anomaly_gap % period != 0:
        raise ValueError(
            f"anomaly_gap ({anomaly_gap}) must be a positive multiple of period ({period})"
        )
    if not 0.0 <= alpha_low <= alpha_high:
        raise ValueError("need 0 <= alpha_low <= alpha_high")

    rng = substream(seed, "data")
    t = np.arange(total_length)
    values = np.sin(2.0 * np.pi * t / period)
    values += rng.uniform(0.0, noise_max, size=total_length)

    half = total_length // 2
    train = SeriesDataset(
        values[:half].copy(), np.zeros(half, dtype=np.int64), name="synthetic-train"
    )

    test_values = values[half:].copy()
    test_labels = np.zeros(half, dtype=np.int64)
    anomaly_at = np.arange(0, half, anomaly_gap)
    test_values[anomaly_at] += rng.uniform(alpha_low, alpha_high, size=anomaly_at.size)
    test_labels[anomaly_at] = 1
    test = SeriesDataset(test_values, test_labels, name="synthetic-test")
    return train, test


def make_windows(data: SeriesDataset, window_length: int, stride: int | None = None) -> WindowSet:
    """Cut ``data`` into windows of ``window_length`` rows every ``stride`` steps.

    Only full-length windows are produced; trailing timestamps that do not
    fill a window are dropped. The window label is the max point label inside.
    """
    if stride is None:
        stride = window_length
    if window_length < 1 or stride < 1:
        raise ValueError("window_length and stride must be >= 1")
    if window_length > data.length:
        raise ValueError(
            f"window_length {window_length} exceeds series length {data.length}"
        )
    origins = np.arange(0, data.length - window_length + 1, stride)
    windows = np.stack([data.values[o : o + window_length] for o in origins])
    labels = np.array(
        [int(data.labels[o : o + window_length].max()) for o in origins], dtype=np.int64
    )
    return WindowSet(
        windows=windows,
        labels=labels,
        origins=origins,
        window_length=window_length,
        stride=stride,
    )
