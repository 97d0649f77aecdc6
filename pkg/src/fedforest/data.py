"""Synthetic temperature data: normal-conditions training sets and labeled
test sets with injected out-of-range anomalies."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_TRAIN_MEAN = 22.0  # degrees C
DEFAULT_TRAIN_SD = 2.0
DEFAULT_NOISE_SIGMA = 0.5
DEFAULT_SPREAD = 10.0  # how far beyond the training range anomalies may land


@dataclass
class TestSet:
    """Labeled evaluation samples; label 1 marks an anomaly."""

    values: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_anomalies(self) -> int:
        return int(self.labels.sum())


def gen_training_set(
    size: int,
    rng: np.random.Generator,
    mean: float = DEFAULT_TRAIN_MEAN,
    sd: float = DEFAULT_TRAIN_SD,
) -> np.ndarray:
    """Draw `size` normal-conditions readings."""
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    return rng.normal(mean, sd, size)


def gen_test_set(
    train,
    n_test: int,
    anomaly_frac: float,
    rng: np.random.Generator,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    margin: float | None = None,
    spread: float = DEFAULT_SPREAD,
) -> TestSet:
    """Resample the training data with Gaussian noise and inject anomalies.

    Normal samples are uniformly chosen training values plus N(0, noise_sigma)
    noise. round(anomaly_frac * n_test) samples are replaced by uniform draws
    from [min-spread, min-margin] or [max+margin, max+spread], i.e. strictly
    outside the training range, and labeled accordingly. `margin` defaults to
    3 * noise_sigma so noisy normals cannot reach the anomaly band.
    """
    train = np.asarray(train, dtype=float)
    if train.size == 0:
        raise ValueError("empty training set")
    if not 0.0 < anomaly_frac < 1.0:
        raise ValueError(f"anomaly_frac must be in (0, 1), got {anomaly_frac}")
    if margin is None:
        margin = 3.0 * noise_sigma

    picks = train[rng.integers(0, train.size, n_test)]
    values = picks + rng.normal(0.0, noise_sigma, n_test)
    labels = np.zeros(n_test, dtype=np.int64)

    n_anom = int(round(anomaly_frac * n_test))
    if n_anom:
        idx = rng.choice(n_test, size=n_anom, replace=False)
        lo, hi = float(train.min()), float(train.max())
        below = rng.integers(0, 2, n_anom).astype(bool)
        low_band = rng.uniform(lo - spread, lo - margin, n_anom)
        high_band = rng.uniform(hi + margin, hi + spread, n_anom)
        values[idx] = np.where(below, low_band, high_band)
        labels[idx] = 1
    return TestSet(values=values, labels=labels)


def load_values(path: str | Path) -> np.ndarray:
    """Read one float per line; '#' comments and blank lines are skipped."""
    values = np.loadtxt(path, dtype=float, comments="#", ndmin=1)
    if values.ndim != 1:
        raise ValueError(f"{path}: expected one value per line")
    return values


def save_values(path: str | Path, values) -> None:
    np.savetxt(path, np.asarray(values, dtype=float), fmt="%.17g")
