"""Two-moons data: generation, stratified splitting, standardization, CSV I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def invert(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


@dataclass(frozen=True)
class Dataset:
    """Features ``X`` (n, 2) and labels ``y`` in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray
    standardization: Standardization | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=int)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be in {-1, +1}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.standardization)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]),
                       self.standardization)


def make_two_moons(n: int, noise_std: float, rng: np.random.Generator) -> Dataset:
    """Two interleaved half circles with Gaussian jitter.

    The first ``ceil(n/2)`` points lie on the upper arc ``(cos t, sin t)`` and
    are labelled -1; the rest lie on ``(1 - cos t, 0.5 - sin t)`` with label +1.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    n_upper = (n + 1) // 2
    n_lower = n - n_upper
    t_up = rng.uniform(0.0, np.pi, n_upper)
    t_lo = rng.uniform(0.0, np.pi, n_lower)
    X = np.vstack([
        np.column_stack([np.cos(t_up), np.sin(t_up)]),
        np.column_stack([1.0 - np.cos(t_lo), 0.5 - np.sin(t_lo)]),
    ])
    if noise_std > 0:
        X = X + rng.normal(0.0, noise_std, X.shape)
    y = np.concatenate([-np.ones(n_upper, dtype=int), np.ones(n_lower, dtype=int)])
    return Dataset(X, y)


def split(dataset: Dataset, train_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Stratified split; each class contributes ``round(fraction * n_class)`` to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    train_idx, test_idx = [], []
    for label in (-1, 1):
        idx = np.flatnonzero(dataset.y == label)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(train_fraction * len(idx)))
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    if len(tr) == 0 or len(te) == 0:
        raise ValueError("split leaves an empty side")
    tr = tr[rng.permutation(len(tr))]
    te = te[rng.permutation(len(te))]
    return dataset.subset(tr), dataset.subset(te)


def fit_standardization(X: np.ndarray) -> Standardization:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise ValueError("cannot fit standardization on an empty split")
    std = X.std(axis=0)
    if np.any(std <= 0):
        raise ValueError(f"zero-variance feature(s): {np.flatnonzero(std <= 0).tolist()}")
    return Standardization(X.mean(axis=0), std)


def standardize(fit_on: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Fit on ``fit_on`` and apply the same transform to every dataset given."""
    stats = fit_standardization(fit_on.X)
    return tuple(Dataset(stats.apply(d.X), d.y, stats) for d in (fit_on, *others))


def two_moons_split(
    n: int = 1500,
    noise_std: float = 0.2,
    train_fraction: float = 0.6,
    rng: np.random.Generator | None = None,
) -> tuple[Dataset, Dataset]:
    """Standard benchmark: generate, split stratified, standardize on train."""
    rng = np.random.default_rng(0) if rng is None else rng
    full = make_two_moons(n, noise_std, rng)
    train, test = split(full, train_fraction, rng)
    train, test = standardize(train, test)
    return train, test


def write_csv(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "x1", "label"])
        for (x0, x1), label in zip(dataset.X, dataset.y):
            w.writerow([repr(float(x0)), repr(float(x1)), int(label)])


def read_csv(path: str | Path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    X = np.array([[float(r["x0"]), float(r["x1"])] for r in rows])
    y = np.array([int(float(r["label"])) for r in rows])
    return Dataset(X, y)
