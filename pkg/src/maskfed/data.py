"""Synthetic datasets and sample-quality metrics for desk-scale runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError
from .rng import stream


@dataclass
class ToyDataset:
    """Labeled point cloud; labels index the generating mixture component."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.shape[0] != self.labels.shape[0]:
            raise ConfigError("points and labels must have equal length")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def label_histogram(self, indices=None) -> np.ndarray:
        labels = self.labels if indices is None else self.labels[indices]
        return np.bincount(labels, minlength=int(self.labels.max()) + 1)

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(self.dim)] + ["label"])
            for row, lab in zip(self.points, self.labels):
                writer.writerow([repr(v) for v in row] + [int(lab)])


def gen_gaussian_mixture(num_components: int, n_per_component: int,
                         centers, std: float, seed: int) -> ToyDataset:
    """Isotropic Gaussian blobs, n_per_component points around each center."""
    if num_components < 1:
        raise ConfigError(f"num_components must be >= 1, got {num_components}")
    if std < 0.0:
        raise ConfigError(f"std must be >= 0, got {std}")
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape[0] != num_components:
        raise ConfigError(f"need {num_components} centers, got {centers.shape[0]}")
    rng = stream(seed, "toy-mixture")
    labels = np.repeat(np.arange(num_components), n_per_component)
    noise = rng.standard_normal((labels.size, centers.shape[1]))
    return ToyDataset(points=centers[labels] + std * noise, labels=labels)


def _knn_radii(points: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest neighbor, excluding self-distance."""
    dists = cdist(points, points)
    # row-wise sorted position k skips the zero self-distance at position 0
    return np.partition(dists, k, axis=1)[:, k]


def knn_metrics(real: np.ndarray, fake: np.ndarray, k: int = 5) -> dict:
    """Precision, recall, density, and coverage via k-NN manifolds.

    A fake point counts as precise when it falls inside some real point's
    k-NN ball; recall mirrors this with the roles swapped; density counts
    how many real balls contain each fake point (can exceed 1); coverage is
    the fraction of real balls containing at least one fake point.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape[0] <= k or fake.shape[0] <= k:
        raise ConfigError(f"need more than k={k} samples on each side")
    radii_real = _knn_radii(real, k)
    radii_fake = _knn_radii(fake, k)
    between = cdist(real, fake)
    inside_real = between <= radii_real[:, None]
    precision = float(inside_real.any(axis=0).mean())
    recall = float((between <= radii_fake[None, :]).any(axis=1).mean())
    density = float(inside_real.sum(axis=0).mean() / k)
    coverage = float((between.min(axis=1) <= radii_real).mean())
    return {"precision": precision, "recall": recall,
            "density": density, "coverage": coverage}
