"""Deterministic Gaussian-blob classification datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_classes: int = 3
    n_samples: int = 6000
    dim: int = 4
    separation: float = 2.5  # distance between any two class centers, in noise-std units
    class_scale: float | tuple[float, ...] = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ConfigError("a dataset needs at least 2 classes")
        if self.n_samples < 4 * self.n_classes:
            raise ConfigError("need at least 4 samples per class")
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.separation < 0:
            raise ConfigError("separation must be non-negative")
        scales = self.scales
        if len(scales) != self.n_classes or min(scales) <= 0:
            raise ConfigError("class_scale needs one positive value per class")

    @property
    def scales(self) -> tuple[float, ...]:
        if isinstance(self.class_scale, (int, float)):
            return (float(self.class_scale),) * self.n_classes
        return tuple(float(s) for s in self.class_scale)


def _centers(spec: SyntheticDatasetSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.dim >= spec.n_classes:
        # Scaled one-hot vectors are pairwise exactly `separation` apart;
        # a random rotation hides the axis alignment.
        base = np.zeros((spec.n_classes, spec.dim))
        base[np.arange(spec.n_classes), np.arange(spec.n_classes)] = spec.separation / math.sqrt(2)
        q, _ = np.linalg.qr(rng.standard_normal((spec.dim, spec.dim)))
        centers = base @ q
    else:
        dirs = rng.standard_normal((spec.n_classes, spec.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = dirs * spec.separation / math.sqrt(2)
    return centers - centers.mean(axis=0)


def generate_dataset(
    spec: SyntheticDatasetSpec, seed: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(features, labels) with balanced classes; cached and returned read-only.

    ``seed`` overrides ``spec.seed``.
    """
    return _generate(spec if seed is None else replace(spec, seed=seed))


@lru_cache(maxsize=32)
def _generate(spec: SyntheticDatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    centers = _centers(spec, rng)
    labels = np.arange(spec.n_samples) % spec.n_classes
    labels = labels[rng.permutation(spec.n_samples)]
    scales = np.asarray(spec.scales)[labels][:, None]
    features = centers[labels] + scales * rng.standard_normal((spec.n_samples, spec.dim))
    features.setflags(write=False)
    labels.setflags(write=False)
    return features, labels
