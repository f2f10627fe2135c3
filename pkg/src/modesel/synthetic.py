"""Gaussian-mixture generator for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, largest_remainder


def gaussian_mixture(n: int, classes: int, dim: int, separation: float = 2.0, imbalance: float = 1.0,
                     seed: int = 0, spread: float = 1.0) -> Dataset:
    """Isotropic unit-variance clusters around random class means.

    Means are Gaussian directions scaled so their expected pairwise distance is
    about `separation`. Class sizes decay geometrically so the largest class is
    `imbalance` times the smallest. Rows are shuffled.
    """
    if classes < 2 or n < classes or dim < 1:
        raise ValueError("need classes >= 2, n >= classes and dim >= 1")
    if imbalance < 1:
        raise ValueError("imbalance is a largest/smallest ratio and must be >= 1")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, dim)) * (separation / np.sqrt(2 * dim))
    rel = imbalance ** (-np.arange(classes) / (classes - 1))
    sizes = np.maximum(largest_remainder(rel, n), 1)
    sizes[0] -= sizes.sum() - n
    labels = np.repeat(np.arange(classes), sizes)
    x = means[labels] + spread * rng.normal(size=(n, dim))
    perm = rng.permutation(n)
    return Dataset(x[perm], labels[perm], classes)
