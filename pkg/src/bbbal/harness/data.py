"""Synthetic datasets: the 1-D two-cluster toy and Gaussian blobs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..gp import Dataset, KernelParams

TOY_FLIP = 0.35
TOY_RANGE = (-2.0, 2.0)
TOY_SEED = 3
# Unlabelled gap between the clusters, and the side where labels are noisy.
TOY_GAP = (-0.25, 0.25)
TOY_NOISY_REGION = (0.5, 2.0)
# Kernel used for the toy landscapes and tests. The long lengthscale makes
# the noisy side's outer edge the most informative single location.
TOY_KERNEL = KernelParams(amplitude=3.0, lengthscale=1.8)


@dataclass
class ToyProblem:
    """Labelled toy clusters plus a hidden-label pool and test set on the same line."""

    train: Dataset
    pool: Dataset
    test: Dataset
    grid: np.ndarray
    flipped: np.ndarray


def toy_true_prob(x):
    """P(y = 1 | x) of the toy's generating process.

    Class 0 on the left, class 1 with 35% label noise on the right, and a
    linear ramp through the unlabelled gap around x = 0.
    """
    x = np.asarray(x, dtype=float)
    return np.clip(x + 0.5, 0.0, 1.0) * (1.0 - TOY_FLIP)


def make_toy_1d(seed: int = TOY_SEED, n_noisy: int = 50, n_clean: int = 25,
                noisy_spread: float = 0.35, clean_spread: float = 0.3,
                n_pool: int = 81, n_test: int = 200, grid_size: int = 101) -> ToyProblem:
    """Binary 1-D toy with a clean cluster near -1, a noisy one near +1 and a gap at 0.

    Cluster draws that would fall inside the gap are clamped to its edges.
    Labels in the clean cluster are all 0. The noisy cluster has true label
    1, flipped with probability 0.35. The pool is an evenly spaced grid over
    the toy range whose hidden labels, like the test labels, come from
    :func:`toy_true_prob`.
    """
    if n_noisy < 1 or n_clean < 1:
        raise DomainError("cluster sizes must be >= 1")
    if n_pool < 2 or grid_size < 2 or n_test < 1:
        raise DomainError("pool and grid need at least 2 points, test at least 1")
    rng = np.random.default_rng(seed)
    # Cluster tails are clamped to the gap edges so the gap stays unlabelled.
    x_clean = np.minimum(-1.0 + clean_spread * rng.standard_normal(n_clean), TOY_GAP[0])
    x_noisy = np.maximum(1.0 + noisy_spread * rng.standard_normal(n_noisy), TOY_GAP[1])
    flipped = rng.random(n_noisy) < TOY_FLIP
    y = np.concatenate([np.zeros(n_clean, int), np.where(flipped, 0, 1)])
    train = Dataset(np.concatenate([x_clean, x_noisy])[:, None], y)

    lo, hi = TOY_RANGE
    x_pool = np.linspace(lo, hi, n_pool)
    y_pool = (rng.random(n_pool) < toy_true_prob(x_pool)).astype(int)
    x_test = rng.uniform(lo, hi, n_test)
    y_test = (rng.random(n_test) < toy_true_prob(x_test)).astype(int)
    return ToyProblem(
        train,
        Dataset(x_pool[:, None], y_pool),
        Dataset(x_test[:, None], y_test),
        np.linspace(lo, hi, grid_size),
        flipped,
    )


def blob_centres(seed: int, n_classes: int = 4, dim: int = 2,
                 separation: float = 3.0) -> np.ndarray:
    """Cluster centres of :func:`make_blobs`, from their own RNG stream."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    return separation * rng.standard_normal((n_classes, dim))


def make_blobs(seed: int, n_classes: int = 4, n_per_class: int = 100, dim: int = 2,
               separation: float = 3.0, scale: float = 1.0) -> Dataset:
    """Isotropic Gaussian clusters, one per class.

    Centres depend only on ``(seed, n_classes, dim, separation)``, not on
    ``n_per_class``. Rows are shuffled.
    """
    if n_classes < 2:
        raise DomainError("need at least two classes")
    if n_per_class < 1 or dim < 1:
        raise DomainError("n_per_class and dim must be >= 1")
    centres = blob_centres(seed, n_classes, dim, separation)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    x = np.concatenate([c + scale * rng.standard_normal((n_per_class, dim)) for c in centres])
    y = np.repeat(np.arange(n_classes), n_per_class)
    order = rng.permutation(len(y))
    return Dataset(x[order], y[order], n_classes)
