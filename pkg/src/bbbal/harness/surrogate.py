"""Random-feature softmax surrogate with an exact Gaussian weight posterior.

Each class gets a Bayesian linear regression of its one-hot indicator on
random cosine features. All classes share the feature map and therefore
the posterior covariance; only the means differ. Sampling a weight vector
per class and pushing the logits through a tempered softmax gives sampled
class probabilities for any model-agnostic acquisition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from ..errors import DomainError, FitError
from ..gp import Dataset
from ..probcov import ProbSampleTensor


@dataclass(frozen=True)
class RffConfig:
    n_features: int = 200
    lengthscale: float = 1.0
    prior_precision: float = 1.0
    noise_precision: float = 25.0
    temperature: float = 0.1

    def __post_init__(self):
        if self.n_features < 1:
            raise DomainError("n_features must be >= 1")
        for name in ("lengthscale", "prior_precision", "noise_precision", "temperature"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")


@dataclass
class RffSoftmaxSurrogate:
    """Fitted surrogate.

    ``freqs`` is (D, F) and ``phases`` (F,). ``mean`` is (F, C); ``cov_root``
    is a square root R of the shared (F, F) weight covariance, R R^T = cov.
    """

    config: RffConfig
    freqs: np.ndarray
    phases: np.ndarray
    mean: np.ndarray
    cov_root: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.mean.shape[1]

    @property
    def cov(self) -> np.ndarray:
        return self.cov_root @ self.cov_root.T

    def features(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f = self.freqs.shape[1]
        return np.sqrt(2.0 / f) * np.cos(x @ self.freqs + self.phases)

    def predict_proba(self, x) -> np.ndarray:
        """Softmax of the posterior-mean logits (a cheap point prediction)."""
        logits = self.features(x) @ self.mean / self.config.temperature
        return special.softmax(logits, axis=-1)


def fit_rff_softmax(data: Dataset, cfg: RffConfig, rng: np.random.Generator,
                    dim: int | None = None) -> RffSoftmaxSurrogate:
    """Draw a random feature map and condition the per-class weights on ``data``.

    ``dim`` is required when ``data`` is empty.

    Raises
    ------
    FitError
        If the posterior precision matrix cannot be factorised.
    """
    d = data.dim if len(data) else dim
    if d is None:
        raise DomainError("input dimension unknown for an empty dataset")
    f = cfg.n_features
    freqs = rng.standard_normal((d, f)) / cfg.lengthscale
    phases = rng.uniform(0.0, 2.0 * np.pi, f)
    model = RffSoftmaxSurrogate(cfg, freqs, phases, np.zeros((f, data.n_classes)),
                                np.eye(f) / np.sqrt(cfg.prior_precision))
    if len(data) == 0:
        return model

    phi = model.features(data.inputs)
    targets = np.eye(data.n_classes)[data.labels]
    prec = cfg.prior_precision * np.eye(f) + cfg.noise_precision * (phi.T @ phi)
    try:
        lp = linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError as exc:
        raise FitError("random-feature posterior precision is not positive definite") from exc
    if not np.all(np.isfinite(lp)):
        raise FitError("random-feature posterior precision is ill-conditioned")
    model.mean = linalg.cho_solve((lp, True), cfg.noise_precision * (phi.T @ targets))
    # prec^-1 = lp^-T lp^-1
    model.cov_root = linalg.solve_triangular(lp, np.eye(f), lower=True).T
    return model


def sample_probs(model: RffSoftmaxSurrogate, points, n_samples: int,
                 rng: np.random.Generator) -> ProbSampleTensor:
    """Sampled softmax probabilities, shape (S, N, C)."""
    if n_samples < 2:
        raise DomainError(f"need at least 2 samples, got {n_samples}")
    phi = model.features(points)
    z = rng.standard_normal((n_samples, phi.shape[1], model.n_classes))
    w = model.mean[None] + model.cov_root @ z
    logits = (phi @ w) / model.config.temperature
    return ProbSampleTensor(special.softmax(logits, axis=-1))
