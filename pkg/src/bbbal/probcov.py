"""Covariances of predictive class probabilities.

Two routes produce the per-class B x B matrices consumed by the log-det
acquisition:

* the analytic route for a binary probit GP, where the cross moment
  E[Phi(f_i) Phi(f_j)] is a bivariate normal orthant probability under
  N(mu, S + I), and
* the sampled route for arbitrary models, which takes S sampled probability
  vectors per point and forms the plug-in covariance, optionally shrunk
  towards a scaled identity with a Ledoit-Wolf intensity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .gp import GPJointPosterior
from .normal import norm_cdf, orthant_prob, std_normal_cdf

# Relative tolerance below which sample dispersion counts as exactly zero.
_DISPERSION_EPS = 1e-12


def default_jitter(mat: np.ndarray) -> float:
    """Diagonal jitter added before any log-determinant: 1e-10 (1 + mean variance)."""
    mat = np.asarray(mat)
    b = mat.shape[0]
    return 1e-10 * (1.0 + max(float(np.trace(mat)), 0.0) / b)


@dataclass
class ClassProbCov:
    """Per-class covariance matrices of predictive probabilities.

    ``per_class`` holds the raw matrices; ``jitter_applied`` is the amount
    added to each diagonal by :meth:`jittered`, the form passed to
    log-determinants.
    """

    per_class: list
    jitter_applied: float

    @property
    def n_classes(self) -> int:
        return len(self.per_class)

    @property
    def batch_size(self) -> int:
        return self.per_class[0].shape[0]

    def jittered(self, scale: float = 1.0) -> list:
        eye = np.eye(self.batch_size)
        return [m + scale * self.jitter_applied * eye for m in self.per_class]


@dataclass
class ProbSampleTensor:
    """Sampled class probabilities with shape (S, B, C)."""

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 3:
            raise DomainError("samples must have shape (S, B, C)")
        if np.any(self.samples < -1e-12) or np.any(self.samples > 1 + 1e-12):
            raise DomainError("sampled probabilities must lie in [0, 1]")
        if not np.allclose(self.samples.sum(axis=-1), 1.0, atol=1e-6):
            raise DomainError("class probabilities must sum to 1")

    @property
    def shape(self):
        return self.samples.shape


def probit_mean(mu, var):
    """E[Phi(f)] for f ~ N(mu, var), i.e. Phi(mu / sqrt(var + 1))."""
    if np.ndim(mu) == 0 and np.ndim(var) == 0:
        if var < 0:
            raise DomainError(f"variance must be nonnegative, got {var}")
        return std_normal_cdf(mu / math.sqrt(var + 1.0))
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise DomainError("variance must be nonnegative")
    return norm_cdf(np.asarray(mu, dtype=float) / np.sqrt(var + 1.0))


def probit_cov(post: GPJointPosterior, i: int = 0, j: int = 1) -> float:
    """Cov(Phi(f_i), Phi(f_j)) under the joint latent posterior.

    With a single-point posterior (or ``i == j``) this is the variance of
    the predictive probability at that point.
    """
    if post.mu.shape[0] == 1:
        i = j = 0
    mu, S = post.mu, post.S
    if S[i, i] < 0 or S[j, j] < 0:
        raise DomainError("posterior variances must be nonnegative")
    e_joint = orthant_prob(mu[i], mu[j], S[i, i] + 1.0, S[j, j] + 1.0, S[i, j])
    return float(e_joint - probit_mean(mu[i], S[i, i]) * probit_mean(mu[j], S[j, j]))


def probit_cov_matrix(mu: np.ndarray, S: np.ndarray) -> np.ndarray:
    """All pairwise Cov(Phi(f_i), Phi(f_j)) for a joint posterior (mu, S)."""
    mu = np.asarray(mu, dtype=float)
    S = np.asarray(S, dtype=float)
    d = np.diag(S)
    if np.any(d < 0):
        raise DomainError("posterior variances must be nonnegative")
    iu, ju = np.triu_indices(len(mu))
    e_joint = orthant_prob(mu[iu], mu[ju], d[iu] + 1.0, d[ju] + 1.0, S[iu, ju])
    m = probit_mean(mu, d)
    out = np.empty((len(mu), len(mu)))
    out[iu, ju] = e_joint - m[iu] * m[ju]
    out[ju, iu] = out[iu, ju]
    return out


def analytic_class_cov(post: GPJointPosterior) -> ClassProbCov:
    """Per-class probability covariances for a binary probit GP.

    Both classes share one matrix since Cov(1 - p, 1 - q) = Cov(p, q).
    """
    m = probit_cov_matrix(post.mu, post.S)
    return ClassProbCov([m, m.copy()], default_jitter(m))


def sampled_class_cov(t: ProbSampleTensor | np.ndarray) -> ClassProbCov:
    """Plug-in covariance (1/S) sum p p^T - mean mean^T for every class.

    Uses the biased 1/S normalisation. Evaluated in centred form, which is
    algebraically the same estimator.
    """
    samples = t.samples if isinstance(t, ProbSampleTensor) else np.asarray(t, dtype=float)
    n = samples.shape[0]
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    centred = samples - samples.mean(axis=0, keepdims=True)
    mats = [centred[:, :, c].T @ centred[:, :, c] / n for c in range(samples.shape[2])]
    jit = max(default_jitter(m) for m in mats)
    return ClassProbCov(mats, jit)


class Shrinkage(NamedTuple):
    matrix: np.ndarray
    intensity: float
    fallback: bool = False


def ledoit_wolf_intensity(samples: np.ndarray) -> float:
    """Ledoit-Wolf shrinkage intensity towards a scaled identity.

    ``samples`` is (n_observations, n_features). Matches the usual centred
    estimator except that samples carrying no dispersion information (all
    centred outer products equal, e.g. n = 2) get full shrinkage instead of
    none, so the result is never left singular.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DomainError("samples must be a nonempty 2-d array")
    n, p = x.shape
    xc = x - x.mean(axis=0)
    emp = xc.T @ xc / n
    mu = np.trace(emp) / p
    delta = np.sum((emp - mu * np.eye(p)) ** 2) / p
    x2 = xc * xc
    beta_ = (np.sum(x2.T @ x2) / n - np.sum(emp * emp)) / (p * n)
    scale = max(np.sum(emp * emp) / p, np.finfo(float).tiny)
    if delta <= _DISPERSION_EPS * scale or beta_ <= _DISPERSION_EPS * scale:
        return 1.0
    return float(min(max(beta_, 0.0), delta) / delta)


def ledoit_wolf_shrink(cov: np.ndarray, samples: np.ndarray | None = None,
                       intensity: float | None = None, jitter: float = 1e-10) -> Shrinkage:
    """Shrink ``cov`` to (1 - lam) cov + lam * (trace/B) I.

    The intensity ``lam`` is estimated from ``samples`` (typically a random
    subset of pool points) unless given directly. A covariance with zero
    trace cannot be shrunk towards anything useful; ``jitter * I`` is
    returned instead with ``fallback`` set.
    """
    cov = np.asarray(cov, dtype=float)
    b = cov.shape[0]
    if cov.shape != (b, b) or not np.allclose(cov, cov.T, atol=1e-12):
        raise DomainError("cov must be a symmetric square matrix")
    if intensity is None:
        if samples is None:
            raise DomainError("need samples or an explicit intensity")
        intensity = ledoit_wolf_intensity(samples)
    lam = float(np.clip(intensity, 0.0, 1.0))
    target = np.trace(cov) / b
    if target <= 0:
        return Shrinkage(jitter * np.eye(b), lam, True)
    out = (1.0 - lam) * cov
    out[np.diag_indices(b)] += lam * target
    return Shrinkage(out, lam, False)


def sample_gp_probs(post: GPJointPosterior, n_samples: int,
                    rng: np.random.Generator) -> ProbSampleTensor:
    """Draw latent vectors from the joint posterior and map them through Phi.

    Returns a binary (S, B, 2) tensor ordered as (1 - p, p).
    """
    vals, vecs = np.linalg.eigh(post.S)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = rng.standard_normal((n_samples, len(post.mu)))
    f = post.mu[None, :] + z @ root.T
    p1 = norm_cdf(f)
    return ProbSampleTensor(np.stack([1.0 - p1, p1], axis=-1))
