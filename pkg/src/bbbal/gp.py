"""Binary Gaussian-process classification with a probit likelihood.

The latent posterior is Gaussianised with a Laplace approximation at the
mode (Rasmussen and Williams, Algorithms 3.1 and 3.2), giving a joint
Gaussian over latent values at any finite set of query points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special
from scipy.spatial import distance

from .errors import DomainError, FitError, MatrixError

MAX_NEWTON = 100
GRAD_TOL = 1e-8
KERNEL_JITTER = 1e-10


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters."""

    amplitude: float = 1.0
    lengthscale: float = 1.0
    jitter: float = KERNEL_JITTER

    def __post_init__(self):
        for name in ("amplitude", "lengthscale", "jitter"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v}")
        if self.jitter > 1e-4:
            raise DomainError(f"jitter must be <= 1e-4, got {self.jitter}")


@dataclass
class Dataset:
    """Labelled inputs; ``inputs`` is (N, D), ``labels`` integers in [0, n_classes)."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int = 2

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.labels):
            raise DomainError("inputs must be (N, D) with one label per row")
        if not np.all(np.isfinite(self.inputs)):
            raise DomainError("inputs must be finite")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DomainError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes)


@dataclass(frozen=True)
class GPJointPosterior:
    """Joint Gaussian over latent values at ``query_points``."""

    query_points: np.ndarray
    mu: np.ndarray
    S: np.ndarray


def rbf_kernel(x1, x2, params: KernelParams) -> float:
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise DomainError("kernel inputs must be finite")
    d2 = float(np.sum((x1 - x2) ** 2))
    return params.amplitude * math.exp(-0.5 * d2 / params.lengthscale**2)


def rbf_gram(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    """Kernel matrix between row sets ``a`` (n, D) and ``b`` (m, D)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d2 = distance.cdist(a, b, "sqeuclidean")
    return params.amplitude * np.exp(-0.5 * d2 / params.lengthscale**2)


def _probit_derivs(f: np.ndarray, y: np.ndarray):
    """log p(y|f), its gradient and the negative Hessian diagonal for y in {-1, +1}."""
    z = y * f
    logcdf = special.log_ndtr(z)
    # ratio = N(z) / Phi(z), evaluated in log space
    ratio = np.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - logcdf)
    grad = y * ratio
    w = ratio * ratio + z * ratio
    return logcdf.sum(), grad, w


@dataclass
class LaplaceGPC:
    """A fitted binary probit GP classifier.

    Attributes hold the quantities needed for prediction: the latent mode
    ``f_hat``, the likelihood gradient at the mode ``grad``, ``sqrt_w`` and
    the Cholesky factor ``chol_b`` of B = I + W^1/2 K W^1/2.
    """

    data: Dataset
    params: KernelParams
    f_hat: np.ndarray
    grad: np.ndarray
    sqrt_w: np.ndarray
    chol_b: np.ndarray | None
    n_iter: int = 0
    log_marginal: float = 0.0

    def cross_terms(self, queries: np.ndarray):
        """Return (k_star, v) with k_star = K(X, Q) and v = L^-1 W^1/2 k_star."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if len(self.data) == 0:
            return np.zeros((0, len(q))), np.zeros((0, len(q)))
        k_star = rbf_gram(self.data.inputs, q, self.params)
        v = linalg.solve_triangular(self.chol_b, self.sqrt_w[:, None] * k_star, lower=True)
        return k_star, v

    def predict_marginal(self, queries):
        """Latent predictive means and variances at each query row."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        k_star, v = self.cross_terms(q)
        mu = k_star.T @ self.grad if len(self.data) else np.zeros(len(q))
        var = self.params.amplitude - np.sum(v * v, axis=0)
        return mu, np.maximum(var, 0.0)

    def predict_proba(self, queries):
        """P(y = 1 | x) averaged over the latent posterior."""
        mu, var = self.predict_marginal(queries)
        return special.ndtr(mu / np.sqrt(1.0 + var))


def fit_laplace(data: Dataset, params: KernelParams, max_iter: int = MAX_NEWTON,
                tol: float = GRAD_TOL) -> LaplaceGPC:
    """Find the posterior mode of a probit GP by damped Newton iterations.

    Raises
    ------
    DomainError
        If the dataset is not binary.
    FitError
        If the gradient infinity-norm is still above ``tol`` after
        ``max_iter`` iterations.
    MatrixError
        If B = I + W^1/2 K W^1/2 cannot be factorised.
    """
    if data.n_classes != 2:
        raise DomainError("fit_laplace handles binary labels only")
    n = len(data)
    if n == 0:
        return LaplaceGPC(data, params, np.zeros(0), np.zeros(0), np.zeros(0), None)

    K = rbf_gram(data.inputs, data.inputs, params)
    K[np.diag_indices(n)] += params.jitter
    y = np.where(data.labels == 1, 1.0, -1.0)

    def objective(a, f):
        return _probit_derivs(f, y)[0] - 0.5 * a @ f

    f = np.zeros(n)
    a = np.zeros(n)
    psi = objective(a, f)
    for it in range(1, max_iter + 1):
        _, grad, w = _probit_derivs(f, y)
        if np.max(np.abs(grad - a)) < tol:
            break
        sw = np.sqrt(w)
        L = _chol_b(K, sw)
        b = w * f + grad
        c = linalg.solve_triangular(L, sw * (K @ b), lower=True)
        a_new = b - sw * linalg.solve_triangular(L.T, c, lower=False)
        # Step halving keeps the objective nondecreasing.
        step = 1.0
        da = a_new - a
        for _ in range(30):
            a_try = a + step * da
            f_try = K @ a_try
            psi_try = objective(a_try, f_try)
            if psi_try >= psi - 1e-12 * abs(psi):
                break
            step *= 0.5
        a, f, psi = a_try, f_try, psi_try
    else:
        _, grad, w = _probit_derivs(f, y)
        if np.max(np.abs(grad - a)) >= tol:
            raise FitError(f"Newton did not converge in {max_iter} iterations")
        it = max_iter

    loglik, grad, w = _probit_derivs(f, y)
    sw = np.sqrt(w)
    L = _chol_b(K, sw)
    log_marginal = loglik - 0.5 * a @ f - float(np.sum(np.log(np.diag(L))))
    return LaplaceGPC(data, params, f, grad, sw, L, n_iter=it, log_marginal=log_marginal)


def _chol_b(K, sw):
    n = len(sw)
    B = np.eye(n) + sw[:, None] * K * sw[None, :]
    try:
        return linalg.cholesky(B, lower=True)
    except linalg.LinAlgError as exc:
        raise MatrixError("I + W^1/2 K W^1/2 is not positive definite") from exc


def posterior_joint(model: LaplaceGPC, queries) -> GPJointPosterior:
    """Joint Laplace predictive distribution of the latent at ``queries``."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    if q.shape[0] < 1:
        raise DomainError("need at least one query point")
    if q.shape[1] != model.data.dim and len(model.data):
        raise DomainError(f"queries have dimension {q.shape[1]}, model has {model.data.dim}")
    k_star, v = model.cross_terms(q)
    mu = k_star.T @ model.grad if len(model.data) else np.zeros(len(q))
    # Jitter regularises the training Gram matrix only; S itself is exact.
    S = rbf_gram(q, q, model.params) - v.T @ v
    S = 0.5 * (S + S.T)
    return GPJointPosterior(q, mu, S)
