"""Batch selection by greedy log-det maximisation and dense grid search.

The pool selector follows the fast greedy MAP scheme for determinantal
point processes: for every class it keeps the Cholesky rows of the selected
points against the whole pool, so each step costs one covariance row per
class and O(N B) arithmetic. The marginal gain of a candidate is the sum
over classes of the log of its conditional variance given the selection.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegeneratePoolError, DomainError
from .gp import LaplaceGPC, rbf_gram
from .normal import orthant_prob
from .probcov import ProbSampleTensor, ledoit_wolf_intensity, probit_mean


class CovOracle:
    """Lazy per-class covariance source over a pool of ``size`` points.

    Subclasses implement ``_diag(c)`` and ``_row(c, j)``; this base class
    counts every entry handed out in ``queries``.
    """

    mode = "matrix"

    def __init__(self, n_classes: int, size: int):
        self.n_classes = n_classes
        self.size = size
        self.queries = 0

    def diag(self, c: int) -> np.ndarray:
        self.queries += self.size
        return self._diag(c)

    def row(self, c: int, j: int) -> np.ndarray:
        self.queries += self.size
        return self._row(c, j)

    def jitter(self, c: int) -> float:
        d = self._diag(c)
        return 1e-10 * (1.0 + max(float(np.mean(d)), 0.0))

    def _diag(self, c):
        raise NotImplementedError

    def _row(self, c, j):
        raise NotImplementedError


class MatrixOracle(CovOracle):
    """Oracle backed by explicit per-class matrices."""

    def __init__(self, mats):
        mats = [np.asarray(m, dtype=float) for m in mats]
        super().__init__(len(mats), mats[0].shape[0])
        self.mats = mats

    def _diag(self, c):
        return np.diag(self.mats[c]).copy()

    def _row(self, c, j):
        return self.mats[c][j].copy()


class AnalyticGPOracle(CovOracle):
    """Probit-GP probability covariances over a pool, computed row by row.

    Both classes share the same matrix, so rows are cached and counted per
    class request.
    """

    mode = "analytic"

    def __init__(self, model: LaplaceGPC, pool: np.ndarray):
        pool = np.atleast_2d(np.asarray(pool, dtype=float))
        super().__init__(2, len(pool))
        self.model = model
        self.pool = pool
        k_star, self._v = model.cross_terms(pool)
        self.mu = k_star.T @ model.grad if len(model.data) else np.zeros(len(pool))
        self.var = np.maximum(
            model.params.amplitude - np.sum(self._v**2, axis=0), 0.0
        )
        self.pmean = probit_mean(self.mu, self.var)
        self._pdiag = (
            orthant_prob(self.mu, self.mu, self.var + 1.0, self.var + 1.0, self.var)
            - self.pmean**2
        )
        self._rows: dict[int, np.ndarray] = {}

    def latent_row(self, j: int) -> np.ndarray:
        """Posterior latent covariance between pool point ``j`` and the pool."""
        k = rbf_gram(self.pool[j:j + 1], self.pool, self.model.params)[0]
        s = k - self._v[:, j] @ self._v
        s[j] = self.var[j]
        return s

    def _diag(self, c):
        return self._pdiag.copy()

    def _row(self, c, j):
        if j not in self._rows:
            s = self.latent_row(j)
            v = self.var + 1.0
            # Guard |rho| <= 1 against round-off in the latent covariance.
            lim = np.sqrt(self.var[j] * self.var)
            s = np.clip(s, -lim, lim)
            e = orthant_prob(self.mu[j], self.mu, v[j], v, s)
            row = e - self.pmean[j] * self.pmean
            row[j] = self._pdiag[j]
            self._rows[j] = row
        return self._rows[j].copy()


class SampledOracle(CovOracle):
    """Shrunk plug-in probability covariances from an (S, N, C) sample tensor.

    The Ledoit-Wolf intensity of each class is estimated once from a random
    subset of pool columns; the shrinkage target is the mean pool variance.
    """

    mode = "sampled"

    def __init__(self, samples: ProbSampleTensor | np.ndarray, rng: np.random.Generator,
                 subset_size: int = 256, shrink: bool = True):
        p = samples.samples if isinstance(samples, ProbSampleTensor) else np.asarray(samples, float)
        s, n, c = p.shape
        super().__init__(c, n)
        self.n_samples = s
        self.centred = p - p.mean(axis=0, keepdims=True)
        self.var = np.einsum("snc,snc->nc", self.centred, self.centred) / s
        self.target = self.var.mean(axis=0)
        m = min(subset_size, n)
        self.subset = np.sort(rng.choice(n, size=m, replace=False))
        if shrink:
            self.intensity = np.array(
                [ledoit_wolf_intensity(p[:, self.subset, k]) for k in range(c)]
            )
        else:
            self.intensity = np.zeros(c)

    def _diag(self, c):
        lam = self.intensity[c]
        return (1.0 - lam) * self.var[:, c] + lam * self.target[c]

    def _row(self, c, j):
        lam = self.intensity[c]
        x = self.centred[:, :, c]
        row = (1.0 - lam) * (x[:, j] @ x) / self.n_samples
        row[j] += lam * self.target[c]
        return row


@dataclass
class AcquisitionResult:
    indices: list
    gains: list
    score: float
    seconds: float = 0.0
    queries: int = 0
    cond_var_history: list = field(default_factory=list, repr=False)


def greedy_logdet_select(oracle: CovOracle, pool_size: int | None, batch_size: int,
                         candidates=None, record: bool = False) -> AcquisitionResult:
    """Greedily maximise sum_c log det of the selected per-class covariances.

    Conditional variances are clamped below at the per-class jitter before
    taking logs. Ties go to the lowest pool index. With ``candidates`` only
    those pool indices may be chosen. ``record`` keeps the per-step
    conditional variances for inspection.

    Raises
    ------
    DegeneratePoolError
        If every remaining candidate has all conditional variances at or
        below the jitter floor.
    """
    n = oracle.size if pool_size is None else pool_size
    if n != oracle.size:
        raise DomainError(f"pool_size {n} does not match oracle size {oracle.size}")
    if batch_size > n or batch_size < 1:
        raise DomainError(f"batch size must be in [1, {n}], got {batch_size}")
    t0 = time.perf_counter()
    q0 = oracle.queries
    n_cls = oracle.n_classes
    jit = np.array([oracle.jitter(c) for c in range(n_cls)])
    d2 = np.stack([oracle.diag(c) for c in range(n_cls)])  # (C, N)
    rows = np.zeros((n_cls, batch_size, n))
    available = np.ones(n, dtype=bool)
    if candidates is not None:
        available[:] = False
        available[np.asarray(candidates, dtype=int)] = True
    if batch_size > available.sum():
        raise DomainError("batch size exceeds the number of candidates")

    selected: list[int] = []
    gains: list[float] = []
    history = []
    for t in range(batch_size):
        clamped = np.maximum(d2, jit[:, None])
        if record:
            history.append(d2.copy())
        live = available & np.any(d2 > jit[:, None], axis=0)
        if not live.any():
            raise DegeneratePoolError(
                f"all remaining conditional variances are at the jitter floor after {t} picks"
            )
        g = np.where(available, np.log(clamped).sum(axis=0), -np.inf)
        best = int(np.argmax(g))
        selected.append(best)
        gains.append(float(g[best]))
        available[best] = False
        if t == batch_size - 1:
            break
        for c in range(n_cls):
            r = oracle.row(c, best)
            e = (r - rows[c, :t, best] @ rows[c, :t]) / np.sqrt(clamped[c, best])
            rows[c, t] = e
            d2[c] -= e * e
    return AcquisitionResult(
        selected, gains, float(sum(gains)), time.perf_counter() - t0,
        oracle.queries - q0, history,
    )


@dataclass
class LandscapeGrid:
    """Scores of every ordered pair (x1 = axis[i], x2 = axis[j])."""

    axis: np.ndarray
    values: np.ndarray
    flagged: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{x:.9g}" for x in self.axis])
        for row in self.values:
            w.writerow([f"{v:.9g}" for v in row])
        return buf.getvalue()


def grid_joint_maximize(score_fn: Callable[[float, float], float], axis,
                        batch_size: int = 2):
    """Evaluate ``score_fn`` on every ordered pair of grid locations.

    Returns ``(x1, x2, grid)`` for the first maximum in row-major order.
    Non-finite cells are flagged and excluded from the argmax.
    """
    if batch_size != 2:
        raise DomainError("grid maximisation is implemented for pairs only")
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or len(axis) < 2 or np.any(np.diff(axis) <= 0):
        raise DomainError("axis must be a strictly increasing 1-d grid of size >= 2")
    g = len(axis)
    values = np.empty((g, g))
    for i in range(g):
        for j in range(g):
            values[i, j] = score_fn(axis[i], axis[j])
    flagged = ~np.isfinite(values)
    if flagged.all():
        raise DomainError("score is non-finite on every grid cell")
    masked = np.where(flagged, -np.inf, values)
    i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
    return axis[i], axis[j], LandscapeGrid(axis, values, flagged)
