"""Acquisition scores: BALD, BatchBALD and the batch log-det score.

All entropies are in nats with the convention 0 log 0 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import CapacityError, DomainError, MatrixError
from .probcov import ClassProbCov

MAX_CONFIGS = 2**20
MAX_JITTER_ESCALATIONS = 3


@dataclass
class AcquisitionScore:
    value: float
    batch: list
    per_step_gains: list = field(default_factory=list)


def _xlogx(p):
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def entropy(p, axis=-1):
    """Categorical entropy along ``axis``."""
    return -np.sum(_xlogx(p), axis=axis)


def _check_rows(p, atol=1e-6):
    if np.any(~np.isfinite(p)) or np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise DomainError("probabilities must be finite and lie in [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, atol=atol):
        raise DomainError("probability rows must sum to 1")


def bald_score(point_samples) -> float:
    """Plug-in BALD for one point from an (S, C) matrix of sampled probabilities."""
    p = np.asarray(point_samples, dtype=float)
    if p.ndim != 2 or p.shape[0] < 1:
        raise DomainError("point_samples must be (S, C) with S >= 1")
    _check_rows(p)
    return float(entropy(p.mean(axis=0)) - entropy(p).mean())


def bald_scores(pool_samples) -> np.ndarray:
    """BALD for every pool point of an (S, N, C) tensor."""
    p = np.asarray(pool_samples, dtype=float)
    return entropy(p.mean(axis=0)) - entropy(p).mean(axis=0)


def _joint_table(p: np.ndarray) -> np.ndarray:
    """Per-sample probabilities of every label configuration, shape (S, C**B)."""
    s, b, c = p.shape
    table = np.ones((s, 1))
    for k in range(b):
        table = (table[:, :, None] * p[:, k, None, :]).reshape(s, -1)
    return table


def _mc_joint_entropy(p: np.ndarray, n_configs: int, rng: np.random.Generator):
    """Estimate H(y_1..y_B) by sampling configurations from the plug-in joint.

    Returns (estimate, standard error).
    """
    s, b, c = p.shape
    sidx = rng.integers(0, s, size=n_configs)
    # Inverse-CDF draw of y_b ~ p(. | f_s) for every configuration and point.
    cum = np.cumsum(p[sidx], axis=-1)
    u = rng.random((n_configs, b, 1))
    ys = np.minimum((u > cum).sum(axis=-1), c - 1)
    # Plug-in joint of each sampled configuration: mean_s prod_b p[s, b, y_b].
    per_sample = np.ones((s, n_configs))
    for k in range(b):
        per_sample *= p[:, k, ys[:, k]]
    neg_log = -np.log(per_sample.mean(axis=0))
    se = float(neg_log.std(ddof=1) / np.sqrt(n_configs)) if n_configs > 1 else np.inf
    return float(neg_log.mean()), se


def batchbald_joint_score(batch_samples, mode: str = "exact", mc_configs: int = 1000,
                          rng: np.random.Generator | None = None, return_se: bool = False):
    """Mutual information between the batch labels and the model.

    Parameters
    ----------
    batch_samples : array (S, B, C)
        Sampled class probabilities of each batch point.
    mode : {"exact", "mc"}
        ``exact`` enumerates all C**B label configurations; ``mc`` estimates
        the joint entropy from ``mc_configs`` configurations drawn from the
        plug-in joint. The conditional-entropy term is always exact.
    return_se : bool
        Also return the Monte Carlo standard error (zero in exact mode).
    """
    p = np.asarray(batch_samples, dtype=float)
    if p.ndim != 3:
        raise DomainError("batch_samples must be (S, B, C)")
    _check_rows(p)
    s, b, c = p.shape
    cond = float(entropy(p).sum(axis=1).mean())
    if mode == "exact":
        if c**b > MAX_CONFIGS:
            raise CapacityError(f"{c}**{b} label configurations exceed {MAX_CONFIGS}")
        joint = _joint_table(p).mean(axis=0)
        value, se = float(entropy(joint)) - cond, 0.0
    elif mode == "mc":
        if mc_configs < 1:
            raise DomainError("mc_configs must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        h, se = _mc_joint_entropy(p, mc_configs, rng)
        value = h - cond
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return (value, se) if return_se else value


def batchbald_greedy(pool_samples, batch_size: int, mode: str = "exact",
                     mc_configs: int = 1000, rng: np.random.Generator | None = None,
                     candidates=None) -> AcquisitionScore:
    """Greedy BatchBALD over a pool.

    At each step the candidate maximising the joint score of the selected
    points plus itself is added (lowest index on ties). In ``exact`` mode the
    selected points' configuration table is carried forward; in ``mc`` mode
    a fresh set of configurations of the selected points is drawn every step
    and the candidate's label is summed out exactly.
    """
    p = np.asarray(pool_samples, dtype=float)
    s, n, c = p.shape
    if batch_size > n:
        raise DomainError(f"batch size {batch_size} exceeds pool size {n}")
    if mode == "exact" and c ** (batch_size) > MAX_CONFIGS:
        raise CapacityError(f"{c}**{batch_size} label configurations exceed {MAX_CONFIGS}")
    if mode not in ("exact", "mc"):
        raise DomainError(f"unknown mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng(0)

    point_cond = entropy(p).mean(axis=0)  # (N,)
    available = np.ones(n, dtype=bool)
    if candidates is not None:
        available[:] = False
        available[np.asarray(candidates, dtype=int)] = True
    selected: list[int] = []
    gains: list[float] = []
    cond_sum = 0.0
    prev = 0.0
    table = np.ones((s, 1))
    for _ in range(batch_size):
        if mode == "exact" or not selected:
            h = _exact_greedy_entropy(table, p)
        else:
            h = _mc_greedy_entropy(p, selected, mc_configs, rng)
        scores = h - (cond_sum + point_cond)
        scores = np.where(available, scores, -np.inf)
        best = int(np.argmax(scores))
        selected.append(best)
        available[best] = False
        cond_sum += point_cond[best]
        gains.append(float(scores[best] - prev))
        prev = float(scores[best])
        if mode == "exact":
            table = (table[:, :, None] * p[:, best, None, :]).reshape(s, -1)
    return AcquisitionScore(prev, selected, gains)


def _exact_greedy_entropy(table, p, max_entries=2**22):
    """Joint entropy of (selected, candidate) for every candidate, exactly."""
    s, n, c = p.shape
    k = table.shape[1]
    chunk = max(1, max_entries // (k * c))
    h = np.empty(n)
    for lo in range(0, n, chunk):
        # joint over (selected configuration, candidate label)
        joint = np.einsum("sk,snc->nkc", table, p[:, lo:lo + chunk], optimize=True) / s
        h[lo:lo + chunk] = entropy(joint.reshape(joint.shape[0], -1))
    return h


def _mc_greedy_entropy(p, selected, n_configs, rng):
    """Joint entropy of (selected, candidate) for every candidate.

    Configurations of the selected points are drawn from the plug-in joint;
    for each, the candidate's label distribution is summed out exactly:
    H = E_y[-sum_c P(y, c)/P(y) log P(y, c)].
    """
    s = p.shape[0]
    sub = p[:, selected, :]
    sidx = rng.integers(0, s, size=n_configs)
    cum = np.cumsum(sub[sidx], axis=-1)
    u = rng.random((n_configs, len(selected), 1))
    ys = np.minimum((u > cum).sum(axis=-1), p.shape[2] - 1)
    w = np.ones((s, n_configs))
    for k in range(len(selected)):
        w *= sub[:, k, ys[:, k]]
    py = w.mean(axis=0)  # (M,)
    joint = np.einsum("sm,snc->nmc", w, p, optimize=True) / s  # (N, M, C)
    cond = joint / py[None, :, None]
    # -log P(y, c) = -log P(y) - log P(c | y)
    h = -np.sum(cond * np.log(np.clip(joint, 1e-300, None)), axis=-1)
    return h.mean(axis=1)


def bbb_score(cov: ClassProbCov) -> float:
    """Sum over classes of log det of the jittered probability covariance.

    A failed Cholesky factorisation is retried with ten times the jitter, at
    most three times.
    """
    scale = 1.0
    for attempt in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            total = 0.0
            for m in cov.jittered(scale):
                L = linalg.cholesky(m, lower=True)
                total += 2.0 * float(np.sum(np.log(np.diag(L))))
            return total
        except linalg.LinAlgError:
            scale *= 10.0
    raise MatrixError("probability covariance is not positive definite after jitter escalation")
