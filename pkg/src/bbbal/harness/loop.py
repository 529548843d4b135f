"""Pool-based active-learning loop with per-round bookkeeping."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..acquisition import bald_scores, batchbald_greedy
from ..errors import BBBError, ConfigError, DomainError
from ..gp import Dataset, KernelParams, fit_laplace, posterior_joint
from ..probcov import sample_gp_probs
from ..selection import AnalyticGPOracle, SampledOracle, greedy_logdet_select
from .data import TOY_KERNEL, make_blobs, make_toy_1d
from .surrogate import RffConfig, fit_rff_softmax, sample_probs

SURROGATES = ("gp-probit", "rff-softmax")
ACQUISITIONS = ("bbb", "batchbald", "bald-topB", "random")
DATASETS = ("toy", "blobs", "csv")


@dataclass
class LoopConfig:
    """Resolved settings of one experiment.

    ``dataset`` is a dict with a ``kind`` key (toy, blobs or csv) plus the
    generator's keyword arguments; a csv dataset needs ``path``. ``kernel``
    and ``rff`` hold surrogate hyperparameters. ``cov_mode`` picks the
    analytic or sampled covariance route for bbb with the GP surrogate.
    The run lasts ``max(rounds, ceil((min_points - initial_count) / B))``
    rounds, or until the pool runs out.
    """

    dataset: dict = field(default_factory=lambda: {"kind": "blobs"})
    surrogate: str = "rff-softmax"
    acquisition: str = "bbb"
    initial_count: int = 20
    batch_size: int = 10
    rounds: int = 10
    min_points: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    sample_count: int = 100
    mc_configs: int = 1000
    test_fraction: float = 0.3
    cov_mode: str = "analytic"
    shrink: bool = True
    kernel: dict = field(default_factory=dict)
    rff: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.dataset, dict) or self.dataset.get("kind") not in DATASETS:
            raise ConfigError("dataset.kind", f"must be one of {DATASETS}")
        if self.dataset["kind"] == "csv" and "path" not in self.dataset:
            raise ConfigError("dataset.path", "required for a csv dataset")
        if self.surrogate not in SURROGATES:
            raise ConfigError("surrogate", f"must be one of {SURROGATES}")
        if self.acquisition not in ACQUISITIONS:
            raise ConfigError("acquisition", f"must be one of {ACQUISITIONS}")
        for name in ("initial_count", "batch_size", "rounds"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {v!r}")
        if not isinstance(self.min_points, int) or self.min_points < 0:
            raise ConfigError("min_points", "must be a nonnegative integer")
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise ConfigError("seeds", "must be a nonempty list of nonnegative integers")
        if not isinstance(self.sample_count, int) or self.sample_count < 2:
            raise ConfigError("sample_count", "must be an integer >= 2")
        if not isinstance(self.mc_configs, int) or self.mc_configs < 1:
            raise ConfigError("mc_configs", "must be an integer >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction", "must lie in (0, 1)")
        if self.cov_mode not in ("analytic", "sampled"):
            raise ConfigError("cov_mode", "must be 'analytic' or 'sampled'")
        default_classes = {"toy": 2, "blobs": 4, "csv": 2}[self.dataset["kind"]]
        if self.surrogate == "gp-probit" and self.dataset.get("n_classes", default_classes) != 2:
            raise ConfigError("surrogate", "gp-probit needs a binary dataset")
        try:
            self.kernel_params()
        except (DomainError, TypeError) as exc:
            raise ConfigError("kernel", str(exc)) from exc
        try:
            self.rff_config()
        except (DomainError, TypeError) as exc:
            raise ConfigError("rff", str(exc)) from exc

    def kernel_params(self) -> KernelParams:
        if not self.kernel:
            return TOY_KERNEL
        return KernelParams(**self.kernel)

    def rff_config(self) -> RffConfig:
        return RffConfig(**self.rff)

    @property
    def total_rounds(self) -> int:
        extra = max(self.min_points - self.initial_count, 0)
        return max(self.rounds, math.ceil(extra / self.batch_size))

    @classmethod
    def from_dict(cls, d: dict) -> "LoopConfig":
        if not isinstance(d, dict):
            raise ConfigError("config", "must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RoundRecord:
    round: int
    labeled_count: int
    accuracy: float
    acq_seconds: float
    score: float
    indices: list


@dataclass
class LoopHistory:
    """Per-round results of one seeded run.

    ``indices`` refer to rows of the original pool. ``initial_accuracy`` is
    measured after fitting on the initial labelled set only.
    """

    seed: int
    initial_count: int
    initial_accuracy: float
    records: list = field(default_factory=list)
    exhausted: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "labeled_count", "accuracy", "acq_seconds", "score", "indices"])
        for r in self.records:
            w.writerow([
                r.round, r.labeled_count, f"{r.accuracy:.9g}", f"{r.acq_seconds:.9g}",
                f"{r.score:.9g}", ";".join(str(i) for i in r.indices),
            ])
        return buf.getvalue()

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy if self.records else self.initial_accuracy


@dataclass
class Split:
    """Initial labelled rows, the unlabelled pool (labels hidden) and the test set."""

    initial: Dataset
    pool: Dataset
    test: Dataset


def read_csv_dataset(path: str) -> Dataset:
    """Load feature columns plus an integer ``label`` column (header required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "label" not in header:
            raise ConfigError("dataset.path", "CSV needs a header with a 'label' column")
        rows = [r for r in reader if r]
    li = header.index("label")
    try:
        x = np.array([[float(v) for k, v in enumerate(r) if k != li] for r in rows])
        y = np.array([int(r[li]) for r in rows])
    except ValueError as exc:
        raise ConfigError("dataset.path", f"malformed CSV: {exc}") from exc
    n_classes = int(y.max()) + 1 if len(y) else 2
    return Dataset(x.reshape(len(rows), -1), y, max(n_classes, 2))


def write_csv_dataset(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{k}" for k in range(data.dim)] + ["label"])
    for xi, yi in zip(data.inputs, data.labels):
        w.writerow([f"{v:.9g}" for v in xi] + [int(yi)])
    return buf.getvalue()


def build_split(cfg: LoopConfig, seed: int) -> Split:
    """Materialise the dataset and split it for one seed.

    The toy comes with its own labelled clusters, pool and test set. Other
    datasets are split into a held-out test fraction, then ``initial_count``
    labelled rows, with the rest forming the pool.
    """
    spec = {k: v for k, v in cfg.dataset.items() if k != "kind"}
    kind = cfg.dataset["kind"]
    try:
        if kind == "toy":
            toy = make_toy_1d(**{"seed": seed, **spec})
            return Split(toy.train, toy.pool, toy.test)
        if kind == "blobs":
            data = make_blobs(**{"seed": seed, **spec})
        else:
            data = read_csv_dataset(spec["path"])
    except TypeError as exc:
        raise ConfigError("dataset", str(exc)) from exc
    except DomainError as exc:
        raise ConfigError("dataset", str(exc)) from exc

    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    order = rng.permutation(len(data))
    n_test = int(round(cfg.test_fraction * len(data)))
    if len(data) - n_test <= cfg.initial_count:
        raise ConfigError("initial_count", "leaves no pool after the test split")
    test = data.subset(order[:n_test])
    initial = data.subset(order[n_test:n_test + cfg.initial_count])
    pool = data.subset(order[n_test + cfg.initial_count:])
    return Split(initial, pool, test)


class _Model:
    """Uniform wrapper over the two surrogates."""

    def __init__(self, cfg: LoopConfig, labelled: Dataset, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        if cfg.surrogate == "gp-probit":
            self.gp = fit_laplace(labelled, cfg.kernel_params())
            self.rff = None
        else:
            self.gp = None
            self.rff = fit_rff_softmax(labelled, cfg.rff_config(), rng, dim=labelled.dim)

    def predict_labels(self, x) -> np.ndarray:
        if self.gp is not None:
            return (self.gp.predict_proba(x) > 0.5).astype(int)
        return np.argmax(self.rff.predict_proba(x), axis=1)

    def sample(self, x, n_samples) -> np.ndarray:
        if self.gp is not None:
            return sample_gp_probs(posterior_joint(self.gp, x), n_samples, self.rng).samples
        return sample_probs(self.rff, x, n_samples, self.rng).samples


def select_batch(cfg: LoopConfig, model: _Model, pool_x: np.ndarray, batch_size: int,
                 rng: np.random.Generator):
    """Pick ``batch_size`` rows of ``pool_x``; returns (indices, score)."""
    acq = cfg.acquisition
    if acq == "random":
        idx = rng.choice(len(pool_x), size=batch_size, replace=False)
        return [int(i) for i in idx], 0.0
    if acq == "bbb" and model.gp is not None and cfg.cov_mode == "analytic":
        res = greedy_logdet_select(AnalyticGPOracle(model.gp, pool_x), None, batch_size)
        return res.indices, res.score
    samples = model.sample(pool_x, cfg.sample_count)
    if acq == "bbb":
        oracle = SampledOracle(samples, rng, shrink=cfg.shrink)
        res = greedy_logdet_select(oracle, None, batch_size)
        return res.indices, res.score
    if acq == "bald-topB":
        scores = bald_scores(samples)
        idx = np.argsort(-scores, kind="stable")[:batch_size]
        return [int(i) for i in idx], float(scores[idx].sum())
    res = batchbald_greedy(samples, batch_size, mode="mc", mc_configs=cfg.mc_configs, rng=rng)
    return res.batch, res.value


def accuracy(model: _Model, test: Dataset) -> float:
    return float(np.mean(model.predict_labels(test.inputs) == test.labels))


def run_loop(cfg: LoopConfig, seed: int | None = None) -> LoopHistory:
    """Run the active-learning loop for one seed (default: the first in ``cfg.seeds``).

    Each round selects a batch from the remaining pool, reveals its labels,
    refits the surrogate and records the test accuracy. Only the selection
    step, including any posterior sampling it needs, is timed.
    """
    seed = cfg.seeds[0] if seed is None else seed
    split = build_split(cfg, seed)
    fit_ss, acq_ss = np.random.SeedSequence([seed, 2]).spawn(2)
    fit_rng = np.random.default_rng(fit_ss)
    acq_rng = np.random.default_rng(acq_ss)

    labelled = split.initial
    model = _Model(cfg, labelled, fit_rng)
    hist = LoopHistory(seed, len(labelled), accuracy(model, split.test))
    remaining = np.arange(len(split.pool))
    try:
        _rounds(cfg, split, hist, model, remaining, labelled, fit_rng, acq_rng)
    except BBBError as exc:
        # Let callers flush the rounds that completed.
        exc.partial_history = hist
        raise
    return hist


def _rounds(cfg, split, hist, model, remaining, labelled, fit_rng, acq_rng):
    for r in range(1, cfg.total_rounds + 1):
        if len(remaining) < cfg.batch_size:
            hist.exhausted = True
            break
        t0 = time.perf_counter()
        local, score = select_batch(cfg, model, split.pool.inputs[remaining], cfg.batch_size,
                                    acq_rng)
        dt = time.perf_counter() - t0
        chosen = remaining[np.asarray(local, dtype=int)]
        remaining = np.setdiff1d(remaining, chosen)
        new = split.pool.subset(chosen)
        labelled = Dataset(np.vstack([labelled.inputs, new.inputs]),
                           np.concatenate([labelled.labels, new.labels]), labelled.n_classes)
        model = _Model(cfg, labelled, fit_rng)
        hist.records.append(RoundRecord(r, len(labelled), accuracy(model, split.test), dt,
                                        float(score), [int(i) for i in chosen]))


def run_experiment(cfg: LoopConfig) -> list:
    """One :func:`run_loop` per configured seed."""
    return [run_loop(cfg, s) for s in cfg.seeds]


def aggregate_histories(histories) -> str:
    """Mean accuracy against cumulative acquisition time, by round, as CSV.

    Runs that stopped early contribute only to the rounds they reached.
    """
    n_rounds = max((len(h.records) for h in histories), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "n_runs", "labeled_count", "mean_cum_acq_seconds",
                "mean_accuracy", "std_accuracy"])
    acc0 = np.array([h.initial_accuracy for h in histories])
    w.writerow([0, len(histories), histories[0].initial_count if histories else 0,
                f"{0.0:.9g}", f"{acc0.mean():.9g}", f"{acc0.std():.9g}"])
    cum = {id(h): 0.0 for h in histories}
    for r in range(n_rounds):
        acc, times, counts = [], [], []
        for h in histories:
            if r < len(h.records):
                rec = h.records[r]
                cum[id(h)] += rec.acq_seconds
                acc.append(rec.accuracy)
                times.append(cum[id(h)])
                counts.append(rec.labeled_count)
        acc = np.array(acc)
        w.writerow([r + 1, len(acc), counts[0], f"{np.mean(times):.9g}",
                    f"{acc.mean():.9g}", f"{acc.std():.9g}"])
    return buf.getvalue()


def manifest(cfg: LoopConfig, seed_override: int | None = None) -> str:
    d = {"config": cfg.to_dict(), "seed_override": seed_override}
    return json.dumps(d, indent=2, sort_keys=True)
