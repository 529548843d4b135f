"""Command-line entry point.

Subcommands read a JSON config (``--config``), write CSV and JSON files
into ``--out`` and exit with 0 on success, 2 on a config error, 3 on a
numerical failure and 4 when a capacity guard trips.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .acquisition import MAX_CONFIGS, batchbald_greedy, batchbald_joint_score, bbb_score
from .errors import BBBError, CapacityError, ConfigError
from .gp import KernelParams, fit_laplace, posterior_joint
from .harness.data import TOY_KERNEL, TOY_SEED, make_blobs, make_toy_1d
from .harness.loop import (
    LoopConfig, LoopHistory, RoundRecord, aggregate_histories, run_loop, write_csv_dataset,
)
from .harness.surrogate import RffConfig, fit_rff_softmax, sample_probs
from .probcov import ClassProbCov, default_jitter, probit_cov_matrix, sample_gp_probs
from .selection import SampledOracle, greedy_logdet_select, grid_joint_maximize

log = logging.getLogger("bbbal")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAPACITY = 0, 2, 3, 4


def fmt(v: float) -> str:
    return f"{v:.9g}"


def _round9(obj):
    """Recursively round floats to 9 significant digits for JSON output."""
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round9(obj.item())
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_round9(obj), indent=2, sort_keys=True) + "\n")


def _check_keys(cfg: dict, allowed, prefix=""):
    for key in cfg:
        if key not in allowed:
            raise ConfigError(prefix + key, "unknown field")


def _get(cfg: dict, key: str, default, kind, check=None, msg=""):
    v = cfg.get(key, default)
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
        raise ConfigError(key, f"expected {kind.__name__}, got {v!r}")
    if check is not None and not check(v):
        raise ConfigError(key, msg)
    return v


# -- datagen ---------------------------------------------------------------

def cmd_datagen(cfg: dict, out: Path, seed: int | None) -> dict:
    """Write the configured synthetic dataset as CSV files."""
    _check_keys(cfg, {"dataset"})
    spec = dict(cfg.get("dataset", {"kind": "toy"}))
    kind = spec.pop("kind", None)
    if kind not in ("toy", "blobs"):
        raise ConfigError("dataset.kind", "must be 'toy' or 'blobs'")
    s = spec.pop("seed", TOY_SEED if kind == "toy" else 0)
    s = s if seed is None else seed
    try:
        if kind == "toy":
            toy = make_toy_1d(s, **spec)
            files = {"train.csv": toy.train, "pool.csv": toy.pool, "test.csv": toy.test}
        else:
            files = {"data.csv": make_blobs(s, **spec)}
    except TypeError as exc:
        raise ConfigError("dataset", str(exc)) from exc
    for name, data in files.items():
        (out / name).write_text(write_csv_dataset(data))
    manifest = {"subcommand": "datagen", "dataset": {"kind": kind, **spec}, "seed": s,
                "files": sorted(files)}
    write_json(out / "manifest.json", manifest)
    return manifest


# -- landscape -------------------------------------------------------------

LANDSCAPE_KEYS = {"toy", "kernel", "grid_size", "sample_count"}


def landscape_data(cfg: dict, seed: int):
    """Fit the toy GP and score every ordered pair on the grid.

    Returns (axis, gp table rows, batchbald (x1, x2, grid), bbb (x1, x2, grid)).
    """
    _check_keys(cfg, LANDSCAPE_KEYS)
    toy_kw = cfg.get("toy", {})
    if not isinstance(toy_kw, dict):
        raise ConfigError("toy", "must be an object")
    _check_keys(toy_kw, {"n_noisy", "n_clean", "noisy_spread", "clean_spread"}, "toy.")
    g = _get(cfg, "grid_size", 101, int, lambda v: v >= 2, "must be >= 2")
    n_samples = _get(cfg, "sample_count", 4000, int, lambda v: v >= 2, "must be >= 2")
    try:
        kernel = KernelParams(**cfg["kernel"]) if "kernel" in cfg else TOY_KERNEL
    except (TypeError, BBBError) as exc:
        raise ConfigError("kernel", str(exc)) from exc
    try:
        toy = make_toy_1d(seed, grid_size=g, **toy_kw)
    except (TypeError, BBBError) as exc:
        raise ConfigError("toy", str(exc)) from exc

    model = fit_laplace(toy.train, kernel)
    axis = toy.grid
    post = posterior_joint(model, axis[:, None])
    prob = model.predict_proba(axis[:, None])
    gp_rows = [(x, m, post.S[i, i], p) for i, (x, m, p) in enumerate(zip(axis, post.mu, prob))]

    ia = {x: k for k, x in enumerate(axis)}
    samples = sample_gp_probs(post, n_samples, np.random.default_rng(seed)).samples
    bb = grid_joint_maximize(
        lambda a, b: batchbald_joint_score(samples[:, [ia[a], ia[b]], :]), axis)

    cov = probit_cov_matrix(post.mu, post.S)
    jit = default_jitter(cov)

    def bbb_pair(a, b):
        i, j = ia[a], ia[b]
        m = cov[np.ix_([i, j], [i, j])]
        return bbb_score(ClassProbCov([m, m], jit))

    bbb = grid_joint_maximize(bbb_pair, axis)
    return axis, gp_rows, bb, bbb


def cmd_landscape(cfg: dict, out: Path, seed: int | None) -> dict:
    s = TOY_SEED if seed is None else seed
    axis, gp_rows, bb, bbb = landscape_data(cfg, s)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "latent_mean", "latent_var", "prob"])
    for row in gp_rows:
        w.writerow([fmt(v) for v in row])
    (out / "gp_prediction.csv").write_text(buf.getvalue())
    (out / "batchbald_landscape.csv").write_text(bb[2].to_csv())
    (out / "bbb_landscape.csv").write_text(bbb[2].to_csv())
    summary = {
        "seed": s,
        "grid_size": len(axis),
        "batchbald": {"argmax": [bb[0], bb[1]], "coincident": bool(bb[0] == bb[1]),
                      "max": float(np.nanmax(np.where(bb[2].flagged, np.nan, bb[2].values)))},
        "bbb": {"argmax": [bbb[0], bbb[1]], "distinct": bool(bbb[0] != bbb[1]),
                "max": float(np.nanmax(np.where(bbb[2].flagged, np.nan, bbb[2].values)))},
    }
    write_json(out / "summary.json", summary)
    return summary


# -- run -------------------------------------------------------------------

def history_from_csv(text: str, seed: int = 0) -> LoopHistory:
    """Parse a run CSV written by :func:`history_to_csv`."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or rows[0]["round"] != "0":
        raise ConfigError("runs", "run CSV must start with a round-0 row")
    hist = LoopHistory(seed, int(rows[0]["labeled_count"]), float(rows[0]["accuracy"]))
    for r in rows[1:]:
        idx = [int(i) for i in r["indices"].split(";") if i]
        hist.records.append(RoundRecord(int(r["round"]), int(r["labeled_count"]),
                                        float(r["accuracy"]), float(r["acq_seconds"]),
                                        float(r["score"]), idx))
    return hist


def history_to_csv(hist: LoopHistory) -> str:
    """Run CSV with a leading round-0 row holding the initial fit."""
    body = hist.to_csv().split("\n", 1)
    zero = f"0,{hist.initial_count},{fmt(hist.initial_accuracy)},0,0,\n"
    return body[0] + "\n" + zero + body[1]


def _run_seed(cfg: LoopConfig, seed: int):
    """Returns (history or partial history, exception or None)."""
    try:
        return run_loop(cfg, seed), None
    except BBBError as exc:
        return getattr(exc, "partial_history", None), exc


def cmd_run(cfg: dict, out: Path, seed: int | None, threads: int) -> dict:
    loop_cfg = LoopConfig.from_dict(cfg)
    if seed is not None:
        # Shift the whole seed list so the number of runs is unchanged.
        loop_cfg.seeds = [seed + k for k in range(len(loop_cfg.seeds))]

    seeds = loop_cfg.seeds
    if threads > 1:
        # Separate processes: each seed owns its RNG streams and BLAS state.
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_seed, [loop_cfg] * len(seeds), seeds))
    else:
        results = [_run_seed(loop_cfg, s) for s in seeds]
    failures = [exc for _, exc in results if exc is not None]
    done = [h for h, _ in results if h is not None]
    for h in done:
        (out / f"run_seed{h.seed}.csv").write_text(history_to_csv(h))
    if done:
        (out / "aggregate.csv").write_text(aggregate_histories(done))
    manifest = {"subcommand": "run", "config": loop_cfg.to_dict(), "seed_override": seed,
                "runs": [f"run_seed{h.seed}.csv" for h in done],
                "exhausted": [h.seed for h in done if h.exhausted]}
    write_json(out / "manifest.json", manifest)
    if failures:
        raise failures[0]
    return manifest


def cmd_aggregate(cfg: dict, out: Path, seed: int | None) -> dict:
    """Combine run CSVs (``runs``: list of paths, or ``run_dir``) into one aggregate."""
    _check_keys(cfg, {"runs", "run_dir"})
    if "runs" in cfg:
        paths = [Path(p) for p in cfg["runs"]]
    elif "run_dir" in cfg:
        paths = sorted(Path(cfg["run_dir"]).glob("run_seed*.csv"))
    else:
        raise ConfigError("runs", "give a list of run CSVs or a run_dir")
    if not paths:
        raise ConfigError("runs", "no run CSVs found")
    hists = []
    for p in paths:
        try:
            hists.append(history_from_csv(p.read_text()))
        except OSError as exc:
            raise ConfigError("runs", f"cannot read {p}: {exc}") from exc
    (out / "aggregate.csv").write_text(aggregate_histories(hists))
    manifest = {"subcommand": "aggregate", "runs": [str(p) for p in paths]}
    write_json(out / "manifest.json", manifest)
    return manifest


# -- bench -----------------------------------------------------------------

BENCH_KEYS = {"pool_sizes", "batch_sizes", "n_classes", "sample_count", "repeats",
              "mc_configs", "batchbald_mode", "methods"}


def _bench_samples(n_pool, n_classes, n_samples, seed):
    """Sampled probabilities from an RFF surrogate fit on a few labelled blobs."""
    data = make_blobs(seed, n_classes, n_per_class=(n_pool + 40) // n_classes + 1)
    labelled = data.subset(np.arange(40))
    rng = np.random.default_rng(seed)
    model = fit_rff_softmax(labelled, RffConfig(), rng)
    return sample_probs(model, data.inputs[40:40 + n_pool], n_samples, rng).samples


def _positive_ints(v) -> bool:
    return len(v) > 0 and all(isinstance(x, int) and x >= 1 for x in v)


def cmd_bench(cfg: dict, out: Path, seed: int | None) -> dict:
    _check_keys(cfg, BENCH_KEYS)
    pools = _get(cfg, "pool_sizes", [500, 1000, 2000], list, _positive_ints, "positive integers")
    bs = _get(cfg, "batch_sizes", [1, 5, 10], list, _positive_ints, "positive integers")
    c = _get(cfg, "n_classes", 4, int, lambda v: v >= 2, "must be >= 2")
    s_count = _get(cfg, "sample_count", 100, int, lambda v: v >= 2, "must be >= 2")
    reps = _get(cfg, "repeats", 3, int, lambda v: v >= 1, "must be >= 1")
    mc = _get(cfg, "mc_configs", 1000, int, lambda v: v >= 1, "must be >= 1")
    mode = _get(cfg, "batchbald_mode", "mc", str, lambda v: v in ("mc", "exact"),
                "must be 'mc' or 'exact'")
    methods = _get(cfg, "methods", ["bbb", "batchbald-greedy"], list,
                   lambda v: set(v) <= {"bbb", "batchbald-greedy"} and v, "unknown method")
    s = 0 if seed is None else seed

    rows = []
    for n in pools:
        samples = _bench_samples(n, c, s_count, s)
        for b in bs:
            for method in methods:
                status, queries, times = "ok", "", []
                if b > n:
                    status = "skipped"
                elif method == "batchbald-greedy" and mode == "exact" and c**b > MAX_CONFIGS:
                    status = "skipped"
                else:
                    for r in range(reps):
                        rng = np.random.default_rng([s, n, b, r])
                        t0 = time.perf_counter()
                        if method == "bbb":
                            res = greedy_logdet_select(SampledOracle(samples, rng), None, b)
                            queries = res.queries
                        else:
                            try:
                                batchbald_greedy(samples, b, mode=mode, mc_configs=mc, rng=rng)
                            except CapacityError:
                                status = "skipped"
                                break
                        times.append(time.perf_counter() - t0)
                med = float(np.median(times)) if times else float("nan")
                rows.append({"method": method, "pool_size": n, "batch_size": b,
                             "n_classes": c, "sample_count": s_count, "median_seconds": med,
                             "queries": queries, "status": status})
                log.info("bench %s n=%d B=%d %s %.4gs", method, n, b, status, med)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["method", "pool_size", "batch_size", "n_classes", "sample_count",
            "median_seconds", "queries", "status"]
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r[k]) if isinstance(r[k], float) else r[k] for k in cols])
    (out / "bench.csv").write_text(buf.getvalue())

    scaling = []
    ok = {(r["method"], r["pool_size"], r["batch_size"]): r["median_seconds"]
          for r in rows if r["status"] == "ok"}
    for (m, n, b), t in sorted(ok.items()):
        if (m, 2 * n, b) in ok:
            scaling.append({"method": m, "batch_size": b, "pool_size": n,
                            "ratio": ok[(m, 2 * n, b)] / t})
    summary = {"subcommand": "bench", "seed": s, "rows": len(rows), "doubling": scaling,
               "bbb_max_doubling_ratio": max(
                   (x["ratio"] for x in scaling if x["method"] == "bbb"), default=None)}
    write_json(out / "scaling.json", summary)
    return summary


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bbbal", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=["datagen", "landscape", "run", "bench", "aggregate"])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="seed override (u64)")
    p.add_argument("--threads", type=int, default=1, help="worker and BLAS thread count")
    p.add_argument("--verbose", action="store_true")
    return p


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "must be a JSON object")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        cfg = load_config(args.config)
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("out", str(exc)) from exc
        with threadpool_limits(limits=args.threads):
            if args.subcommand == "datagen":
                cmd_datagen(cfg, out, args.seed)
            elif args.subcommand == "landscape":
                cmd_landscape(cfg, out, args.seed)
            elif args.subcommand == "run":
                cmd_run(cfg, out, args.seed, args.threads)
            elif args.subcommand == "bench":
                cmd_bench(cfg, out, args.seed)
            else:
                cmd_aggregate(cfg, out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity guard: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (BBBError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
