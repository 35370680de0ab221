"""Ratio-versus-projection-dimension experiments.

Each task sweeps the projection dimension ``t`` (``t1 = t2 = t``), runs the
distributed pipeline, and reports its cost divided by a baseline computed
once on the global data: exact top-``r`` SVD for low-rank approximation,
Lloyd's method for k-means, and exact top-``t`` PCR for regression.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import csv
import json
import logging
import math
import os
import time

import numpy as np
import scipy.sparse as sp

from ._random import derive_seed
from .clustering import distributed_kmeans, kmeans_cost, lloyd, pcr
from .datasets import (
    load_dataset,
    make_gaussian_mixture,
    make_low_rank_plus_noise,
    make_regression,
)
from .exceptions import ParameterError
from .linalg import Subspace, dist_sq, frobenius_sq, svd
from .protocol import DisPcaParams, SketchConfig, dispca, partition_powerlaw, worker_threads
from .rsvd import default_power_iterations
from .sketching import sketch_rows

log = logging.getLogger(__name__)

TASKS = ("lowrank", "kmeans", "pcr")
CSV_HEADER = ("projection_dim", "ratio", "wall_time_ms", "comm_words")
_DEFAULT_EPS = {"lowrank": 0.5, "kmeans": 0.3, "pcr": 0.5}


@dataclass
class ExperimentConfig:
    task: str
    dataset_path: str | None = None
    fmt: str = "csv-dense"
    s: int = 25
    alpha: float = 2.0
    rank: int = 10
    eps: float | None = None
    projection_dims: list = field(default_factory=lambda: [10, 20, 30, 40, 50])
    backend: str = "exact"
    repetitions: int = 5
    seed: int = 0
    output_path: str | None = None
    timeout: float = 600.0
    ell: int | None = None
    delta: float | None = None
    rsvd_q: int | None = None
    coreset_size: int = 200
    record_time: bool = True
    synthetic_rows: int = 2000
    synthetic_cols: int = 50
    target_column: int = -1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ParameterError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.backend not in ("exact", "fast"):
            raise ParameterError(f"backend must be 'exact' or 'fast', got {self.backend!r}")
        if not self.projection_dims:
            raise ParameterError("projection_dims must be non-empty")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be >= 1")
        if self.s < 1 or self.rank < 1:
            raise ParameterError("s and rank must be >= 1")
        if self.eps is None:
            self.eps = _DEFAULT_EPS[self.task]
        self.projection_dims = [int(t) for t in self.projection_dims]

    def dispca_params(self, t, d, seed, broadcast=False):
        if self.backend == "exact":
            return DisPcaParams(t, t, seed=seed, broadcast=broadcast)
        ell = self.ell if self.ell is not None else sketch_rows(d, self.eps)
        q = self.rsvd_q if self.rsvd_q is not None else default_power_iterations(d, self.s, self.rank, self.eps)
        sketch = SketchConfig(ell, min(self.eps, 0.5), self.delta)
        return DisPcaParams(t, t, "randomized", sketch, q, seed, broadcast)


@dataclass(frozen=True)
class ResultRow:
    projection_dim: int
    ratio: float
    wall_time_ms: float
    comm_words: int
    seed: int


def load_task_data(cfg):
    """Centered data for ``cfg`` (plus targets for PCR).

    Without a dataset path a synthetic stand-in of size
    ``synthetic_rows x synthetic_cols`` is generated.
    """
    if cfg.dataset_path is None:
        n, d = cfg.synthetic_rows, cfg.synthetic_cols
        if cfg.task == "lowrank":
            return make_low_rank_plus_noise(n, d, rank=min(2 * cfg.rank, d), noise=0.3, decay=0.5, seed=cfg.seed), None
        if cfg.task == "kmeans":
            return make_gaussian_mixture(n, d, cfg.rank, separation=6.0, seed=cfg.seed)[0], None
        return make_regression(n, d, rank=min(cfg.rank, d), seed=cfg.seed)
    data = load_dataset(cfg.dataset_path, cfg.fmt)
    if cfg.task == "pcr" or cfg.fmt == "libsvm":
        if data.shape[1] < 2:
            raise ParameterError("need at least one feature column besides the target")
        col = cfg.target_column % data.shape[1]
        x, y = np.delete(data, col, axis=1), data[:, col]
    else:
        x, y = data, None
    x = x - x.mean(axis=0)
    if y is not None:
        y = y - y.mean()
    return x, (y if cfg.task == "pcr" else None)


ZERO_COST = 1e-12


def _ratio(value, baseline, scale):
    """``value / baseline`` where costs below ``ZERO_COST * scale`` count as exact zeros."""
    floor = ZERO_COST * scale
    if baseline <= floor:
        return 1.0 if value <= floor else math.inf
    return value / baseline


def _note(report, baseline):
    if report is not None:
        report["baseline"] = baseline


def _check_dims(cfg, d, minimum):
    for t in cfg.projection_dims:
        if not minimum <= t <= d:
            raise ParameterError(f"projection dim {t} must lie in [{minimum}, {d}]")


def _sweep(cfg, evaluate):
    """Run ``evaluate(t, rep_seed) -> (metric, comm_words)`` over the sweep."""
    reps = 1 if cfg.backend == "exact" else cfg.repetitions
    start = time.perf_counter()
    rows = []
    threads = worker_threads()
    for t in cfg.projection_dims:
        if time.perf_counter() - start > cfg.timeout:
            log.warning("timeout of %.0f s reached; skipping projection dims from %d on", cfg.timeout, t)
            break

        def one(rep, t=t):
            tic = time.perf_counter()
            metric, words = evaluate(t, derive_seed(cfg.seed, t, rep))
            return metric, words, (time.perf_counter() - tic) * 1e3

        if threads > 1 and reps > 1:
            with ThreadPoolExecutor(max_workers=min(threads, reps)) as pool:
                results = list(pool.map(one, range(reps)))
        else:
            results = [one(rep) for rep in range(reps)]
        ratios, words, times = zip(*results)
        if len(set(words)) != 1:
            raise RuntimeError("communication varied across repetitions")
        wall = float(np.mean(times)) if cfg.record_time else 0.0
        rows.append(ResultRow(t, float(np.mean(ratios)), wall, int(words[0]), int(cfg.seed)))
    return rows


def run_lowrank(cfg, data=None, report=None):
    """Rank-``r`` approximation error of the distributed subspace over the exact global optimum."""
    p = load_task_data(cfg)[0] if data is None else data
    n, d = p.shape
    r = cfg.rank
    _check_dims(cfg, d, r)
    partition = partition_powerlaw(p, min(cfg.s, n), cfg.alpha, seed=cfg.seed)
    dense = p.toarray() if sp.issparse(p) else p
    baseline = dist_sq(p, svd(dense).v[:, :r])
    scale = frobenius_sq(p)
    _note(report, baseline)

    def evaluate(t, seed):
        result = dispca(partition, cfg.dispca_params(t, d, seed))
        return _ratio(dist_sq(p, result.subspace.leading(r)), baseline, scale), result.transcript.total_words

    return _sweep(cfg, evaluate)


def run_kmeans(cfg, data=None, report=None):
    """k-means cost of the distributed pipeline over best-of-repetitions Lloyd on the global data."""
    p = load_task_data(cfg)[0] if data is None else np.asarray(data, dtype=np.float64)
    n, d = p.shape
    k = cfg.rank
    _check_dims(cfg, d, 1)
    partition = partition_powerlaw(p, min(cfg.s, n), cfg.alpha, seed=cfg.seed)
    baseline = lloyd(p, k, seed=derive_seed(cfg.seed, 1), n_init=max(cfg.repetitions, 1)).cost
    _note(report, baseline)
    scale = frobenius_sq(p)
    eps = min(cfg.eps, 0.3)

    def evaluate(t, seed):
        params = cfg.dispca_params(t, d, seed, broadcast=True)
        sol, transcript = distributed_kmeans(partition, k, eps, cfg.coreset_size, seed=seed, dispca_params=params)
        return _ratio(kmeans_cost(p, sol.centers), baseline, scale), transcript.total_words

    return _sweep(cfg, evaluate)


def run_pcr(cfg, data=None, report=None):
    """PCR error through the distributed subspace over PCR through the exact global top-``t`` subspace."""
    if data is None:
        x, y = load_task_data(cfg)
    else:
        x, y = data
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    _check_dims(cfg, d, 1)
    partition = partition_powerlaw(x, min(cfg.s, n), cfg.alpha, seed=cfg.seed)
    v = svd(x).v
    baselines = {t: pcr(x, y, Subspace(v[:, :t]), ridge=0.0).fit_error for t in cfg.projection_dims}
    _note(report, {str(t): b for t, b in baselines.items()})
    scale = float(np.sqrt(np.mean(np.asarray(y) ** 2)))

    def evaluate(t, seed):
        result = dispca(partition, cfg.dispca_params(t, d, seed))
        fit = pcr(x, y, result.subspace, ridge=0.0)
        return _ratio(fit.fit_error, baselines[t], scale), result.transcript.total_words

    return _sweep(cfg, evaluate)


RUNNERS = {"lowrank": run_lowrank, "kmeans": run_kmeans, "pcr": run_pcr}


def run(cfg, data=None, report=None):
    """Dispatch on ``cfg.task``; ``report``, if given, receives the baseline cost."""
    return RUNNERS[cfg.task](cfg, data, report)


def _paths(output_path):
    base, ext = os.path.splitext(os.fspath(output_path))
    if ext.lower() not in (".json", ".csv"):
        base = os.fspath(output_path)
    return base + ".json", base + ".csv"


def emit_results(rows, output_path, config=None, baseline=None):
    """Write ``<base>.json`` (full fidelity) and ``<base>.csv`` (plot columns).

    The JSON also records ``config`` and the cached ``baseline`` when given.

    Returns the two paths written.
    """
    if not rows:
        raise ParameterError("no result rows to write")
    json_path, csv_path = _paths(output_path)
    payload = {"rows": [asdict(r) for r in rows]}
    if config is not None:
        payload["config"] = asdict(config)
    if baseline is not None:
        payload["baseline"] = baseline
    try:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow([r.projection_dim, repr(r.ratio), repr(r.wall_time_ms), r.comm_words])
    except OSError as exc:
        raise OSError(f"cannot write results to {json_path!r}/{csv_path!r}: {exc}") from exc
    return json_path, csv_path


def read_results(path):
    json_path, _ = _paths(path)
    with open(json_path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return [ResultRow(**row) for row in payload["rows"]]
