"""Experiment harness: the accuracy metric, seeded grid runner, and
CSV/plot-data emission.

A grid sweeps exactly one parameter; for every swept value and trial the
harness generates data, builds affinities, produces one initial
configuration, and runs every algorithm from that identical starting
point, so differences isolate the boosting behavior. Trials are
independent with per-trial seed streams derived from (seed base, sweep
index, trial index) and may run in parallel processes.
"""

from __future__ import annotations

import csv
import logging
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .boost import run_boost
from .consistency import overall_consistency
from .core import ScoreNormalizer, total_score
from .pairwise import SolverOptions, solve_pairwise
from .synthgen import (SynthParams, build_affinity_set, gen_random_graphs,
                       gen_random_points, init_config, load_pointset,
                       truth_config)

log = logging.getLogger(__name__)

GENERATORS = ("random_graph", "random_point", "file")
CSV_HEADER = ("algorithm,swept_param,swept_value,trial_mean_acc,acc_std,"
              "mean_time_s,mean_consistency,mean_score")
WORKERS_ENV = "MGMBOOST_THREADS"


@dataclass(frozen=True)
class ExperimentSpec:
    generator: str
    base: SynthParams
    sweep_param: str
    sweep_values: tuple
    algorithms: tuple              # of (name, BoostParams)
    trials: int = 50
    seed_base: int = 0
    affinity: str = "gauss"        # or "len_angle"
    beta_w: float = 0.9
    file_path: str | None = None
    solver_opts: SolverOptions = SolverOptions()

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}")
        if self.sweep_param not in {f.name for f in fields(SynthParams)}:
            raise ValueError(f"unknown swept parameter {self.sweep_param!r}")
        if not self.sweep_values:
            raise ValueError("need at least one swept value")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.generator == "file" and not self.file_path:
            raise ValueError("file generator needs file_path")
        if not self.algorithms:
            raise ValueError("need at least one algorithm")


@dataclass(frozen=True)
class ResultRow:
    algorithm: str
    swept_param: str
    swept_value: float
    trial_mean_acc: float
    acc_std: float
    mean_time_s: float
    mean_consistency: float
    mean_score: float

    def __post_init__(self):
        if not 0.0 <= self.trial_mean_acc <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


def inlier_rows_from_instances(instances):
    """Per-graph index arrays of the rows that are common inliers."""
    return [g.inlier_rows for g in instances]


def accuracy(cfg_alg, cfg_truth, inlier_rows):
    """Mean per-pair matching accuracy against ground truth, counting
    only rows that are common inliers; correspondences involving outlier
    rows are ignored entirely."""
    if cfg_alg.N != cfg_truth.N or cfg_alg.n != cfg_truth.n:
        raise ValueError("algorithm and truth configurations differ in shape")
    alg = cfg_alg.perm_table()
    tru = cfg_truth.perm_table()
    total = 0.0
    count = 0
    for i in range(cfg_alg.N - 1):
        rows = np.asarray(inlier_rows[i], dtype=np.int64)
        for j in range(i + 1, cfg_alg.N):
            total += float((alg[i, j][rows] == tru[i, j][rows]).sum()) / rows.size
            count += 1
    return total / count


def _coerce(base, name, value):
    kind = {f.name: f.type for f in fields(SynthParams)}[name]
    return int(value) if kind in ("int", int) else float(value)


def _make_instances(spec, params, data_seed):
    if spec.generator == "random_graph":
        return gen_random_graphs(params)
    if spec.generator == "random_point":
        return gen_random_points(params)
    return load_pointset(spec.file_path, n_inliers=params.inliers,
                         n_outliers=params.outliers, seed=data_seed,
                         max_frames=params.n_graphs)


def _run_trial(spec, sweep_idx, trial):
    """One (swept value, trial) cell: returns {algorithm: metrics} or None
    when generation/solving fails (logged, trial dropped)."""
    value = spec.sweep_values[sweep_idx]
    seeds = np.random.SeedSequence([spec.seed_base, sweep_idx, trial]).generate_state(3)
    data_seed, init_seed, boost_seed = (int(s) for s in seeds)
    try:
        params = replace(spec.base, seed=data_seed,
                         **{spec.sweep_param: _coerce(spec.base, spec.sweep_param, value)})
        instances = _make_instances(spec, params, data_seed)
        kset = build_affinity_set(instances, params.sigma2, kind=spec.affinity,
                                  beta_w=spec.beta_w)
        solver = lambda k: solve_pairwise(k, spec.solver_opts)
        cfg0 = init_config(kset, params.coverage, init_seed, solver)
        cfg_truth = truth_config(instances)
        rows = inlier_rows_from_instances(instances)
        norm = ScoreNormalizer.from_initial(cfg0, kset)
    except Exception:
        log.warning("trial (%s=%s, trial %d) aborted during setup",
                    spec.sweep_param, value, trial, exc_info=True)
        return None
    out = {}
    for name, bp in spec.algorithms:
        run_params = replace(bp, seed=boost_seed)
        tic = time.perf_counter()
        cfg_out, _ = run_boost(cfg0, kset, run_params)
        elapsed = time.perf_counter() - tic
        out[name] = (accuracy(cfg_out, cfg_truth, rows), elapsed,
                     overall_consistency(cfg_out),
                     total_score(cfg_out, kset) / norm.value)
    return out


def run_experiment(spec, workers=None):
    """Run the whole grid and aggregate one ResultRow per (algorithm,
    swept value). Deterministic given the seed base, except wall times."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    cells = [(si, tr) for si in range(len(spec.sweep_values)) for tr in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, [spec] * len(cells),
                                    [c[0] for c in cells], [c[1] for c in cells]))
    else:
        results = [_run_trial(spec, si, tr) for si, tr in cells]

    by_value = {si: [] for si in range(len(spec.sweep_values))}
    for (si, _), res in zip(cells, results):
        if res is not None:
            by_value[si].append(res)

    rows = []
    for si, value in enumerate(spec.sweep_values):
        trials = by_value[si]
        if not trials:
            log.warning("all trials failed for %s=%s; row dropped", spec.sweep_param, value)
            continue
        for name, _ in spec.algorithms:
            accs = np.array([t[name][0] for t in trials])
            times = np.array([t[name][1] for t in trials])
            cons = np.array([t[name][2] for t in trials])
            scores = np.array([t[name][3] for t in trials])
            rows.append(ResultRow(name, spec.sweep_param, float(value),
                                  float(accs.mean()), float(accs.std()),
                                  float(times.mean()), float(cons.mean()),
                                  float(scores.mean())))
    return rows


def _fmt(x):
    return f"{x:.12g}"


def emit_csv(rows, path):
    """Write rows under the fixed documented header."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER.split(","))
            for r in rows:
                writer.writerow([r.algorithm, r.swept_param, _fmt(r.swept_value),
                                 _fmt(r.trial_mean_acc), _fmt(r.acc_std),
                                 _fmt(r.mean_time_s), _fmt(r.mean_consistency),
                                 _fmt(r.mean_score)])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def emit_plotdata(rows, prefix):
    """One x/y series file per algorithm, consumable by any plotting tool.
    Returns the written paths."""
    by_alg = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, []).append(r)
    paths = []
    for alg, series in by_alg.items():
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", alg)
        path = f"{prefix}_{safe}.csv"
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["swept_value", "trial_mean_acc", "acc_std", "mean_time_s"])
                for r in sorted(series, key=lambda r: r.swept_value):
                    writer.writerow([_fmt(r.swept_value), _fmt(r.trial_mean_acc),
                                     _fmt(r.acc_std), _fmt(r.mean_time_s)])
        except OSError as exc:
            raise OSError(f"cannot write plot data to {path}: {exc}") from exc
        paths.append(path)
    return paths
