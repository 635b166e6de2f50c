"""Monte Carlo accuracy-versus-privacy sweep and its file outputs."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .engine import auto_rounds, run_batch
from .problem import global_optimum
from .rng import RandomStream
from .tuning import accuracy_bound, tune_multistart

log = logging.getLogger(__name__)

_TRIAL_STREAM = 10
_BOOTSTRAP_STREAM = 11
CHUNK = 1000


@dataclass(frozen=True, eq=False)
class EpsilonResult:
    epsilon: float
    params: object
    rounds: int
    sq_distances: np.ndarray
    flagged: int
    theoretical_d: float
    theoretical_d_conservative: float

    @property
    def finite(self) -> np.ndarray:
        return self.sq_distances[np.isfinite(self.sq_distances)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.finite))

    def percentile(self, q) -> float:
        return float(np.percentile(self.finite, q))


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    x_star: np.ndarray
    per_epsilon: tuple

    @property
    def seed(self) -> int:
        return self.config.seed


def params_for(config: ExperimentConfig, problem, eps):
    base = config.base_params().replace(epsilon=eps)
    if config.tuning == "fixed":
        return base
    return tune_multistart(problem.constants, problem.n, eps, starts=config.tuning_starts,
                           seed=config.seed, passes=config.tuning_passes,
                           initial=base).params


def rounds_for(config: ExperimentConfig, problem, params) -> int:
    if config.rounds != "auto":
        return int(config.rounds)
    return auto_rounds(params, problem.constants.C2, problem.n,
                       tol=config.round_tolerance, min_rounds=config.min_rounds)


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Sweep the privacy levels; trial ``k`` of level ``e`` draws its noise
    from ``RandomStream(seed, 10, e, k)`` so any trial can be rerun alone."""
    problem = config.build_problem()
    x0 = config.initial_state(problem)
    x_star = global_optimum(problem).x_star
    out = []
    for ei, eps in enumerate(config.epsilons):
        params = params_for(config, problem, eps)
        T = rounds_for(config, problem, params)
        sq = np.empty(config.trials)
        for lo in range(0, config.trials, CHUNK):
            hi = min(lo + CHUNK, config.trials)
            streams = [RandomStream(config.seed, _TRIAL_STREAM, ei, k) for k in range(lo, hi)]
            with np.errstate(all="ignore"):
                final = run_batch(problem, params, T, streams, x0=x0).final
                sq[lo:hi] = np.sum((final.mean(axis=1) - x_star) ** 2, axis=-1)
        bad = ~np.isfinite(sq)
        if bad.any():
            log.warning("epsilon=%g: %d trials produced non-finite values", eps, int(bad.sum()))
        bound = accuracy_bound(problem.constants, problem.n, params)
        res = EpsilonResult(eps, params, T, sq, int(bad.sum()), bound.d, bound.d_conservative)
        out.append(res)
        if progress is not None:
            progress(res)
    return ExperimentResult(config, x_star, tuple(out))


def bootstrap_upper(values, level=0.99, resamples=2000, seed=0) -> float:
    """One-sided upper confidence bound on the mean (percentile bootstrap)."""
    values = np.asarray(values, dtype=float)
    stream = RandomStream(seed, _BOOTSTRAP_STREAM)
    idx = (stream.uniforms((resamples, values.size)) * values.size).astype(np.int64)
    means = values[np.minimum(idx, values.size - 1)].mean(axis=1)
    return float(np.quantile(means, level))


def _fmt(v) -> str:
    return repr(float(v))


SUMMARY_COLUMNS = ["epsilon", "mean_d", "p5", "p50", "p95", "theoretical_d", "c", "q", "p",
                   "T", "seed", "theoretical_d_conservative", "flagged"]


def emit_csv(result: ExperimentResult, out_dir) -> tuple:
    """Write ``trials.csv`` and ``summary.csv``; return both paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        trials_path = out_dir / "trials.csv"
        summary_path = out_dir / "summary.csv"
        with trials_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "trial", "sq_distance"])
            for r in result.per_epsilon:
                for k, v in enumerate(r.sq_distances):
                    w.writerow([_fmt(r.epsilon), k, _fmt(v)])
        with summary_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for r in result.per_epsilon:
                w.writerow([_fmt(r.epsilon), _fmt(r.mean), _fmt(r.percentile(5)),
                            _fmt(r.percentile(50)), _fmt(r.percentile(95)),
                            _fmt(r.theoretical_d), _fmt(r.params.c), _fmt(r.params.q),
                            _fmt(r.params.p), r.rounds, result.seed,
                            _fmt(r.theoretical_d_conservative), r.flagged])
    except OSError as exc:
        raise OSError(f"cannot write results under {out_dir}: {exc.strerror}") from exc
    return trials_path, summary_path


PLOT_SCRIPT = '''"""Plot empirical and theoretical accuracy against the privacy level."""
import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "summary.csv")))
eps = [float(r["epsilon"]) for r in rows]
fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(eps, [float(r["mean_d"]) for r in rows], "o-", label="empirical mean")
ax.loglog(eps, [float(r["theoretical_d"]) for r in rows], "s--", label="accuracy bound")
ax.set_xlabel("privacy level epsilon")
ax.set_ylabel("mean squared distance to optimum")
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else here / "accuracy_vs_epsilon.png", dpi=150)
'''


def emit_plot_script(result: ExperimentResult, path) -> Path:
    path = Path(path)
    try:
        path.write_text(PLOT_SCRIPT)
    except OSError as exc:
        raise OSError(f"cannot write plot script {path}: {exc.strerror}") from exc
    return path


def write_manifest(config: ExperimentConfig, files, out_dir) -> Path:
    out_dir = Path(out_dir)
    digest = config.digest()
    entries = [{"file": Path(f).name, "config_sha256": digest, "seed": config.seed}
               for f in files]
    path = out_dir / "manifest.json"
    path.write_text(json.dumps({"config": config.to_dict(include_output=False), "files": entries},
                               indent=2, sort_keys=True) + "\n")
    return path
