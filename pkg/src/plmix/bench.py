"""Synthetic MSE / runtime study for 2-component PL mixtures.

Each (setting, n, trial) cell draws a fresh ground truth, samples data,
fits, and records the label-switching-aware MSE. Seeds depend on
(master seed, n, trial) but not on the setting, so different settings see
the same ground truths and are compared pairwise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import MixPLError
from .estimation import FitConfig, fit, fit_rankings, mse
from .sampling import random_truth, sample_linear_batch, sample_profile, setup_choice234, setup_top2_2way

# setting -> (selector, structure distribution factory or None for full rankings)
SETTINGS = {
    "top2_2way": ("top2_2way", setup_top2_2way),
    "choice234": ("choice4", lambda m: setup_choice234(m)[0]),
    "linear_top2_2way": ("top2_2way", None),
    "linear_choice234": ("choice4", None),
    "linear_top3": ("top3", None),
}

TRIAL_COLUMNS = ["setting", "n", "trial", "mse", "fit_runtime_ms", "objective", "seed",
                 "count_runtime_ms", "error"]
AGGREGATE_COLUMNS = ["setting", "n", "mean_mse", "ci_low", "ci_high", "mean_runtime_ms",
                     "median_mse", "trials", "failed"]


@dataclass
class BenchConfig:
    m: int = 10
    settings: list = field(default_factory=lambda: ["top2_2way", "choice234"])
    n_grid: list = field(default_factory=lambda: [1000, 10000, 100000])
    trials: int = 50
    seed: int = 0
    k: int = 2
    starts: int = 10
    epsilon: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        if self.m < 4:
            raise ValueError("bench needs m >= 4")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        unknown = set(self.settings) - set(SETTINGS)
        if unknown:
            raise ValueError(f"unknown settings {sorted(unknown)}; choose from {sorted(SETTINGS)}")

    @classmethod
    def from_json(cls, obj: dict) -> "BenchConfig":
        obj = dict(obj)
        if "setting" in obj:
            obj["settings"] = [obj.pop("setting")]
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known - {"out", "aggregate_out"}
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**{k: v for k, v in obj.items() if k in known})


def trial_seed(master: int, n: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, n, trial]).generate_state(1, dtype=np.uint64)[0] >> 1)


def run_trial(config: BenchConfig, setting: str, n: int, trial: int) -> dict:
    seed = trial_seed(config.seed, n, trial)
    rng = np.random.default_rng(seed)
    selector, phi_factory = SETTINGS[setting]
    fit_config = FitConfig(k=config.k, starts=config.starts, epsilon=config.epsilon, seed=seed)
    truth = random_truth(config.m, config.k, rng)
    row = {"setting": setting, "n": n, "trial": trial, "seed": seed, "error": ""}
    try:
        if phi_factory is None:
            report = fit_rankings(sample_linear_batch(truth, n, rng), selector, fit_config)
        else:
            truth = truth.with_phi(phi_factory(config.m))
            report = fit(sample_profile(truth, n, rng), selector, fit_config)
    except MixPLError as exc:
        row.update(mse=math.nan, fit_runtime_ms=math.nan, objective=math.nan, count_runtime_ms=math.nan,
                   error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(mse=mse(report.estimate, truth), fit_runtime_ms=report.runtime_ms,
               objective=report.objective, count_runtime_ms=report.count_runtime_ms)
    return row


def _run_cell(args):
    return run_trial(*args)


def run_experiment(config: BenchConfig) -> list:
    """One row per (setting, n, trial), ordered by that key."""
    cells = [(config, s, n, t) for s in config.settings for n in config.n_grid for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


def aggregate(rows: list) -> list:
    """Mean MSE with a normal-approximation 95% interval per (setting, n)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["setting"], r["n"]), []).append(r)
    out = []
    for (setting, n), rs in groups.items():
        vals = np.array([r["mse"] for r in rs if not r["error"]], dtype=float)
        runtimes = [r["fit_runtime_ms"] for r in rs if not r["error"]]
        mean = float(vals.mean()) if vals.size else math.nan
        half = 1.96 * float(vals.std(ddof=1)) / math.sqrt(vals.size) if vals.size > 1 else math.nan
        out.append({
            "setting": setting, "n": n, "mean_mse": mean, "ci_low": mean - half, "ci_high": mean + half,
            "mean_runtime_ms": float(np.mean(runtimes)) if runtimes else math.nan,
            "median_mse": float(np.median(vals)) if vals.size else math.nan,
            "trials": len(rs), "failed": len(rs) - int(vals.size),
        })
    return out


def to_csv(rows: list, columns: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns})
    return buf.getvalue()


def write_results(rows: list, out: str | Path, aggregate_out: str | Path | None = None) -> None:
    Path(out).write_text(to_csv(rows, TRIAL_COLUMNS))
    if aggregate_out is not None:
        Path(aggregate_out).write_text(to_csv(aggregate(rows), AGGREGATE_COLUMNS))


def load_config(path: str | Path) -> tuple[BenchConfig, dict]:
    """Read a JSON bench config; returns the config and the raw document (which
    may also name ``out`` / ``aggregate_out`` paths)."""
    raw = json.loads(Path(path).read_text())
    return BenchConfig.from_json(raw), raw


def config_dict(config: BenchConfig) -> dict:
    return asdict(config)
