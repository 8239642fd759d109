import math

import numpy as np
import pytest

from plmix import bench
from plmix.bench import (
    AGGREGATE_COLUMNS,
    TRIAL_COLUMNS,
    BenchConfig,
    aggregate,
    load_config,
    run_experiment,
    run_trial,
    to_csv,
    trial_seed,
    write_results,
)
from plmix.core import MixPLError

RUNTIME = {"fit_runtime_ms", "count_runtime_ms"}


def strip_runtime(rows):
    return [{k: v for k, v in r.items() if k not in RUNTIME} for r in rows]


def small(**kw):
    base = dict(m=5, settings=["top2_2way"], n_grid=[400], trials=2, seed=3, starts=2)
    base.update(kw)
    return BenchConfig(**base)


def mean_of(rows, setting, n):
    return float(np.mean([r["mse"] for r in rows if r["setting"] == setting and r["n"] == n]))


def test_bit_identical_rerun():
    cfg = small(settings=["top2_2way", "choice234", "linear_top3"], trials=1)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert strip_runtime(a) == strip_runtime(b)
    cols = [c for c in TRIAL_COLUMNS if c not in RUNTIME]
    assert to_csv(a, cols) == to_csv(b, cols)


def test_row_order_and_keys():
    rows = run_experiment(small(settings=["choice234", "top2_2way"], n_grid=[300, 200], trials=2))
    keys = [(r["setting"], r["n"], r["trial"]) for r in rows]
    assert keys == [(s, n, t) for s in ("choice234", "top2_2way") for n in (300, 200) for t in (0, 1)]
    assert all(set(r) == set(TRIAL_COLUMNS) for r in rows)


def test_trials_are_paired_across_settings():
    rows = run_experiment(small(settings=["top2_2way", "linear_top2_2way"], trials=3))
    by_setting = {}
    for r in rows:
        by_setting.setdefault(r["setting"], []).append(r["seed"])
    assert by_setting["top2_2way"] == by_setting["linear_top2_2way"]
    assert len(set(by_setting["top2_2way"])) == 3


def test_trial_seed_independent_of_trial_count():
    assert trial_seed(0, 1000, 4) == trial_seed(0, 1000, 4)
    assert len({trial_seed(0, n, t) for n in (10, 20) for t in range(20)}) == 40
    a = run_experiment(small(trials=1))
    b = run_experiment(small(trials=2))
    assert strip_runtime(a) == strip_runtime(b[:1])


def test_fit_errors_become_rows(monkeypatch):
    def boom(*args, **kwargs):
        raise MixPLError("synthetic failure")

    monkeypatch.setattr(bench, "fit", boom)
    row = run_trial(small(), "top2_2way", 400, 0)
    assert math.isnan(row["mse"]) and "synthetic failure" in row["error"]
    ok = run_trial(small(), "linear_top2_2way", 400, 0)
    agg = aggregate([row, ok])
    assert [a["failed"] for a in agg] == [1, 0]
    assert math.isnan(agg[0]["mean_mse"])


def test_aggregate_formula():
    vals = [0.1, 0.3, 0.2, 0.6]
    rows = [{"setting": "s", "n": 10, "trial": i, "mse": v, "fit_runtime_ms": 2.0 * i, "error": ""}
            for i, v in enumerate(vals)]
    (agg,) = aggregate(rows)
    half = 1.96 * np.std(vals, ddof=1) / 2
    assert agg["mean_mse"] == pytest.approx(0.3)
    assert agg["ci_low"] == pytest.approx(0.3 - half) and agg["ci_high"] == pytest.approx(0.3 + half)
    assert agg["median_mse"] == pytest.approx(0.25)
    assert agg["mean_runtime_ms"] == pytest.approx(3.0)


def test_interval_shrinks_with_trials():
    rows = run_experiment(small(m=4, n_grid=[500], trials=50, starts=1))
    (few,) = aggregate(rows[:10])
    (many,) = aggregate(rows)
    assert many["ci_high"] - many["ci_low"] < few["ci_high"] - few["ci_low"]


def test_counting_runtime_is_linear():
    cfg = BenchConfig(m=10, settings=["top2_2way"], n_grid=[1000, 10000, 100000], trials=3, seed=5, starts=1)
    rows = run_experiment(cfg)
    ns = np.array(cfg.n_grid, dtype=float)
    times = np.array([min(r["count_runtime_ms"] for r in rows if r["n"] == n) for n in cfg.n_grid])
    slope = np.polyfit(np.log(ns), np.log(times), 1)[0]
    assert 0.8 <= slope <= 1.3, (times, slope)


def test_csv_outputs(tmp_path):
    rows = run_experiment(small())
    write_results(rows, tmp_path / "t.csv", tmp_path / "a.csv")
    trial_lines = (tmp_path / "t.csv").read_text().splitlines()
    agg_lines = (tmp_path / "a.csv").read_text().splitlines()
    assert trial_lines[0].split(",")[:7] == ["setting", "n", "trial", "mse", "fit_runtime_ms", "objective", "seed"]
    assert agg_lines[0].split(",")[:6] == ["setting", "n", "mean_mse", "ci_low", "ci_high", "mean_runtime_ms"]
    assert len(trial_lines) == 3 and len(agg_lines) == 2
    assert agg_lines[0].split(",") == AGGREGATE_COLUMNS


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        BenchConfig(m=3)
    with pytest.raises(ValueError):
        BenchConfig(trials=0)
    with pytest.raises(ValueError, match="unknown settings"):
        BenchConfig(settings=["nope"])
    with pytest.raises(ValueError, match="unknown config keys"):
        BenchConfig.from_json({"bogus": 1})
    path = tmp_path / "c.json"
    path.write_text('{"m": 6, "setting": "choice234", "n_grid": [100], "trials": 2, "out": "x.csv"}')
    cfg, raw = load_config(path)
    assert cfg.settings == ["choice234"] and cfg.m == 6 and raw["out"] == "x.csv"


@pytest.mark.slow
def test_mean_mse_decreases(study_rows):
    for setting in ("top2_2way", "choice234"):
        means = [mean_of(study_rows, setting, n) for n in (1000, 10000, 100000)]
        assert means[0] > means[1] > means[2], (setting, means)


@pytest.mark.slow
def test_linear_choice_beats_partial_choice(study_rows):
    assert mean_of(study_rows, "linear_choice234", 10000) <= mean_of(study_rows, "choice234", 10000)
