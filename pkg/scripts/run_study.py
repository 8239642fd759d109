"""Run the synthetic MSE / runtime study and write trial and aggregate CSVs.

    python scripts/run_study.py scripts/desk_study.json --workers 4
    python scripts/run_study.py scripts/desk_study.json --trials 5 --n-grid 1000 10000
"""

import argparse
import logging
import time
from pathlib import Path

from plmix.bench import aggregate, load_config, run_experiment, write_results

log = logging.getLogger("run_study")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--trials", type=int, help="override the config's trial count")
    ap.add_argument("--n-grid", type=int, nargs="+")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out-dir", help="directory for the CSVs (default: paths in the config)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config, raw = load_config(args.config)
    if args.trials:
        config.trials = args.trials
    if args.n_grid:
        config.n_grid = args.n_grid
    if args.workers:
        config.workers = args.workers
    out = Path(raw.get("out", "trials.csv"))
    agg_out = Path(raw.get("aggregate_out", "aggregate.csv"))
    if args.out_dir:
        out, agg_out = Path(args.out_dir) / out.name, Path(args.out_dir) / agg_out.name
    out.parent.mkdir(parents=True, exist_ok=True)
    agg_out.parent.mkdir(parents=True, exist_ok=True)

    cells = len(config.settings) * len(config.n_grid) * config.trials
    log.info("running %d fits (m=%d, workers=%d)", cells, config.m, config.workers)
    t0 = time.perf_counter()
    rows = run_experiment(config)
    log.info("done in %.1f s", time.perf_counter() - t0)
    write_results(rows, out, agg_out)

    print(f"{'setting':<18}{'n':>8}{'mean mse':>12}{'95% ci':>24}{'median':>11}{'ms/fit':>9}")
    for a in aggregate(rows):
        ci = f"[{a['ci_low']:.4f}, {a['ci_high']:.4f}]"
        print(f"{a['setting']:<18}{a['n']:>8}{a['mean_mse']:>12.4f}{ci:>24}{a['median_mse']:>11.4f}"
              f"{a['mean_runtime_ms']:>9.0f}")
    print(f"trial rows -> {out}\naggregate  -> {agg_out}")


if __name__ == "__main__":
    main()
