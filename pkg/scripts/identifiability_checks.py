"""Print the witness discrepancies and the rank census for the moment matrix."""

import argparse
import itertools

import numpy as np

from plmix.identifiability import build_witness, moment_matrix, numerical_rank, verify_witness


def witnesses(max_m):
    print(f"{'k':>2} {'m':>2} {'l1':>3} {'l2':>3} {'inside':>10} {'outside':>10}")
    for m in range(2, max_m + 1):
        for k in range(1, m // 2 + 1):
            for l1, l2 in itertools.product(range(m), range(1, m + 1)):
                if 2 * k < l1 + l2 + 1:
                    continue
                rep = verify_witness(build_witness(k, m, l1, l2))
                print(f"{k:>2} {m:>2} {l1:>3} {l2:>3} {rep.max_discrepancy:>10.1e} {rep.outside_discrepancy:>10.1e}")


def rank_census(draws, seed, margin=1e-3):
    rng = np.random.default_rng(seed)
    counts = {}
    done = 0
    while done < draws:
        comps = [rng.dirichlet(np.ones(4)) for _ in range(4)]
        if min(np.linalg.norm(a - b) for a, b in itertools.combinations(comps, 2)) < margin:
            continue
        r = numerical_rank(moment_matrix(comps))
        counts[r] = counts.get(r, 0) + 1
        done += 1
    print("rank census over", draws, "draws:", dict(sorted(counts.items())))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-m", type=int, default=6)
    ap.add_argument("--draws", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    witnesses(args.max_m)
    rank_census(args.draws, args.seed)
