"""Data generation: linear orders from a PL mixture, projection onto random
structures, and the two synthetic structure distributions used in benchmarks."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import (
    ChoiceL,
    DimensionError,
    LWay,
    MixtureParams,
    Profile,
    StructureDistribution,
    StructureId,
    TopL,
)


def sample_linear(params: MixtureParams, rng: np.random.Generator) -> tuple:
    """Draw one ranking: pick a component by ``alpha``, then pick positions one
    at a time among the remaining alternatives with probability proportional
    to that component's ``theta``."""
    r = rng.choice(params.k, p=params.alpha)
    theta = params.components[r].theta
    remaining = list(range(params.m))
    ranking = []
    while remaining:
        w = theta[remaining]
        j = rng.choice(len(remaining), p=w / w.sum())
        ranking.append(remaining.pop(j) + 1)
    return tuple(ranking)


def sample_linear_batch(params: MixtureParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` rankings at once as an ``(n, m)`` array of 1-based indices.

    Uses the exponential-race form of PL: each alternative gets an arrival
    time ``Exp(1) / theta_i`` and the ranking sorts by arrival. This has the
    same distribution as sequential selection.
    """
    comp = rng.choice(params.k, size=n, p=params.alpha)
    theta = params.theta_matrix[comp]
    arrival = rng.standard_exponential((n, params.m)) / theta
    return np.argsort(arrival, axis=1, kind="stable") + 1


def project(ranking, s: StructureId):
    """Reveal only the part of ``ranking`` that structure ``s`` observes."""
    r = tuple(ranking)
    if s.kind == "top":
        return TopL(r[: s.l])
    kept = tuple(a for a in r if a in s.subset)
    if s.kind == "way":
        return LWay(kept)
    return ChoiceL(s.subset, kept[0])


def _project_rows(rankings: np.ndarray, s: StructureId) -> list:
    """Vectorized ``project`` of many rankings onto one structure."""
    if s.kind == "top":
        return [TopL(row) for row in rankings[:, : s.l].tolist()]
    members = np.array(sorted(s.subset))
    inside = np.isin(rankings, members)
    kept = rankings[inside].reshape(rankings.shape[0], members.size)
    if s.kind == "way":
        return [LWay(row) for row in kept.tolist()]
    return [ChoiceL(s.subset, a) for a in kept[:, 0].tolist()]


def sample_profile(params: MixtureParams, n: int, rng: np.random.Generator) -> Profile:
    """``n`` i.i.d. structured partial orders from the full two-stage model."""
    if params.phi is None:
        raise ValueError("params.phi is required to sample partial orders")
    if n < 0:
        raise ValueError("n must be non-negative")
    structures = list(params.phi.entries)
    probs = np.array([params.phi[s] for s in structures])
    rankings = sample_linear_batch(params, n, rng)
    which = rng.choice(len(structures), size=n, p=probs / probs.sum())
    orders = [None] * n
    for t in np.unique(which):
        rows = np.flatnonzero(which == t)
        for i, o in zip(rows.tolist(), _project_rows(rankings[rows], structures[t])):
            orders[i] = o
    return Profile(params.m, tuple(orders))


def random_truth(m: int, k: int, rng: np.random.Generator) -> MixtureParams:
    """Ground truth with ``alpha`` and every ``theta`` drawn coordinatewise
    uniform on (0, 1) and normalized."""
    alpha = rng.uniform(size=k)
    comps = rng.uniform(size=(k, m))
    return MixtureParams(alpha / alpha.sum(), tuple(c / c.sum() for c in comps))


# ---------------------------------------------------------------------------
# synthetic structure distributions


def setup_top2_2way(m: int) -> StructureDistribution:
    """Half the mass on top-2, the rest spread evenly over all 2-way pairs."""
    if m < 4:
        raise DimensionError(f"need m >= 4, got {m}")
    entries = {StructureId.top(2, m): 0.5}
    pair_p = 1.0 / (m * (m - 1))
    for pair in itertools.combinations(range(1, m + 1), 2):
        entries[StructureId.way(pair)] = pair_p
    return StructureDistribution(m, entries)


def choice_groups(m: int) -> list:
    """Groups of four alternatives that all contain alternative 1.

    ``{1,2,3,4}, {1,5,6,7}, ...``; the last group is ``{1, m-2, m-1, m}`` so it
    may overlap the previous one when ``m - 1`` is not a multiple of 3.
    """
    if m < 4:
        raise DimensionError(f"need m >= 4, got {m}")
    c = math.ceil((m - 1) / 3)
    groups = [(1, 3 * g + 2, 3 * g + 3, 3 * g + 4) for g in range(c - 1)]
    groups.append((1, m - 2, m - 1, m))
    return groups


# relative weights for choice-4 / each choice-3 / each choice-2 inside a group
GROUP_WEIGHTS = {4: 4.0, 3: 3.0, 2: 1.0}


def setup_choice234(m: int) -> tuple[StructureDistribution, list]:
    """Choice-2/3/4 structures inside each group, groups equally likely.

    Within a group the weights are 4 (choice-4), 3 (each choice-3) and 1 (each
    choice-2), renormalized to sum to one. Structures shared by overlapping
    groups accumulate their mass.
    """
    groups = choice_groups(m)
    total = sum(GROUP_WEIGHTS[size] * math.comb(4, size) for size in (2, 3, 4))
    entries: dict = {}
    for g in groups:
        for size in (4, 3, 2):
            for sub in itertools.combinations(g, size):
                s = StructureId.choice(sub)
                entries[s] = entries.get(s, 0.0) + GROUP_WEIGHTS[size] / total / len(groups)
    return StructureDistribution(m, entries), groups
