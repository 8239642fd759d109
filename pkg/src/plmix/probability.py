"""Closed-form Plackett-Luce probabilities for linear and structured partial
orders, their mixtures, and a brute-force enumeration oracle."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .core import (
    ChoiceL,
    DimensionError,
    LWay,
    MixtureParams,
    PLParams,
    StructureId,
    TooLargeError,
    TopL,
    UnknownStructureError,
    validate_linear_order,
)

BRUTE_FORCE_MAX_M = 8
# beyond this many sequential factors the product is accumulated in log space
LOG_SPACE_MIN_FACTORS = 30


def _theta(theta) -> np.ndarray:
    if isinstance(theta, PLParams):
        return theta.theta
    return np.asarray(theta, dtype=float)


def _check_order(o, m: int) -> None:
    items = o.subset if isinstance(o, ChoiceL) else o.ranked
    if items and max(items) > m:
        raise DimensionError(f"order refers to alternative {max(items)} but theta has {m} entries")
    o.validate(m)


def _sequential(theta: np.ndarray, ranked, pool_total: float, steps: int) -> float:
    """Product over the first ``steps`` picks of ``theta[pick] / remaining mass``,
    starting from a pool whose total weight is ``pool_total``."""
    if steps > LOG_SPACE_MIN_FACTORS:
        logp = 0.0
        rest = pool_total
        for a in ranked[:steps]:
            w = theta[a - 1]
            logp += math.log(w) - math.log(rest)
            rest -= w
        return math.exp(logp)
    p = 1.0
    rest = pool_total
    for a in ranked[:steps]:
        w = theta[a - 1]
        p *= w / rest
        rest -= w
    return p


def pl_linear_prob(theta, ranking) -> float:
    """Probability of a full ranking (most preferred first) under one PL model."""
    th = _theta(theta)
    ranking = tuple(ranking)
    if len(ranking) != th.size:
        raise DimensionError(f"ranking has {len(ranking)} entries, theta has {th.size}")
    r = validate_linear_order(ranking, th.size)
    # remaining mass recomputed from the tail to keep each ratio accurate
    tail = np.cumsum(th[np.array(r[::-1]) - 1])[::-1]
    ratios = th[np.array(r[:-1]) - 1] / tail[:-1]
    if len(ratios) > LOG_SPACE_MIN_FACTORS:
        return float(np.exp(np.log(ratios).sum()))
    return float(np.prod(ratios))


def pl_partial_prob(theta, o) -> float:
    """Marginal probability of a top-l, l-way or choice-l order."""
    th = _theta(theta)
    m = th.size
    _check_order(o, m)
    if isinstance(o, TopL):
        return _sequential(th, o.ranked, float(th.sum()), len(o.ranked))
    if isinstance(o, LWay):
        idx = np.array(o.ranked) - 1
        return _sequential(th, o.ranked, float(th[idx].sum()), len(o.ranked) - 1)
    if isinstance(o, ChoiceL):
        idx = np.fromiter(o.subset, dtype=int) - 1
        return float(th[o.chosen - 1] / th[idx].sum())
    raise TypeError(f"not a partial order: {o!r}")


def mixture_partial_prob(params: MixtureParams, o) -> float:
    """``sum_r alpha_r * Pr_PL(o | theta_r)``."""
    return float(sum(a * pl_partial_prob(c, o) for a, c in zip(params.alpha, params.components)))


def model_partial_prob(params: MixtureParams, o) -> float:
    """Probability of ``o`` including the chance of revealing its structure."""
    if params.phi is None:
        raise UnknownStructureError("model has no structure distribution")
    s = o.structure(params.m)
    if s not in params.phi:
        raise UnknownStructureError(f"structure {s} is not in the model's structure set")
    return params.phi[s] * mixture_partial_prob(params, o)


# ---------------------------------------------------------------------------
# enumeration


@lru_cache(maxsize=None)
def all_linear_orders(m: int) -> np.ndarray:
    """Every permutation of ``1..m`` as rows of an ``(m!, m)`` int array."""
    if m > BRUTE_FORCE_MAX_M:
        raise TooLargeError(f"refusing to enumerate {m}! linear orders (max m={BRUTE_FORCE_MAX_M})")
    perms = np.array(list(itertools.permutations(range(1, m + 1))), dtype=np.int64)
    perms.setflags(write=False)
    return perms


def linear_probs_all(theta) -> np.ndarray:
    """``pl_linear_prob`` of every row of ``all_linear_orders(m)``, vectorized."""
    th = _theta(theta)
    perms = all_linear_orders(th.size)
    w = th[perms - 1]
    tail = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    return np.prod(w[:, :-1] / tail[:, :-1], axis=1)


def extends(rankings: np.ndarray, o) -> np.ndarray:
    """Boolean mask over rows of ``rankings`` (1-based, ``(n, m)``): does the
    linear order extend ``o``?"""
    rankings = np.atleast_2d(rankings)
    if isinstance(o, TopL):
        l = len(o.ranked)
        return np.all(rankings[:, :l] == np.array(o.ranked), axis=1)
    pos = np.argsort(rankings, axis=1)  # pos[:, a-1] = position of alternative a
    if isinstance(o, LWay):
        p = pos[:, np.array(o.ranked) - 1]
        return np.all(np.diff(p, axis=1) > 0, axis=1)
    if isinstance(o, ChoiceL):
        others = np.array(sorted(o.subset - {o.chosen}), dtype=int) - 1
        if others.size == 0:
            return np.ones(rankings.shape[0], dtype=bool)
        return pos[:, o.chosen - 1] < pos[:, others].min(axis=1)
    raise TypeError(f"not a partial order: {o!r}")


def brute_force_partial_prob(theta, o) -> float:
    """Sum of linear-order probabilities over every extension of ``o``."""
    th = _theta(theta)
    if th.size > BRUTE_FORCE_MAX_M:
        raise TooLargeError(f"brute force limited to m <= {BRUTE_FORCE_MAX_M}")
    _check_order(o, th.size)
    mask = extends(all_linear_orders(th.size), o)
    return float(linear_probs_all(th)[mask].sum())


def orders_of_structure(s: StructureId, m: int) -> list:
    """All partial orders having structure ``s``."""
    s.validate(m)
    if s.kind == "top":
        return [TopL(p) for p in itertools.permutations(range(1, m + 1), s.l)]
    if s.kind == "way":
        return [LWay(p) for p in itertools.permutations(sorted(s.subset))]
    return [ChoiceL(s.subset, a) for a in sorted(s.subset)]


def all_structures(m: int) -> list:
    """Every structure over ``m`` alternatives (overlapping ones included)."""
    out = [StructureId.top(l, m) for l in range(1, m)]
    for l in range(1, m + 1):
        for sub in itertools.combinations(range(1, m + 1), l):
            out.append(StructureId.way(sub))
            out.append(StructureId.choice(sub))
    return out
