"""Two-stage GMM estimation of a 2-component PL mixture from structured
partial orders.

Stage 1 makes a single pass over the data, counting each structure (giving
``phi_hat``) and each observed order. Stage 2 minimizes the squared distance
between model event probabilities and the empirical event frequencies,
normalized by ``phi_hat`` of the event's structure, with multi-start L-BFGS
over a softmax reparameterization that keeps every entry above a floor.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .core import (
    ChoiceL,
    DimensionError,
    LWay,
    MixPLError,
    MixtureParams,
    StructureDistribution,
    StructureId,
    TopL,
)
from .probability import extends
from .sampling import choice_groups

log = logging.getLogger(__name__)


class EmptyProfileError(MixPLError):
    pass


class NoMomentDataError(MixPLError):
    pass


class DivisionError(MixPLError):
    pass


# ---------------------------------------------------------------------------
# moment sets


@dataclass(frozen=True)
class MomentEvent:
    event: object
    structure: StructureId
    empirical_count: int = 0
    weight: float = 1.0  # 1 / phi_hat of the structure

    def __post_init__(self):
        if not self.weight > 0 or not math.isfinite(self.weight):
            raise DivisionError(f"moment weight must be positive and finite, got {self.weight}")
        if self.empirical_count < 0:
            raise ValueError("empirical_count must be non-negative")


@dataclass(frozen=True)
class MomentSet:
    events: tuple
    selector: str
    m: int

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        seen = set()
        for e in self.events:
            if e.event in seen:
                raise ValueError(f"duplicate moment event {e.event}")
            seen.add(e.event)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def orders(self) -> list:
        return [e.event for e in self.events]


def _moment_set(orders, selector: str, m: int) -> MomentSet:
    unique = list(dict.fromkeys(orders))
    return MomentSet(tuple(MomentEvent(o, o.structure(m)) for o in unique), selector, m)


def select_moments_top2_2way(m: int) -> MomentSet:
    """Every ranked top-2 order except the lexicographically last one, then
    ``i > j`` for each pair ``i < j``."""
    if m < 4:
        raise DimensionError(f"need m >= 4, got {m}")
    tops = [TopL(p) for p in itertools.permutations(range(1, m + 1), 2)][:-1]
    pairs = [LWay(p) for p in itertools.combinations(range(1, m + 1), 2)]
    return _moment_set(tops + pairs, "top2_2way", m)


def _group_events(g) -> list:
    i1, i2, i3, i4 = g
    full = frozenset(g)
    out = [ChoiceL(full, i1), ChoiceL(full, i2), ChoiceL(full, i3)]
    for tri in ((i1, i2, i3), (i1, i2, i4), (i1, i3, i4), (i2, i3, i4)):
        out += [ChoiceL(frozenset(tri), tri[0]), ChoiceL(frozenset(tri), tri[1])]
    for a, b in itertools.combinations(g, 2):
        out.append(ChoiceL(frozenset((a, b)), a))
    return out


def select_moments_choice4(m: int) -> MomentSet:
    """17 choice events per group of four (3 choice-4, 2 per choice-3 subset,
    1 per pair); events shared by overlapping groups appear once."""
    orders = []
    for g in choice_groups(m):
        orders += _group_events(g)
    return _moment_set(orders, "choice4", m)


def select_moments_top3(m: int) -> MomentSet:
    """All ranked top-3 orders but the lexicographically last (comparison arm
    for linear-order data)."""
    if m < 4:
        raise DimensionError(f"need m >= 4, got {m}")
    tops = [TopL(p) for p in itertools.permutations(range(1, m + 1), 3)][:-1]
    return _moment_set(tops, "top3", m)


SELECTORS = {
    "top2_2way": select_moments_top2_2way,
    "choice4": select_moments_choice4,
    "top3": select_moments_top3,
}


def select_moments(selector: str, m: int) -> MomentSet:
    try:
        return SELECTORS[selector](m)
    except KeyError:
        raise ValueError(f"unknown selector {selector!r}; choose from {sorted(SELECTORS)}") from None


# ---------------------------------------------------------------------------
# stage 1


@dataclass
class StageOneCounts:
    m: int
    n: int
    structures: Counter
    orders: Counter


def count_orders(m: int, orders) -> StageOneCounts:
    """Single pass over ``orders``: structure counts and per-order counts."""
    structures: Counter = Counter()
    counts: Counter = Counter()
    n = 0
    for o in orders:
        counts[o] += 1
        n += 1
    for o, c in counts.items():
        structures[o.structure(m)] += c
    return StageOneCounts(m, n, structures, counts)


def phi_from_counts(counts: StageOneCounts) -> StructureDistribution:
    if counts.n == 0:
        raise EmptyProfileError("cannot estimate phi from an empty profile")
    return StructureDistribution(counts.m, {s: c / counts.n for s, c in counts.structures.items()})


def estimate_phi(profile) -> StructureDistribution:
    """Fraction of orders with each observed structure."""
    return phi_from_counts(count_orders(profile.m, profile))


def attach_counts(template: MomentSet, counts: StageOneCounts) -> tuple[MomentSet, list]:
    """Fill empirical counts and ``1/phi_hat`` weights; returns the moment set
    restricted to observed structures and the list of dropped events."""
    kept, dropped = [], []
    for e in template.events:
        c_s = counts.structures.get(e.structure, 0)
        if c_s == 0:
            dropped.append(e.event)
            continue
        kept.append(replace(e, empirical_count=counts.orders.get(e.event, 0), weight=counts.n / c_s))
    return MomentSet(tuple(kept), template.selector, template.m), dropped


def count_linear_events(rankings: np.ndarray, template: MomentSet) -> MomentSet:
    """Count each full ranking toward every moment event it extends (weights 1)."""
    rankings = np.asarray(rankings)
    pos = np.argsort(rankings, axis=1)
    events = []
    for e in template.events:
        o = e.event
        if isinstance(o, TopL):
            mask = extends(rankings, o)
        elif isinstance(o, LWay):
            p = pos[:, np.array(o.ranked) - 1]
            mask = np.all(np.diff(p, axis=1) > 0, axis=1)
        else:
            others = np.array(sorted(o.subset - {o.chosen})) - 1
            mask = pos[:, o.chosen - 1] < pos[:, others].min(axis=1) if others.size else np.ones(len(pos), bool)
        events.append(replace(e, empirical_count=int(mask.sum()), weight=1.0))
    return MomentSet(tuple(events), template.selector, template.m)


# ---------------------------------------------------------------------------
# objective


def _factors(o, m: int) -> list:
    """``(numerator, denominator subset)`` pairs whose ratio product is the PL
    probability of ``o`` (0-based indices)."""
    if isinstance(o, TopL):
        rest = list(range(m))
        out = []
        for a in o.ranked:
            out.append((a - 1, list(rest)))
            rest.remove(a - 1)
        return out
    if isinstance(o, LWay):
        r = [a - 1 for a in o.ranked]
        return [(r[p], r[p:]) for p in range(len(r) - 1)]
    if isinstance(o, ChoiceL):
        return [(o.chosen - 1, [a - 1 for a in o.subset])]
    raise TypeError(f"not a partial order: {o!r}")


class MomentModel:
    """Vectorized event probabilities (and gradients) for one moment set."""

    def __init__(self, moments: MomentSet):
        m = moments.m
        self.m = m
        self.q = len(moments)
        num, rows, cols, owner = [], [], [], []
        f = 0
        for t, e in enumerate(moments.events):
            for a, den in _factors(e.event, m):
                num.append(a)
                rows += [f] * len(den)
                cols += den
                owner.append(t)
                f += 1
        self.num = np.array(num, dtype=int)
        # dense is faster than sparse at these sizes (q, F in the hundreds)
        self.mask = np.zeros((f, m))
        self.mask[rows, cols] = 1.0
        self.pick = np.zeros((f, m))
        self.pick[np.arange(f), self.num] = 1.0
        self.owner = np.array(owner, dtype=int)
        # events with no factors (1-way orders) have probability one
        nf = np.bincount(self.owner, minlength=self.q)
        self.has_factors = nf > 0
        self.starts = np.concatenate([[0], np.cumsum(nf)[:-1]])[self.has_factors]
        self.weight = np.array([e.weight for e in moments.events])
        self.count = np.array([e.empirical_count for e in moments.events], dtype=float)

    def target(self, n: int) -> np.ndarray:
        """Empirical conditional frequency ``count / (n * phi_hat)``."""
        return self.count * self.weight / n

    def _probs(self, th):
        den = self.mask @ th  # (F, k)
        P = np.ones((self.q, th.shape[1]))
        if self.starts.size:
            logf = np.log(th[self.num]) - np.log(den)
            P[self.has_factors] = np.exp(np.add.reduceat(logf, self.starts, axis=0))
        return P, den

    def component_probs(self, thetas: np.ndarray) -> np.ndarray:
        """``(q, k)`` PL probability of each event under each component."""
        return self._probs(thetas.T)[0]

    def objective(self, alpha: np.ndarray, thetas: np.ndarray, n: int) -> float:
        resid = self.component_probs(thetas) @ alpha - self.target(n)
        return float(resid @ resid)

    def objective_and_grad(self, alpha, thetas, y):
        th = thetas.T
        P, den = self._probs(th)
        resid = P @ alpha - y
        g_alpha = 2.0 * (P.T @ resid)
        # d P_tr / d theta_r = P_tr * sum_f (1[num_f] / theta_num_f - mask_f / den_f)
        w = (2.0 * resid[:, None] * P * alpha[None, :])[self.owner]  # (F, k)
        g_th = self.pick.T @ (w / th[self.num]) - self.mask.T @ (w / den)
        return float(resid @ resid), g_alpha, g_th.T


def gmm_objective(candidate: MixtureParams, moments: MomentSet, n: int) -> float:
    """``sum_t (Pr(E_t) - count_t / (n * phi_hat_t))**2`` where ``Pr`` is the
    mixture marginal of event ``t``; equivalently the phi-normalized distance
    between model and empirical event frequencies."""
    if n <= 0:
        raise EmptyProfileError("n must be positive")
    if candidate.m != moments.m:
        raise DimensionError("candidate and moments disagree on m")
    return MomentModel(moments).objective(candidate.alpha, candidate.theta_matrix, n)


# ---------------------------------------------------------------------------
# stage 2


@dataclass
class FitConfig:
    k: int = 2
    starts: int = 10
    epsilon: float = 1e-6
    seed: int = 0
    max_iter: int = 2000
    tol: float = 1e-10


@dataclass
class FitReport:
    estimate: MixtureParams
    objective: float
    starts: list
    runtime_ms: float
    seed: int
    selector: str
    n: int
    dropped_events: list = field(default_factory=list)
    count_runtime_ms: float = 0.0
    mse: float | None = None

    @property
    def consistency_guaranteed(self) -> bool:
        return not self.dropped_events

    def to_json(self) -> dict:
        out = {
            "estimate": self.estimate.to_json(),
            "objective": self.objective,
            "starts": self.starts,
            "runtime_ms": self.runtime_ms,
            "count_runtime_ms": self.count_runtime_ms,
            "seed": self.seed,
            "selector": self.selector,
            "n": self.n,
            "dropped_events": len(self.dropped_events),
            "consistency_guaranteed": self.consistency_guaranteed,
        }
        if self.mse is not None:
            out["mse"] = self.mse
        return out


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class _Reparam:
    """Unconstrained vector <-> (alpha, thetas) with every entry >= epsilon."""

    def __init__(self, k: int, m: int, eps: float):
        if eps * max(k, m) >= 1:
            raise ValueError("epsilon too large for the simplex dimension")
        self.k, self.m, self.eps = k, m, eps

    def unpack(self, x):
        k, m, eps = self.k, self.m, self.eps
        sa = _softmax(x[:k])
        st = _softmax(x[k:].reshape(k, m))
        return sa, st, eps + (1 - k * eps) * sa, eps + (1 - m * eps) * st

    def start(self, alpha, thetas):
        return np.concatenate([np.log(alpha), np.log(thetas).ravel()])

    def pull_back(self, sa, st, g_alpha, g_th):
        """Chain rule through floor + softmax."""
        k, m, eps = self.k, self.m, self.eps
        ga = (1 - k * eps) * sa * (g_alpha - sa @ g_alpha)
        gt = (1 - m * eps) * st * (g_th - (st * g_th).sum(axis=1, keepdims=True))
        return np.concatenate([ga, gt.ravel()])


def _minimize(model: MomentModel, y: np.ndarray, k: int, n: int, config: FitConfig,
              rng: np.random.Generator):
    rp = _Reparam(k, model.m, config.epsilon)
    # n * objective is O(q) near the optimum whatever the sample size, so the
    # stopping tolerance means the same thing for every n
    scale = float(n)

    def fun(x):
        sa, st, alpha, thetas = rp.unpack(x)
        val, ga, gt = model.objective_and_grad(alpha, thetas, y)
        return val * scale, rp.pull_back(sa, st, ga, gt) * scale

    alpha0 = rng.uniform(size=k)
    thetas0 = rng.uniform(size=(k, model.m))
    x0 = rp.start(alpha0 / alpha0.sum(), thetas0 / thetas0.sum(axis=1, keepdims=True))
    res = minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": config.max_iter, "ftol": config.tol, "gtol": 1e-10},
    )
    _, _, alpha, thetas = rp.unpack(res.x)
    resid = model.component_probs(thetas) @ alpha - y
    val = float(resid @ resid)
    return alpha, thetas, val, res


def _fit_moments(moments: MomentSet, n: int, config: FitConfig, dropped: list, t0: float) -> FitReport:
    if config.k != 2:
        warnings.warn(f"fit with k={config.k} is unsupported: identifiability is only established for k=2",
                      stacklevel=3)
    if len(moments) == 0:
        raise NoMomentDataError("no moment event has an observed structure")
    model = MomentModel(moments)
    y = model.target(n)
    seeds = np.random.SeedSequence(config.seed).spawn(config.starts)
    best = None
    starts = []
    for i, ss in enumerate(seeds):
        alpha, thetas, val, res = _minimize(model, y, config.k, n, config, np.random.default_rng(ss))
        starts.append({"start": i, "objective": val, "iterations": int(res.nit), "converged": bool(res.success)})
        if best is None or val < best[2]:
            best = (alpha, thetas, val)
    alpha, thetas, val = best
    # renormalize away floating drift so the estimate passes simplex checks exactly
    estimate = MixtureParams(alpha / alpha.sum(), tuple(t / t.sum() for t in thetas))
    return FitReport(
        estimate=estimate,
        objective=val,
        starts=starts,
        runtime_ms=(time.perf_counter() - t0) * 1e3,
        seed=config.seed,
        selector=moments.selector,
        n=n,
        dropped_events=dropped,
    )


def fit(profile, selector: str = "top2_2way", config: FitConfig | None = None, *, linear: bool = False) -> FitReport:
    """Estimate ``(alpha, theta_1, theta_2)`` from a profile.

    ``profile`` needs an ``m`` attribute and is iterated exactly once. With
    ``linear=True`` every order must be a full ranking (a top-(m-1) order);
    each ranking then counts toward every moment event it extends and
    ``phi_hat`` is not used.
    """
    config = config or FitConfig()
    t0 = time.perf_counter()
    template = select_moments(selector, profile.m)
    if linear:
        rows = []
        for o in profile:
            if not isinstance(o, TopL) or len(o.ranked) != profile.m - 1:
                raise ValueError("linear fitting needs full rankings (top-(m-1) orders)")
            rows.append(o.ranked + tuple(set(range(1, profile.m + 1)) - set(o.ranked)))
        if not rows:
            raise EmptyProfileError("cannot fit an empty profile")
        return fit_rankings(np.array(rows), selector, config, _t0=t0)

    tc = time.perf_counter()
    counts = count_orders(profile.m, profile)
    if counts.n == 0:
        raise EmptyProfileError("cannot fit an empty profile")
    phi_hat = phi_from_counts(counts)
    moments, dropped = attach_counts(template, counts)
    count_ms = (time.perf_counter() - tc) * 1e3
    if dropped:
        warnings.warn(f"{len(dropped)} moment events dropped: their structures were never observed",
                      stacklevel=2)
    report = _fit_moments(moments, counts.n, config, dropped, t0)
    report.estimate = report.estimate.with_phi(phi_hat)
    report.count_runtime_ms = count_ms
    return report


def fit_rankings(rankings: np.ndarray, selector: str = "top2_2way", config: FitConfig | None = None,
                 *, _t0: float | None = None) -> FitReport:
    """Fit from an ``(n, m)`` array of full rankings (1-based)."""
    config = config or FitConfig()
    t0 = time.perf_counter() if _t0 is None else _t0
    rankings = np.asarray(rankings)
    if rankings.shape[0] == 0:
        raise EmptyProfileError("cannot fit an empty profile")
    template = select_moments(selector, rankings.shape[1])
    tc = time.perf_counter()
    moments = count_linear_events(rankings, template)
    count_ms = (time.perf_counter() - tc) * 1e3
    report = _fit_moments(moments, rankings.shape[0], config, [], t0)
    report.count_runtime_ms = count_ms
    return report


# ---------------------------------------------------------------------------
# error metric


def param_vector(params: MixtureParams, order=None) -> np.ndarray:
    order = range(params.k) if order is None else order
    return np.concatenate([params.alpha[list(order)], *(params.components[r].theta for r in order)])


def mse(estimate: MixtureParams, truth: MixtureParams) -> float:
    """Squared distance between the ``(alpha, theta_1..theta_k)`` blocks,
    minimized over relabelings of the estimate's components. ``phi`` is
    ignored."""
    if estimate.k != truth.k or estimate.m != truth.m:
        raise DimensionError("estimate and truth must share k and m")
    ref = param_vector(truth)
    return float(min(np.sum((param_vector(estimate, perm) - ref) ** 2)
                     for perm in itertools.permutations(range(truth.k))))
