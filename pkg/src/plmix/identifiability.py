"""Identifiability diagnostics.

* constructive witnesses of non-identifiability: two different k-component
  mixtures with identical top-l (l <= l1) and l-way (l <= l2) marginals;
* the numerical rank of the top-2 + 2-way moment matrix of four components;
* linear identities that rebuild ranked events from lower-order marginals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import ChoiceL, DimensionError, LWay, MixPLError, MixtureParams, PLParams, TooLargeError, TopL
from .estimation import select_moments_top2_2way
from .probability import BRUTE_FORCE_MAX_M, mixture_partial_prob, pl_partial_prob

BETA_TOL = 1e-9


class DuplicateError(MixPLError):
    pass


class PreconditionError(MixPLError):
    pass


class IncoherenceError(MixPLError):
    pass


# choice_to_top2 and recover_topu report incoherent inputs the same way
NegativeResultError = IncoherenceError


def beta_weights(e, m: int, l1: int, l2: int) -> np.ndarray:
    """Signed weights that make the witness components' moments cancel.

    ``beta_r = prod_{p=1}^{l1-1} (p e_r + m-1-p)
               * prod_{p=0}^{l2-2} ((m-l2+p) e_r + l2-1-p)
               / prod_{q != r} (e_r - e_q)``
    """
    e = np.asarray(e, dtype=float)
    if len(np.unique(e)) != e.size:
        raise DuplicateError("e values must be distinct")
    out = np.empty(e.size)
    for r, er in enumerate(e):
        num = math.prod(p * er + m - 1 - p for p in range(1, l1))
        num *= math.prod((m - l2 + p) * er + l2 - 1 - p for p in range(0, l2 - 1))
        den = math.prod(er - eq for q, eq in enumerate(e) if q != r)
        out[r] = num / den
    return out


@dataclass(frozen=True)
class Witness:
    e: np.ndarray
    beta: np.ndarray
    mixtureA: MixtureParams
    mixtureB: MixtureParams
    k: int
    m: int
    l1: int
    l2: int

    def to_json(self) -> dict:
        return {
            "k": self.k, "m": self.m, "l1": self.l1, "l2": self.l2,
            "e": self.e.tolist(), "beta": self.beta.tolist(),
            "mixtureA": self.mixtureA.to_json(), "mixtureB": self.mixtureB.to_json(),
        }


def _witness_component(er: float, m: int) -> np.ndarray:
    th = np.full(m, (1 - er) / (m - 1))
    th[0] = er
    return th


def build_witness(k: int, m: int, l1: int, l2: int, e=None) -> Witness:
    """Two distinct k-PL mixtures that no top-l1 / l2-way data can tell apart.

    Component ``r`` of the 2k candidates puts ``e_r`` on alternative 1 and
    spreads the rest evenly. Components with positive ``beta`` form mixture A
    (weights proportional to ``beta``), the negative ones form mixture B.
    """
    if k < 1:
        raise PreconditionError("k must be at least 1")
    if m < 2 * k:
        raise PreconditionError(f"need m >= 2k, got m={m}, k={k}")
    if not 0 <= l1 <= m - 1:
        raise PreconditionError(f"need 0 <= l1 <= m - 1, got l1={l1}")
    if not 1 <= l2 <= m:
        raise PreconditionError(f"need 1 <= l2 <= m, got l2={l2}")
    if 2 * k < l1 + l2 + 1:
        raise PreconditionError(f"need k >= (l1 + l2 + 1) / 2, got k={k}, l1={l1}, l2={l2}")
    if e is None:
        e = np.linspace(0.1, 0.9, 2 * k)
    e = np.sort(np.asarray(e, dtype=float))
    if e.size != 2 * k:
        raise PreconditionError(f"need 2k = {2 * k} e values, got {e.size}")
    if np.any(e <= 0) or np.any(e >= 1):
        raise PreconditionError("e values must lie in (0, 1)")

    beta = beta_weights(e, m, l1, l2)
    pos, neg = beta > 0, beta < 0
    if pos.sum() != k or neg.sum() != k:
        raise PreconditionError("beta does not split into k positive and k negative weights")
    z_pos, z_neg = beta[pos].sum(), -beta[neg].sum()
    if abs(z_pos - z_neg) > BETA_TOL * max(z_pos, 1.0):
        raise PreconditionError(f"beta halves do not balance: {z_pos!r} vs {z_neg!r}")
    comps = [_witness_component(er, m) for er in e]
    a = MixtureParams(beta[pos] / z_pos, tuple(c for c, f in zip(comps, pos) if f))
    b = MixtureParams(-beta[neg] / z_pos, tuple(c for c, f in zip(comps, neg) if f))
    return Witness(e, beta, a, b, k, m, l1, l2)


def witness_orders(m: int, l1: int, l2: int) -> list:
    """Every top-l order (l <= l1) and l-way order (l <= l2)."""
    out = []
    for l in range(1, min(l1, m - 1) + 1):
        out += [TopL(p) for p in itertools.permutations(range(1, m + 1), l)]
    for l in range(1, l2 + 1):
        out += [LWay(p) for p in itertools.permutations(range(1, m + 1), l)]
    return out


def max_discrepancy(a: MixtureParams, b: MixtureParams, orders) -> float:
    return max((abs(mixture_partial_prob(a, o) - mixture_partial_prob(b, o)) for o in orders), default=0.0)


@dataclass
class WitnessReport:
    max_discrepancy: float
    n_orders: int
    tol: float
    outside_discrepancy: float | None = None

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tol

    def to_json(self) -> dict:
        out = {"max_discrepancy": self.max_discrepancy, "orders_checked": self.n_orders,
               "tol": self.tol, "passed": self.passed}
        if self.outside_discrepancy is not None:
            out["outside_discrepancy"] = self.outside_discrepancy
        return out


def verify_witness(w: Witness, tol: float = 1e-10, check_outside: bool = True) -> WitnessReport:
    """Largest marginal gap between the two mixtures over every top-l (l <= l1)
    and l-way (l <= l2) order. With ``check_outside`` also reports the gap on
    full rankings, which should be clearly nonzero."""
    if w.m > BRUTE_FORCE_MAX_M:
        raise TooLargeError(f"enumeration limited to m <= {BRUTE_FORCE_MAX_M}")
    orders = witness_orders(w.m, w.l1, w.l2)
    report = WitnessReport(max_discrepancy(w.mixtureA, w.mixtureB, orders), len(orders), tol)
    if check_outside:
        full = [TopL(p[:-1]) for p in itertools.permutations(range(1, w.m + 1))]
        report.outside_discrepancy = max_discrepancy(w.mixtureA, w.mixtureB, full)
    return report


# ---------------------------------------------------------------------------
# rank of the moment matrix


def moment_matrix(components, selector: str = "top2_2way") -> np.ndarray:
    """``(q, len(components))`` matrix of PL probabilities of each selected event."""
    comps = [c if isinstance(c, PLParams) else PLParams(c) for c in components]
    m = comps[0].m
    if any(c.m != m for c in comps):
        raise DimensionError("components must share m")
    if selector != "top2_2way":
        raise ValueError("only the top2_2way selector is supported here")
    events = select_moments_top2_2way(m).orders
    return np.array([[pl_partial_prob(c, o) for c in comps] for o in events])


def numerical_rank(matrix, tol: float = 1e-9) -> int:
    """Number of singular values above ``tol`` times the largest."""
    s = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


# ---------------------------------------------------------------------------
# recovery identities


def choice_to_top2(p_choice3: float, p_choice4: float, tol: float = 1e-12) -> float:
    """``Pr(i1 > i2 > {i3, i4})`` within a four-subset, from choice marginals.

    ``p_choice3`` is ``Pr(i2 chosen from {i2, i3, i4})`` and ``p_choice4`` is
    ``Pr(i2 chosen from {i1, i2, i3, i4})``. Holds for any PL mixture.
    """
    out = p_choice3 - p_choice4
    if out < -tol:
        raise NegativeResultError(f"incoherent choice marginals give {out!r} < 0")
    return max(out, 0.0)


def recover_topu(top_marginal, way_marginal, target, m: int, tol: float = 1e-12) -> float:
    """Probability that the first ``u - 1`` positions hold ``U = target[:-1]``
    (in any order) and ``target[-1]`` is in position ``u``.

    Assembled as ``Pr(a_u before every v in V) - sum_{i<u} Pr(a_u at position
    i with the i-1 alternatives ahead of it drawn from U)``, where
    ``V = A - U - {a_u}``. The subtracted terms come from top-(u-1) marginals
    and the first from (v+1)-way marginals. For ``u <= 2`` the result is
    exactly the ranked top-u probability of ``target``.

    ``top_marginal(prefix)`` must return the top-(u-1) probability of a length
    ``u - 1`` prefix; ``way_marginal(ranking)`` the probability of a
    ``(v+1)``-way ranking over ``{a_u} | V``.
    """
    target = tuple(target)
    u = len(target)
    if not 1 <= u <= m - 1 or len(set(target)) != u or not set(target) <= set(range(1, m + 1)):
        raise DimensionError(f"target must be 1..{m - 1} distinct alternatives")
    U, a_u = target[:-1], target[-1]
    V = sorted(set(range(1, m + 1)) - set(target))

    before_v = sum(way_marginal((a_u,) + perm) for perm in itertools.permutations(V))

    def top_i(prefix):
        # top-i marginal of a shorter prefix, summed out of the top-(u-1) ones
        rest = sorted(set(range(1, m + 1)) - set(prefix))
        return sum(top_marginal(prefix + ext) for ext in itertools.permutations(rest, u - 1 - len(prefix)))

    ahead = 0.0
    for i in range(1, u):
        for lead in itertools.permutations(U, i - 1):
            ahead += top_i(lead + (a_u,))
    out = before_v - ahead
    if out < -tol:
        raise IncoherenceError(f"incoherent marginals give {out!r} < 0")
    return max(out, 0.0)


def mixture_choice_to_top2(params: MixtureParams, quad) -> float:
    """``choice_to_top2`` fed with the choice marginals of ``params``."""
    i1, i2, i3, i4 = quad
    p3 = mixture_partial_prob(params, ChoiceL(frozenset((i2, i3, i4)), i2))
    p4 = mixture_partial_prob(params, ChoiceL(frozenset(quad), i2))
    return choice_to_top2(p3, p4)


def mixture_recover_topu(params: MixtureParams, target) -> float:
    """``recover_topu`` fed with the top-(u-1) and (v+1)-way marginals of ``params``."""
    return recover_topu(
        lambda prefix: mixture_partial_prob(params, TopL(prefix)),
        lambda ranking: mixture_partial_prob(params, LWay(ranking)),
        target,
        params.m,
    )
