import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from plmix.core import ChoiceL, DimensionError, LWay, MixtureParams, StructureDistribution, StructureId, TopL
from plmix.probability import all_structures, extends, model_partial_prob, orders_of_structure, pl_linear_prob
from plmix.sampling import (
    choice_groups,
    project,
    random_truth,
    sample_linear,
    sample_linear_batch,
    sample_profile,
    setup_choice234,
    setup_top2_2way,
)

from conftest import THETA_1, random_mixture


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


def test_sequential_uniform():
    rng = np.random.default_rng(0)
    mix = MixtureParams([1.0], ([1 / 3] * 3,))
    n = 60000
    counts = Counter(sample_linear(mix, rng) for _ in range(n))
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / n - 1 / 6) <= three_sigma(1 / 6, n)


@pytest.mark.parametrize("sampler", ["sequential", "batch"])
def test_table_order_frequency(sampler):
    rng = np.random.default_rng(1)
    mix = MixtureParams([1.0], (THETA_1,))
    n = 60000
    if sampler == "sequential":
        hits = sum(sample_linear(mix, rng) == (2, 3, 4, 1) for _ in range(n))
    else:
        hits = int(np.all(sample_linear_batch(mix, n, rng) == [2, 3, 4, 1], axis=1).sum())
    assert abs(hits / n - 0.06) <= three_sigma(0.06, n)


def test_batch_goodness_of_fit():
    rng = np.random.default_rng(2)
    mix = random_mixture(rng, 4, 2)
    n = 100_000
    rankings = sample_linear_batch(mix, n, rng)
    observed = Counter(map(tuple, rankings.tolist()))
    perms = list(itertools.permutations(range(1, 5)))
    expected = [n * sum(a * pl_linear_prob(c, r) for a, c in zip(mix.alpha, mix.components)) for r in perms]
    assert stats.chisquare([observed[r] for r in perms], expected).pvalue > 1e-3


def test_determinism():
    mix = random_truth(5, 2, np.random.default_rng(3)).with_phi(setup_top2_2way(5))
    a = [sample_linear(mix, np.random.default_rng(9)) for _ in range(3)]
    b = [sample_linear(mix, np.random.default_rng(9)) for _ in range(3)]
    assert a == b
    p1 = sample_profile(mix, 500, np.random.default_rng(4))
    p2 = sample_profile(mix, 500, np.random.default_rng(4))
    assert p1 == p2


def test_projection_examples():
    r = (2, 3, 4, 1)
    assert project(r, StructureId.top(2, 4)) == TopL((2, 3))
    assert project(r, StructureId.way({1, 3, 4})) == LWay((3, 4, 1))
    assert project(r, StructureId.choice({1, 2, 3})) == ChoiceL({1, 2, 3}, 2)


@given(st.permutations(list(range(1, 7))), st.data())
def test_projection_is_consistent(ranking, data):
    m = 6
    s = data.draw(st.sampled_from(all_structures(m)))
    o = project(ranking, s)
    o.validate(m)
    assert o.structure(m) == s
    assert extends(np.array([ranking]), o)[0]


def test_empty_profile(example1):
    assert len(sample_profile(example1, 0, np.random.default_rng(0))) == 0


def test_degenerate_phi():
    phi = StructureDistribution(4, {StructureId.way({1, 2, 4}): 1.0})
    mix = random_truth(4, 2, np.random.default_rng(5)).with_phi(phi)
    p = sample_profile(mix, 200, np.random.default_rng(5))
    assert {o.structure(4) for o in p} == {StructureId.way({1, 2, 4})}


def test_example_frequency_large_n(example1):
    n = 1_000_000
    p = sample_profile(example1, n, np.random.default_rng(6))
    hits = sum(o == TopL((2, 3, 4)) for o in p)
    assert abs(hits / n - 0.0096) <= three_sigma(0.0096, n)


@pytest.mark.parametrize("phi_name", ["example", "top2_2way", "choice234"])
def test_profile_goodness_of_fit(example1, phi_name):
    rng = np.random.default_rng(7)
    if phi_name == "example":
        params = example1
    else:
        phi = setup_top2_2way(4) if phi_name == "top2_2way" else setup_choice234(4)[0]
        params = random_mixture(rng, 4, 2).with_phi(phi)
    n = 100_000
    observed = Counter(sample_profile(params, n, rng))
    support = [o for s in params.phi for o in orders_of_structure(s, 4)]
    expected = np.array([n * model_partial_prob(params, o) for o in support])
    assert sum(observed.values()) == n and set(observed) <= set(support)
    assert stats.chisquare([observed[o] for o in support], expected).pvalue > 1e-3


def test_setup_top2_2way_m10():
    phi = setup_top2_2way(10)
    assert phi.u == 46
    assert phi[StructureId.top(2, 10)] == 0.5
    pairs = [p for s, p in phi.items() if s.kind == "way"]
    assert len(pairs) == 45 and all(p == pytest.approx(1 / 90) for p in pairs)
    assert math.fsum(phi.entries.values()) == pytest.approx(1, abs=1e-12)


def test_choice_groups():
    assert choice_groups(4) == [(1, 2, 3, 4)]
    assert choice_groups(6) == [(1, 2, 3, 4), (1, 4, 5, 6)]
    assert choice_groups(10) == [(1, 2, 3, 4), (1, 5, 6, 7), (1, 8, 9, 10)]
    for m in range(4, 15):
        groups = choice_groups(m)
        assert len(groups) == math.ceil((m - 1) / 3)
        assert set().union(*groups) == set(range(1, m + 1))
        assert all(1 in g and len(set(g)) == 4 for g in groups)


def test_setup_choice234_single_group():
    phi, groups = setup_choice234(4)
    assert len(groups) == 1 and phi.u == 11
    assert phi[StructureId.choice({1, 2, 3, 4})] == pytest.approx(4 / 22)
    assert phi[StructureId.choice({1, 2, 4})] == pytest.approx(3 / 22)
    assert phi[StructureId.choice({3, 4})] == pytest.approx(1 / 22)


def test_setup_choice234_m10_structures():
    phi, groups = setup_choice234(10)
    assert len(groups) == 3 and phi.u == 33
    for s in phi:
        assert s.kind == "choice" and any(s.subset <= set(g) for g in groups)


def test_setups_need_four():
    with pytest.raises(DimensionError):
        setup_top2_2way(3)
    with pytest.raises(DimensionError):
        setup_choice234(3)
