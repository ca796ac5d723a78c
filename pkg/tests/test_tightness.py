import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markov_ldp.errors import BudgetExceeded, ThetaOutOfRange, UnsupportedModel
from markov_ldp.gibbs import BernoulliProduct, GaussMeasure, MarkovChain
from markov_ldp.tightness import (
    VisitDistribution,
    build_schedule,
    check_expo_bound,
    fixed_schedule,
    minimal_level,
    visit_distribution,
)
from markov_ldp.shift import enumerate_words, golden_mean_shift


def _brute_visits(model, schedule, n, extra):
    """Exact law of the exit count by enumerating words of length ``n + extra``."""
    M = model.alphabet_size
    L = n + extra
    levels = [schedule.level(j) for j in range(L)]
    p = np.zeros(n + 1)
    words = enumerate_words(model.spec, L) if isinstance(model, MarkovChain) else itertools.product(range(M), repeat=L)
    for w in words:
        mass = model.cylinder_measure(tuple(w))
        if mass == 0.0:
            continue
        count = sum(any(w[i + j] > levels[j] for j in range(L - i)) for i in range(n))
        p[count] += mass
    return p


def test_geometric_levels():
    sched = build_schedule(BernoulliProduct.geometric(0.5, 60), 0.2, 10)
    assert sched.levels == (2, 4, 6, 9, 11, 13, 16, 18, 20, 23, 25)
    assert sched.certified and sched.check()
    # past the stored depth the same rule applies
    assert sched.level(11) == minimal_level(sched.model, 0.2**12)


def test_theta_out_of_range():
    with pytest.raises(ThetaOutOfRange):
        build_schedule(BernoulliProduct.geometric(0.5, 60), 0.5, 4)
    with pytest.raises(ThetaOutOfRange):
        build_schedule(BernoulliProduct.geometric(0.5, 60), 0.0, 4)
    # a declared constant tightens the cap to c0**-3
    with pytest.raises(ThetaOutOfRange):
        build_schedule(GaussMeasure(M=6, c0=2.0), 0.2, 3)


def test_gauss_first_level():
    sched = build_schedule(GaussMeasure(), 0.2, 2)
    # symbol 5 is digit 6: mu{a_1 > 6} = log2(8/7) <= 0.2 < log2(7/6)
    assert sched.levels[0] == 5
    assert not sched.certified
    assert sched.tail(0) == pytest.approx(math.log2(8 / 7), rel=1e-12)


def test_level_search_budget():
    with pytest.raises(BudgetExceeded):
        minimal_level(GaussMeasure(), 1e-30)


def test_unconstrained_schedule_never_exits():
    model = BernoulliProduct([0.5, 0.5])
    dist = visit_distribution(model, fixed_schedule(model, [math.inf] * 12), 8)
    assert dist.p[0] == pytest.approx(1.0, abs=1e-15)


def test_single_step_is_union_of_levels():
    weights = [0.5, 0.3, 0.15, 0.05]
    model = BernoulliProduct(weights)
    sched = fixed_schedule(model, (1, 2, 2, 3))
    dist = visit_distribution(model, sched, 1)
    stay = (1 - 0.2) * (1 - 0.05) * (1 - 0.05)
    assert dist.p[1] == pytest.approx(1 - stay, abs=1e-14)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_product_dp_against_enumeration(n):
    model = BernoulliProduct([0.5, 0.3, 0.15, 0.05])
    sched = fixed_schedule(model, (1, 2, 2, 3))
    dist = visit_distribution(model, sched, n)
    assert np.allclose(dist.p, _brute_visits(model, sched, n, 3), atol=1e-14)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_markov_dp_against_enumeration(n):
    mc = MarkovChain.parry(golden_mean_shift())
    sched = fixed_schedule(mc, (0, 0, 1, 1))
    dist = visit_distribution(mc, sched, n)
    assert np.allclose(dist.p, _brute_visits(mc, sched, n, 2), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(raw=st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
       levels=st.lists(st.integers(0, 2), min_size=3, max_size=3),
       n=st.integers(1, 5))
def test_product_dp_property(raw, levels, n):
    weights = np.array(raw) / sum(raw)
    model = BernoulliProduct(weights.tolist())
    sched = fixed_schedule(model, tuple(sorted(levels)) + (2,))
    dist = visit_distribution(model, sched, n)
    assert dist.p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(dist.p, _brute_visits(model, sched, n, 3), atol=1e-13)


def test_distribution_sums_to_one():
    model = BernoulliProduct.geometric(0.5, 60)
    for theta in (0.2, 0.01):
        dist = visit_distribution(model, build_schedule(model, theta, 10), 14)
        assert dist.p.sum() == pytest.approx(1.0, abs=1e-12)
        assert (dist.p >= -1e-15).all()


def test_expo_bound_values():
    dist = VisitDistribution(np.array([1.0] + [0.0] * 10), 10, "given")
    rep = check_expo_bound(dist, 0.2)
    assert rep.bound[0] == pytest.approx(2**10 / 0.2)
    assert rep.bound[10] == pytest.approx(2**10 * 0.8**10 / 0.2, rel=1e-12)
    assert rep.bound[10] == pytest.approx(549.76, abs=0.01)
    assert rep.passed and rep.informative_from is None


def test_informative_range_small_theta():
    model = BernoulliProduct.geometric(0.5, 60)
    dist = visit_distribution(model, build_schedule(model, 0.01, 14), 14)
    rep = check_expo_bound(dist, 0.01)
    assert rep.informative_from == 4
    assert rep.passed


def test_expo_bound_flags_violation():
    dist = VisitDistribution(np.array([0.0, 0.0, 1.0]), 2, "given")
    assert not check_expo_bound(dist, 0.01).passed


def test_gauss_monte_carlo_path():
    model = GaussMeasure()
    sched = build_schedule(model, 0.2, 6)
    dist = visit_distribution(model, sched, 6, trials=4000, seed=2)
    assert dist.method == "monte_carlo"
    assert dist.p.sum() == pytest.approx(1.0)
    assert (dist.ci[:, 0] <= dist.p).all() and (dist.p <= dist.ci[:, 1]).all()
    again = visit_distribution(model, sched, 6, trials=4000, seed=2)
    assert np.array_equal(dist.p, again.p)
    assert check_expo_bound(dist, 0.2).passed


def test_bad_lengths_and_models():
    model = BernoulliProduct([0.5, 0.5])
    sched = fixed_schedule(model, (0,))
    with pytest.raises(ValueError):
        visit_distribution(model, sched, 0)
    with pytest.raises(BudgetExceeded):
        visit_distribution(model, sched, 1000)
    with pytest.raises(UnsupportedModel):
        visit_distribution(object(), sched, 3)
