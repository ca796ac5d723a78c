import itertools
import math

import numpy as np
import pytest
from scipy.stats import binom

from markov_ldp.errors import AlphaOutsideDomain, BudgetExceeded, NonconvexSamples
from markov_ldp.gibbs import BernoulliProduct, GaussMeasure, MarkovChain
from markov_ldp.ldp import (
    FreeEnergy,
    check_rate_curve,
    count_selection,
    deviation_rate_constrained,
    free_energy,
    mc_deviation,
    rate_at,
    rate_legendre,
)
from markov_ldp.potential import Bernoulli, GaussLog, Indicator, constant, tilt
from markov_ldp.pressure import pressure_transfer_bracket
from markov_ldp.shift import enumerate_words, full_shift, golden_mean_shift

P = 0.3
BETAS = np.linspace(-8, 8, 33)


def kl(a, p=P):
    return a * math.log(a / p) + (1 - a) * math.log((1 - a) / (1 - p))


@pytest.fixture(scope="module")
def bernoulli_fe():
    return free_energy(full_shift(2), Bernoulli([P, 1 - P]), Indicator(0, 2), BETAS)


def test_free_energy_closed_form(bernoulli_fe):
    for b in (-3.0, -0.5, 0.0, 0.7, 5.0):
        assert bernoulli_fe(b) == pytest.approx(math.log(P * math.exp(b) + 1 - P), abs=1e-13)
    assert bernoulli_fe.convex
    assert bernoulli_fe(0.0) == 0.0


def test_free_energy_from_single_symbol_word_sum():
    fe = free_energy(full_shift(2), Bernoulli([P, 1 - P]), Indicator(0, 2), BETAS, method="word_sum", n=1)
    for b in BETAS:
        assert fe(b) == pytest.approx(math.log(P * math.exp(b) + 1 - P), abs=1e-12)


def test_gauss_free_energy_bracket_and_derivative():
    M = 100
    base = pressure_transfer_bracket(GaussLog(), M, n_iter=40)
    tilted = pressure_transfer_bracket(tilt(GaussLog(), Indicator(0, M), 0.5), M, n_iter=40)
    lam_lo, lam_hi = tilted.lo - base.hi, tilted.hi - base.lo
    assert lam_hi - lam_lo < 0.02
    fe = free_energy(None, GaussLog(), Indicator(0, M), [-0.5, 0.5], M=M)
    assert lam_lo <= fe(0.5) <= lam_hi
    assert fe.derivative(0.0, 1e-3) == pytest.approx(math.log(4 / 3) / math.log(2), abs=1e-4)
    assert fe.derivative(0.0, 1e-3) == pytest.approx(0.41504, abs=1e-4)


def test_rate_function_examples(bernoulli_fe):
    curve = rate_legendre(bernoulli_fe, [0.3, 0.5])
    assert curve.rates[0] == pytest.approx(0.0, abs=1e-10)
    assert curve.rates[1] == pytest.approx(0.08718, abs=1e-5)
    assert curve.rates[1] == pytest.approx(kl(0.5), abs=1e-9)
    assert curve.mean == pytest.approx(P, abs=1e-6)


def test_rate_outside_domain(bernoulli_fe):
    curve = rate_legendre(bernoulli_fe, [1.2])
    assert math.isinf(curve.rates[0])
    with pytest.raises(AlphaOutsideDomain):
        rate_legendre(bernoulli_fe, [-0.1], strict=True)


def test_rate_at_edge_is_flagged(bernoulli_fe):
    # alpha = 1 needs beta -> infinity; the supremum binds at the range edge
    curve = rate_legendre(bernoulli_fe, [1.0])
    assert curve.boundary[0]
    assert curve.rates[0] == pytest.approx(-math.log(P), abs=1e-3)


def test_nonconvex_samples_rejected():
    betas = np.array([-1.0, 0.0, 1.0])
    fe = FreeEnergy(betas, np.array([0.0, 0.0, -1.0]), None, "given", False, 1.0)
    with pytest.raises(NonconvexSamples):
        rate_legendre(fe, [0.5])


def test_gauss_endpoint_rate():
    fe = free_energy(None, GaussLog(), Indicator(0, 100), BETAS, M=100)
    assert rate_at(fe, 1.0) == pytest.approx(2 * math.log((1 + math.sqrt(5)) / 2), abs=1e-3)


def test_curve_check(bernoulli_fe):
    curve = rate_legendre(bernoulli_fe, np.linspace(0.05, 0.95, 19))
    chk = check_rate_curve(bernoulli_fe, curve)
    assert chk.passed()
    for a, i in zip(curve.alphas, curve.rates):
        assert i == pytest.approx(kl(a), abs=1e-6)


def test_count_selection():
    assert count_selection(12, 0.4, ">=", 13).tolist() == [c >= 5 for c in range(13)]
    assert count_selection(10, 0.5, "<=", 11).tolist() == [c <= 5 for c in range(11)]
    # alpha * n an integer up to rounding still selects the boundary count
    assert count_selection(10, 0.3, ">=", 11)[3]
    with pytest.raises(ValueError):
        count_selection(10, 0.3, ">", 11)


def test_single_word_deviation():
    for n in (3, 8, 15):
        res = deviation_rate_constrained("lebesgue", full_shift(2), Bernoulli([0.5, 0.5]), Indicator(0, 2), 1.0, ">=", n)
        assert res.value == pytest.approx(-math.log(2), abs=1e-14)


def test_gauss_all_ones_cylinder():
    from markov_ldp.gauss import continuants
    for n in (6, 12, 20):
        res = deviation_rate_constrained("lebesgue", None, GaussLog(), Indicator(0, 20), 1.0, ">=", n)
        c = continuants([1] * n)
        exact = -math.log(c.q * (c.q + c.q_prev)) / n
        assert res.value == pytest.approx(exact, abs=1e-12)
        assert res.lo <= exact <= res.hi


def test_golden_mean_dp_against_enumeration():
    spec, n = golden_mean_shift(), 12
    res = deviation_rate_constrained("lebesgue", spec, constant(0.0, 2), Indicator(1, 2), 0.4, ">=", n)
    words = list(enumerate_words(spec, n))
    hits = sum(1 for w in words if sum(w) >= 5)
    assert res.value == pytest.approx(math.log(hits / len(words)) / n, abs=1e-12)


def test_empty_constraint_is_a_marker():
    # golden-mean words cannot have more than half ones
    res = deviation_rate_constrained("lebesgue", golden_mean_shift(), constant(0.0, 2), Indicator(1, 2), 0.9, ">=", 10)
    assert res.empty and res.value == -math.inf


def test_length_budget():
    with pytest.raises(BudgetExceeded):
        deviation_rate_constrained("lebesgue", full_shift(2), Bernoulli([0.5, 0.5]), Indicator(0, 2), 0.5, ">=", 5000)


def test_gibbs_ensemble_matches_binomial():
    model = BernoulliProduct([P, 1 - P])
    n = 20
    res = deviation_rate_constrained("gibbs", full_shift(2), model.potential, Indicator(0, 2), 0.5, ">=", n,
                                     model=model)
    assert res.value == pytest.approx(math.log(binom.sf(9, n, P)) / n, abs=1e-12)


def test_markov_gibbs_ensemble_matches_enumeration():
    mc = MarkovChain.parry(golden_mean_shift())
    n = 10
    res = deviation_rate_constrained("gibbs", mc.spec, mc.potential, Indicator(1, 2), 0.3, ">=", n, model=mc)
    total = sum(mc.cylinder_measure(w) for w in enumerate_words(mc.spec, n) if sum(w) >= 3)
    assert res.value == pytest.approx(math.log(total) / n, abs=1e-12)


def test_mc_binomial():
    res = mc_deviation(BernoulliProduct([0.5, 0.5]), Indicator(0, 2), 0.5, ">=", 10, 100_000, seed=3)
    exact = binom.sf(4, 10, 0.5)
    assert exact == pytest.approx(0.6230, abs=1e-4)
    assert res.ci[0] <= exact <= res.ci[1]


def test_mc_trivial_constraint():
    res = mc_deviation(BernoulliProduct([0.5, 0.5]), Indicator(0, 2), 0.0, ">=", 10, 500, seed=0)
    assert res.estimate == 1.0


def test_mc_zero_hits_is_a_marker():
    res = mc_deviation(BernoulliProduct([0.01, 0.99]), Indicator(0, 2), 1.0, ">=", 10, 1000, seed=0)
    assert res.hits == 0 and res.rate is None
    assert res.ci[0] == pytest.approx(0.0, abs=1e-15) and res.ci[1] > 1e-3


def test_mc_is_independent_of_workers():
    model = BernoulliProduct([0.3, 0.7])
    a = mc_deviation(model, Indicator(0, 2), 0.4, ">=", 30, 9000, seed=11, workers=1)
    b = mc_deviation(model, Indicator(0, 2), 0.4, ">=", 30, 9000, seed=11, workers=4)
    assert a.to_json() == b.to_json()


def test_mc_gauss_mean():
    res = mc_deviation(GaussMeasure(), Indicator(0, 6), 0.415, ">=", 100, 4000, seed=5)
    assert res.estimate == pytest.approx(0.5, abs=0.05)


def _brute_preimage(spec, n, anchor, symbol, alpha):
    num = den = 0
    for w in itertools.product(range(2), repeat=n):
        x = w + tuple(anchor)
        if spec.is_admissible(x):
            den += 1
            num += sum(1 for s in w if s == symbol) >= math.ceil(alpha * n - 1e-9)
    return math.log(num / den) / n


def test_golden_mean_preimage_and_periodic_enumeration():
    spec, n = golden_mean_shift(), 11
    pot, obs = constant(0.0, 2), Indicator(1, 2)
    res = deviation_rate_constrained("preimage", spec, pot, obs, 0.3, ">=", n, anchor=(1,))
    assert res.value == pytest.approx(_brute_preimage(spec, n, (1,), 1, 0.3), abs=1e-12)
    per = deviation_rate_constrained("periodic", spec, pot, obs, 0.3, ">=", n)
    closed = list(enumerate_words(spec, n, periodic_closure=True))
    hits = sum(1 for w in closed if sum(w) >= 4)
    assert per.value == pytest.approx(math.log(hits / len(closed)) / n, abs=1e-12)
