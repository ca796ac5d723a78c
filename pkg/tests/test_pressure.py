import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markov_ldp.errors import InadmissibleAnchor
from markov_ldp.gauss import continuant_table, periodic_point
from markov_ldp.gibbs import MarkovChain
from markov_ldp.potential import Bernoulli, GaussLog, Indicator, LocallyConstant, constant, tilt
from markov_ldp.pressure import (
    pressure_periodic,
    pressure_preimage,
    pressure_spectral,
    pressure_transfer_bracket,
    pressure_word_sum,
)
from markov_ldp.shift import build_shift, full_shift, golden_mean_shift

LOG_GOLDEN = math.log((1 + math.sqrt(5)) / 2)


def test_word_sum_golden_mean():
    est = pressure_word_sum(golden_mean_shift(), constant(0.0, 2), 10)
    assert est.value == pytest.approx(math.log(144) / 10, abs=1e-14)
    assert est.direction == "upper"
    assert est.value >= LOG_GOLDEN


@pytest.mark.parametrize("n", [1, 5, 13])
def test_fair_coin_has_zero_pressure(n):
    spec, pot = full_shift(2), Bernoulli([0.5, 0.5])
    assert pressure_word_sum(spec, pot, n).value == pytest.approx(0.0, abs=1e-15)
    assert pressure_periodic(spec, pot, n).value == pytest.approx(0.0, abs=1e-15)
    assert pressure_preimage(spec, pot, n, (1,)).value == pytest.approx(0.0, abs=1e-15)


def test_gauss_word_sum_direct_summation():
    M = 20
    est2 = pressure_word_sum(full_shift(M), GaussLog(), 2)
    q = np.array([[b * a + 1 for b in range(1, M + 1)] for a in range(1, M + 1)], dtype=float)
    assert est2.value == pytest.approx(0.5 * math.log((q**-2).sum()), rel=1e-13)
    # sup-weights overshoot P = 0 by at most the distortion D_2 / 2 = log 4 / 2
    assert 0.0 <= est2.value <= math.log(4) / 2
    assert est2.value >= pressure_word_sum(full_shift(M), GaussLog(), 4).value


def test_periodic_lucas():
    est = pressure_periodic(golden_mean_shift(), constant(0.0, 2), 12)
    assert est.value == pytest.approx(math.log(322) / 12, abs=1e-14)


def test_periodic_single_symbol():
    assert pressure_periodic(full_shift(1), constant(0.7, 1), 9).value == pytest.approx(0.7)


def test_periodic_gauss_two_digits():
    est = pressure_periodic(full_shift(2), GaussLog(), 1)
    x1 = (-1 + math.sqrt(5)) / 2
    x2 = math.sqrt(2) - 1
    assert est.value == pytest.approx(math.log(x1**2 + x2**2), abs=1e-12)
    assert est.value == pytest.approx(-0.5914, abs=1e-4)
    assert est.lo <= est.value <= est.hi


def test_periodic_start_symbol():
    spec = golden_mean_shift()
    est = pressure_periodic(spec, constant(0.0, 2), 8, start_symbol=1)
    # closed words starting with 1: (A^8)[1, 1] = F(7)
    A = np.array([[1, 1], [1, 0]])
    assert est.value == pytest.approx(math.log(np.linalg.matrix_power(A, 8)[1, 1]) / 8)


def test_preimage_gauss_two_digits():
    spec, g = full_shift(2), GaussLog()
    assert pressure_preimage(spec, g, 1, 0.0).value == pytest.approx(math.log(5 / 4), abs=1e-14)
    y = (math.sqrt(5) - 1) / 2
    value = pressure_preimage(spec, g, 1, y).value
    assert value == pytest.approx(math.log((1 + y) ** -2 + (2 + y) ** -2), abs=1e-14)
    assert value == pytest.approx(-0.63892, abs=1e-5)


def test_preimage_golden_mean_column_sum():
    est = pressure_preimage(golden_mean_shift(), constant(0.0, 2), 5, (0,))
    A = np.array([[1, 1], [1, 0]])
    assert est.value == pytest.approx(math.log(np.linalg.matrix_power(A, 5)[:, 0].sum()) / 5)


def test_preimage_bad_anchor():
    with pytest.raises(InadmissibleAnchor):
        pressure_preimage(golden_mean_shift(), constant(0.0, 2), 5, (1, 1))
    with pytest.raises(InadmissibleAnchor):
        pressure_preimage(full_shift(3), GaussLog(), 3, 1.5)


def test_transfer_bracket_gauss_is_zero():
    est = pressure_transfer_bracket(GaussLog(), 100, grid_size=64, n_iter=40)
    assert est.lo <= 0.0 <= est.hi
    assert est.width < 0.01


def test_transfer_bracket_truncated_two_digits_matches_periodic():
    est = pressure_transfer_bracket(GaussLog(), 2, grid_size=32, n_iter=40, tail=False)
    per = pressure_periodic(full_shift(2), GaussLog(), 14)
    assert abs(est.value - per.value) < 0.01
    # the upper end covers the full system
    assert est.hi >= 0.0


def test_tilt_by_zero_reproduces_bracket():
    a = pressure_transfer_bracket(GaussLog(), 30, grid_size=32, n_iter=30)
    b = pressure_transfer_bracket(tilt(GaussLog(), Indicator(0, 30), 0.0), 30, grid_size=32, n_iter=30)
    assert (a.lo, a.hi, a.value) == (b.lo, b.hi, b.value)


def test_spectral_golden_mean():
    assert pressure_spectral(golden_mean_shift(), constant(0.0, 2)).value == pytest.approx(LOG_GOLDEN, abs=1e-14)


def test_markov_potential_has_zero_pressure():
    mc = MarkovChain.parry(golden_mean_shift())
    assert pressure_spectral(mc.spec, mc.potential).value == pytest.approx(0.0, abs=1e-12)
    assert pressure_periodic(mc.spec, mc.potential, 30).value == pytest.approx(0.0, abs=1e-3)


def _brute_sums(spec, lc, n):
    """Word (sup over continuation) and periodic sums by enumeration."""
    r = lc.depth
    word, per = [], []
    for w in itertools.product(range(spec.alphabet_size), repeat=n):
        if not spec.is_admissible(w):
            continue
        sups = []
        for tail in itertools.product(range(spec.alphabet_size), repeat=r - 1):
            x = w + tail
            if spec.is_admissible(x):
                sups.append(sum(lc.values[x[i:i + r]] for i in range(n)))
        word.append(max(sups))
        if spec.allowed(w[-1], w[0]):
            x = w * (r + 1)
            per.append(sum(lc.values[x[i:i + r]] for i in range(n)))
    lse = lambda v: math.log(sum(math.exp(t) for t in v)) / n
    return lse(word), lse(per)


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.floats(-2, 2), min_size=3, max_size=3), n=st.integers(2, 9))
def test_window_chain_matches_enumeration(vals, n):
    spec = golden_mean_shift()
    lc = LocallyConstant(2, dict(zip([(0, 0), (0, 1), (1, 0)], vals)), 2)
    word, per = _brute_sums(spec, lc, n)
    assert pressure_word_sum(spec, lc, n).value == pytest.approx(word, abs=1e-12)
    assert pressure_periodic(spec, lc, n).value == pytest.approx(per, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(M=st.integers(2, 4), n=st.integers(1, 6))
def test_periodic_gauss_enumeration_matches_scalar_points(M, n):
    ref = pressure_periodic(full_shift(M), GaussLog(), n, method="enumerate")
    table = np.array([periodic_point([a + 1 for a in w]).log_weight
                      for w in itertools.product(range(M), repeat=n)])
    assert ref.value == pytest.approx(math.log(np.exp(table).sum()) / n, abs=1e-12)


def test_periodic_gauss_trace_agrees_at_length_eight():
    M, n = 4, 8
    enum = pressure_periodic(full_shift(M), GaussLog(), n, method="enumerate")
    trace = pressure_periodic(full_shift(M), GaussLog(), n, method="trace", tail=False)
    assert trace.value == pytest.approx(enum.value, abs=1e-8)


def test_word_sum_bounds_agree_with_table():
    M, n = 6, 3
    lo, hi = GaussLog().bounds_table(n, M)
    _, _, qp, q = continuant_table(M, n)
    assert np.allclose(hi, -2 * np.log(q.astype(float)))
    est = pressure_word_sum(full_shift(M), GaussLog(), n)
    assert est.meta["inf_sum"] <= est.value


def test_custom_shift_periodic():
    spec = build_shift(3, [[1, 1, 0], [0, 1, 1], [1, 0, 1]])
    A = spec.transition.astype(int)
    est = pressure_periodic(spec, constant(0.0, 3), 7)
    assert est.value == pytest.approx(math.log(np.trace(np.linalg.matrix_power(A, 7))) / 7)
