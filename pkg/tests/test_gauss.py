import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.stats.proportion import proportion_confint

from markov_ldp.errors import PrecisionExhausted, Terminated
from markov_ldp.gauss import (
    cf_expand,
    continuant_table,
    continuants,
    cylinder_interval,
    digit_frequency,
    digits_to_word,
    gauss_interval_mass,
    gauss_log_mass_table,
    gauss_mass,
    lebesgue_length,
    periodic_log_weight_table,
    periodic_point,
    preimage_weight,
    sample_gauss,
    word_to_digits,
)

PHI = (math.sqrt(5) - 1) / 2
digit_words = st.lists(st.integers(1, 40), min_size=1, max_size=12)


def test_digit_symbol_offset():
    assert digits_to_word([1, 2, 7]) == (0, 1, 6)
    assert word_to_digits((0, 1, 6)) == (1, 2, 7)


def test_cf_expand_quadratic_irrationals():
    with mpmath.workprec(400):
        golden = (mpmath.sqrt(5) - 1) / 2
        silver = mpmath.sqrt(2) - 1
        assert cf_expand(golden, 60) == [1] * 60
        assert cf_expand(silver, 60) == [2] * 60


def test_cf_expand_float_limits_precision():
    assert cf_expand(PHI, 20) == [1] * 20
    with pytest.raises(PrecisionExhausted):
        cf_expand(PHI, 200)


def test_cf_expand_rational_terminates():
    with pytest.raises(Terminated) as info:
        cf_expand(Fraction(1, 3), 5)
    assert info.value.digits == [3]
    assert cf_expand("415/1001", 7) == [2, 2, 2, 2, 1, 11, 2]


def test_cylinder_examples():
    assert cylinder_interval([1]) == (Fraction(1, 2), Fraction(1))
    assert lebesgue_length([1]) == Fraction(1, 2)
    assert cylinder_interval([2]) == (Fraction(1, 3), Fraction(1, 2))
    assert lebesgue_length([2]) == Fraction(1, 6)
    assert cylinder_interval([1, 1]) == (Fraction(1, 2), Fraction(2, 3))
    assert lebesgue_length([1, 1]) == Fraction(1, 6)


def test_gauss_mass_examples():
    for k in (1, 2, 3, 7):
        assert gauss_mass([k]) == pytest.approx(math.log((k + 1) ** 2 / (k * (k + 2))) / math.log(2), rel=1e-14)
    assert gauss_mass([1]) == pytest.approx(0.415037, abs=1e-6)
    assert gauss_mass([1, 1]) == pytest.approx(math.log(10 / 9) / math.log(2), rel=1e-14)


def test_periodic_point_examples():
    assert periodic_point([1]).x == pytest.approx(PHI, abs=1e-15)
    assert periodic_point([1]).weight == pytest.approx(0.381966, abs=1e-6)
    assert periodic_point([2]).x == pytest.approx(math.sqrt(2) - 1, abs=1e-15)
    assert periodic_point([2]).weight == pytest.approx(0.171573, abs=1e-6)
    pp = periodic_point([1, 2])
    assert pp.x == pytest.approx(math.sqrt(3) - 1, abs=1e-15)
    assert pp.weight == pytest.approx((3 + pp.x) ** -2, rel=1e-14)
    assert pp.weight == pytest.approx(0.07180, abs=1e-5)


def test_preimage_weight_examples():
    assert preimage_weight([1], 0.0) == 1.0
    assert preimage_weight([1], 1.0) == pytest.approx(0.25)
    assert preimage_weight([1, 1], 0.5) == pytest.approx(0.16)


def test_digit_frequency_examples():
    assert digit_frequency([1, 1, 2, 1], 1).count == 3
    assert digit_frequency([1, 2] * 5, 2).count == 5
    assert digit_frequency(cf_expand(PHI, 15), 1).count == 15


def test_sampling_is_reproducible():
    a = sample_gauss(123, 15, 50)
    b = sample_gauss(123, 15, 50)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_gauss(124, 15, 50))


def test_sampled_first_digit_frequency():
    trials = 20000
    first = sample_gauss(7, 1, trials)[:, 0]
    hits = int((first == 1).sum())
    lo, hi = proportion_confint(hits, trials, alpha=0.001, method="wilson")
    assert lo <= gauss_mass([1]) <= hi


def test_sampled_cdf_at_half():
    # first digit >= 2 exactly when x < 1/2
    trials = 20000
    first = sample_gauss(11, 1, trials)[:, 0]
    hits = int((first >= 2).sum())
    lo, hi = proportion_confint(hits, trials, alpha=0.001, method="wilson")
    assert lo <= math.log(1.5) / math.log(2) <= hi


def test_tables_match_scalar_functions():
    M, n = 4, 3
    pp, p, qp, q = continuant_table(M, n)
    lm = gauss_log_mass_table(M, n)
    lw = periodic_log_weight_table(M, n)
    for i, d in enumerate(np.ndindex(*(M,) * n)):
        digits = [a + 1 for a in d]
        c = continuants(digits)
        assert (pp[i], p[i], qp[i], q[i]) == (c.p_prev, c.p, c.q_prev, c.q)
        assert lm[i] == pytest.approx(math.log(gauss_mass(digits)), rel=1e-12)
        assert lw[i] == pytest.approx(periodic_point(digits).log_weight, rel=1e-12)


def test_large_continuant_table_is_exact():
    # q of the all-ones word of length 100 is a Fibonacci number beyond 2**64
    _, _, _, q = continuant_table(1, 100)
    assert q.dtype == object
    assert q[0] == continuants([1] * 100).q > 2**64


@settings(max_examples=60, deadline=None)
@given(digits_=digit_words)
def test_continuant_determinant(digits_):
    c = continuants(digits_)
    assert abs(c.q * c.p_prev - c.p * c.q_prev) == 1


@settings(max_examples=60, deadline=None)
@given(digits_=digit_words)
def test_cylinder_endpoint_expands_to_digits(digits_):
    lo, hi = cylinder_interval(digits_)
    mid = (lo + hi) / 2
    assert cf_expand(mid, len(digits_)) == digits_
    assert hi - lo == lebesgue_length(digits_)


@settings(max_examples=60, deadline=None)
@given(digits_=st.lists(st.integers(1, 40), min_size=1, max_size=6))
def test_periodic_point_lies_in_cylinder(digits_):
    lo, hi = cylinder_interval(digits_)
    x = periodic_point(digits_).x
    assert float(lo) <= x <= float(hi)


@settings(max_examples=60, deadline=None)
@given(digits_=st.lists(st.integers(1, 60), min_size=1, max_size=10))
def test_gauss_mass_matches_interval_integral(digits_):
    lo, hi = cylinder_interval(digits_)
    with mpmath.workprec(600):
        a = mpmath.mpf(lo.numerator) / lo.denominator
        b = mpmath.mpf(hi.numerator) / hi.denominator
        expected = float(mpmath.log((1 + b) / (1 + a)) / mpmath.log(2))
    assert gauss_mass(digits_) == pytest.approx(expected, rel=1e-12)


def test_interval_mass_helper():
    assert gauss_interval_mass(0.0, 1.0) == pytest.approx(1.0)
    assert gauss_interval_mass(0.5, 1.0) == pytest.approx(gauss_mass([1]))
