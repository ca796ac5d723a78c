"""Exact continued-fraction machinery for the Gauss map.

Digit words ``(a_1, ..., a_n)`` have entries ``>= 1``.  When a digit word is
used as a word of the shift, digit ``a`` is the symbol ``a - 1`` (see
:func:`digits_to_word`), so a truncation to ``M`` digits is the full shift on
``M`` symbols.

Continuants are Python integers throughout; floating point enters only at
final logarithms and square roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np

from .errors import PrecisionExhausted, Terminated

LOG2 = math.log(2.0)


def digits_to_word(digits: Sequence[int]) -> tuple:
    return tuple(int(a) - 1 for a in digits)


def word_to_digits(word: Sequence[int]) -> tuple:
    return tuple(int(s) + 1 for s in word)


@dataclass(frozen=True)
class Continuants:
    p_prev: int
    p: int
    q_prev: int
    q: int

    @property
    def determinant(self) -> int:
        """``p_n q_{n-1} - p_{n-1} q_n``, equal to ``(-1)**n``."""
        return self.p * self.q_prev - self.p_prev * self.q


def continuants(digits: Sequence[int]) -> Continuants:
    p_prev, p, q_prev, q = 1, 0, 0, 1
    for a in digits:
        if a < 1:
            raise ValueError(f"continued fraction digits must be >= 1, got {a}")
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
    return Continuants(p_prev, p, q_prev, q)


def continuant_table(M: int, n: int):
    """Continuants of all ``M**n`` digit words over ``1..M``, in lexicographic order.

    Returns four arrays ``(p_prev, p, q_prev, q)``.  They are ``int64`` while
    the largest denominator fits comfortably, else ``object`` arrays of
    Python integers, so entries are always exact.
    """
    dtype = np.int64 if (M + 1) ** n < 2**62 else object
    digits = np.arange(1, M + 1, dtype=dtype)
    pp = np.ones(1, dtype=dtype)
    p = np.zeros(1, dtype=dtype)
    qp = np.zeros(1, dtype=dtype)
    q = np.ones(1, dtype=dtype)
    for _ in range(n):
        pp, p = np.repeat(p, M), (p[:, None] * digits[None, :] + pp[:, None]).ravel()
        qp, q = np.repeat(q, M), (q[:, None] * digits[None, :] + qp[:, None]).ravel()
    return pp, p, qp, q


def cylinder_interval(digits: Sequence[int]) -> tuple:
    """Exact endpoints ``(lo, hi)`` of the digit cylinder as fractions."""
    c = continuants(digits)
    a = Fraction(c.p, c.q)
    b = Fraction(c.p + c.p_prev, c.q + c.q_prev)
    return (a, b) if a < b else (b, a)


def lebesgue_length(digits: Sequence[int]) -> Fraction:
    c = continuants(digits)
    return Fraction(1, c.q * (c.q + c.q_prev))


def gauss_mass(digits: Sequence[int]) -> float:
    """Gauss measure ``(1/log 2) dx/(1+x)`` of a digit cylinder.

    ``(1+hi)/(1+lo) = 1 + 1/D`` with ``D = (q + q')(q + p)`` up to
    orientation, by the determinant identity; this avoids cancellation.
    """
    c = continuants(digits)
    return _gauss_mass(c.p_prev, c.p, c.q_prev, c.q, len(digits))


def _gauss_mass(pp, p, qp, q, n):
    D = (q + qp) * (q + p)
    # endpoint p/q is the upper one exactly when n is odd
    if n % 2:
        return -math.log1p(-1.0 / D) / LOG2
    return math.log1p(1.0 / D) / LOG2


def gauss_log_mass_table(M: int, n: int) -> np.ndarray:
    pp, p, qp, q = continuant_table(M, n)
    D = ((q + qp) * (q + p)).astype(float)
    if n % 2:
        return np.log(-np.log1p(-1.0 / D) / LOG2)
    return np.log(np.log1p(1.0 / D) / LOG2)


def gauss_interval_mass(lo: float, hi: float) -> float:
    return math.log((1.0 + hi) / (1.0 + lo)) / LOG2


def gauss_tail(digit: int) -> float:
    """Gauss measure of ``{x : a_1(x) > digit}`` = ``log2(1 + 1/(digit+1))``."""
    return math.log1p(1.0 / (digit + 1)) / LOG2


@dataclass(frozen=True)
class PeriodicPoint:
    x: float
    weight: float
    log_weight: float


def periodic_point(digits: Sequence[int]) -> PeriodicPoint:
    """The fixed point of ``T^n`` whose expansion repeats ``digits``.

    ``x`` is the root in (0, 1) of ``q' x^2 + (q - p') x - p = 0`` and
    ``weight = (q + x q')**-2 = |DT^n(x)|**-1``.
    """
    if not digits:
        raise ValueError("empty digit word")
    c = continuants(digits)
    b = c.q - c.p_prev
    disc = b * b + 4 * c.q_prev * c.p
    shift = 64
    root = math.isqrt(disc << (2 * shift))
    x = Fraction(2 * c.p << shift, (b << shift) + root)
    # one Newton step on the exact quadratic
    xf = Fraction(float(x))
    f = c.q_prev * xf * xf + b * xf - c.p
    df = 2 * c.q_prev * xf + b
    x = float(xf - f / df)
    log_w = -2.0 * (math.log(c.q) + math.log1p(x * (c.q_prev / c.q)))
    return PeriodicPoint(x, math.exp(log_w), log_w)


def periodic_log_weight_table(M: int, n: int) -> np.ndarray:
    """``log |DT^n(x_w)|^-1`` at the period-``n`` point of every digit word over ``1..M``."""
    pp, p, qp, q = (a.astype(float) for a in continuant_table(M, n))
    b = q - pp
    x = 2.0 * p / (b + np.sqrt(b * b + 4.0 * qp * p))
    return -2.0 * (np.log(q) + np.log1p(x * qp / q))


def preimage_weight(digits: Sequence[int], y: float) -> float:
    """``|DT^n(x)|**-1`` at the preimage ``x`` of ``y`` with the given digits."""
    return math.exp(preimage_log_weight(digits, y))


def preimage_log_weight(digits: Sequence[int], y: float) -> float:
    c = continuants(digits)
    return -2.0 * (math.log(c.q) + math.log1p(y * (c.q_prev / c.q)))


def _as_interval(x, tol):
    if isinstance(x, tuple):
        lo, hi = (Fraction(v) for v in x)
        return lo, hi
    if isinstance(x, mpmath.mpf):
        man, exp = x.man_exp
        xf = Fraction(int(man)) * Fraction(2) ** int(exp)
        if tol is None:
            tol = abs(xf) * Fraction(2) ** (-(mpmath.mp.prec - 2))
    elif isinstance(x, float):
        xf = Fraction(x)
        if tol is None:
            tol = Fraction(math.ulp(x))
    else:
        xf = Fraction(x)
        if tol is None:
            tol = 0
    tol = Fraction(tol)
    return xf - tol, xf + tol


def cf_expand(x, n: int, tol=None) -> list:
    """First ``n`` continued-fraction digits of ``x`` in (0, 1).

    ``x`` may be an int/Fraction/decimal string (exact), a float (taken as
    exact to one ulp), an ``mpmath.mpf`` (exact to its working precision) or
    an explicit ``(lo, hi)`` enclosure.  Digits are emitted only while every
    point of the enclosure shares them.

    Raises
    ------
    Terminated
        ``x`` is rational and its expansion ends before ``n`` digits.
    PrecisionExhausted
        The enclosure straddles a cylinder boundary before ``n`` digits.
    """
    lo, hi = _as_interval(x, tol)
    if lo > hi:
        lo, hi = hi, lo
    if hi <= 0 or lo >= 1 or (lo == hi and hi == 1):
        raise ValueError(f"x must lie in (0, 1), got {x!r}")
    if lo <= 0 or hi >= 1:
        raise PrecisionExhausted("enclosure is not inside (0, 1)")
    a, b = lo.numerator, lo.denominator
    c, d = hi.numerator, hi.denominator
    digits = []
    while len(digits) < n:
        if a == 0 and c == 0:
            raise Terminated(f"rational expansion ended after {len(digits)} digits", digits)
        if a == 0 or c == 0:
            raise PrecisionExhausted(f"precision exhausted after {len(digits)} digits")
        # 1/x is decreasing: 1/hi <= 1/lo
        k_hi, r_hi = divmod(d, c)
        k_lo, r_lo = divmod(b, a)
        if k_hi != k_lo:
            raise PrecisionExhausted(f"precision exhausted after {len(digits)} digits")
        digits.append(k_lo)
        # new interval (1/hi - k, 1/lo - k)
        a, b, c, d = r_hi, c, r_lo, a
    return digits


def sample_gauss(seed, n_digits: int, size: Optional[int] = None):
    """Draw digit sequences of points distributed by the Gauss measure.

    ``x = 2**U - 1`` with ``U`` uniform on (0, 1), generated from a
    :class:`numpy.random.Generator` (PCG64) seeded by ``seed``.  ``U`` carries
    ``4 n + 64`` random bits, refined with further bits whenever the
    expansion runs out of precision, so the output depends on ``seed`` only.

    Returns an ``(n_digits,)`` array, or ``(size, n_digits)`` when ``size`` is
    given.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = 1 if size is None else size
    out = np.empty((count, n_digits), dtype=np.int64)
    base_bits = 4 * n_digits + 64
    for i in range(count):
        out[i] = _sample_one(rng, n_digits, base_bits)
    return out[0] if size is None else out


def _random_bits(rng, bits):
    chunks = rng.integers(0, 2**32, size=(bits + 31) // 32, dtype=np.uint64)
    value = 0
    for c in chunks:
        value = (value << 32) | int(c)
    return value, 32 * len(chunks)


def _sample_one(rng, n_digits, bits):
    N, P = _random_bits(rng, bits)
    while True:
        with mpmath.workprec(P + 40):
            U = mpmath.mpf(N) / mpmath.mpf(2) ** P
            # shift off zero so the enclosure stays inside (0, 1)
            U += mpmath.mpf(2) ** (-P - 1)
            x = mpmath.power(2, U) - 1
            man, exp = x.man_exp
            xf = Fraction(int(man)) * Fraction(2) ** int(exp)
        tol = Fraction(1, 2 ** (P + 30))
        try:
            return cf_expand((xf - tol, xf + tol), n_digits)
        except PrecisionExhausted:
            extra, got = _random_bits(rng, P)
            N, P = (N << got) | extra, P + got


@dataclass(frozen=True)
class DigitStats:
    digit: int
    count: int
    n: int
    running_means: tuple


def digit_frequency(digits: Sequence[int], k: int) -> DigitStats:
    """``F_{k,n}``, the number of occurrences of digit ``k``, with running means."""
    hits = np.cumsum(np.asarray(digits) == k)
    n = len(hits)
    means = tuple((hits / np.arange(1, n + 1)).tolist()) if n else ()
    return DigitStats(k, int(hits[-1]) if n else 0, n, means)
