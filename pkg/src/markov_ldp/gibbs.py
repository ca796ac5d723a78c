"""Reference measures with exact cylinder masses and Gibbs-property checks.

Violations found by the checks are returned as data in report objects; only
budget problems raise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import AlphabetTooLargeForEnumeration, InadmissibleWord
from .gauss import (
    LOG2,
    continuants,
    gauss_log_mass_table,
    gauss_mass,
    gauss_tail,
    sample_gauss,
    word_to_digits,
)
from .potential import Bernoulli, GaussLog, LocallyConstant, Potential
from .shift import DEFAULT_WORD_BUDGET, ShiftSpec, admissible_mask, full_shift, index_to_word


class GibbsModel:
    """Common interface.

    Attributes
    ----------
    spec : ShiftSpec
        Truncated shift used for enumeration (``alphabet_size`` is ``M``).
    potential : Potential
        Potential whose Gibbs state this measure is.
    P : float
        Pressure constant of ``potential``.
    c0 : float or None
        Declared Gibbs constant, if known.
    """

    kind = "abstract"
    spec: ShiftSpec
    potential: Potential
    P: float = 0.0
    c0: Optional[float] = None

    @property
    def alphabet_size(self) -> int:
        return self.spec.alphabet_size

    def log_cylinder_measure(self, word) -> float:
        raise NotImplementedError

    def cylinder_measure(self, word) -> float:
        return math.exp(self.log_cylinder_measure(word))

    def log_measure_table(self, n: int, budget: int = DEFAULT_WORD_BUDGET) -> np.ndarray:
        """``log mu[w]`` for all ``M**n`` strings, ``-inf`` where inadmissible."""
        raise NotImplementedError

    def tail(self, i: int) -> float:
        """``mu{x : x_0 > i}``."""
        raise NotImplementedError

    def tail_after(self, word) -> float:
        """``mu[w] - sum_{a < M} mu[w a]``: mass of ``[w]`` escaping the truncation next."""
        raise NotImplementedError

    def with_c0(self, c0: float) -> "GibbsModel":
        self.c0 = c0
        return self


def _check_budget(M, n, budget):
    if M**n > budget:
        raise AlphabetTooLargeForEnumeration(f"{M}^{n} strings exceed the budget of {budget}")


class BernoulliProduct(GibbsModel):
    """Product measure ``m^{(x)N}``; the Gibbs state of ``log m[x_0]`` with ``P = 0``, ``c0 = 1``.

    ``tail_fn`` gives ``sum_{k > i} m[k]`` in closed form for every ``i``,
    including symbols beyond the truncation; without it the declared deficit
    ``1 - sum(weights)`` is placed beyond the last symbol.
    """

    kind = "bernoulli"

    def __init__(self, weights: Sequence[float], tail_fn: Optional[Callable[[int], float]] = None, c0: Optional[float] = 1.0):
        self.potential = Bernoulli(weights)
        self.weights = self.potential.weights
        self.spec = full_shift(len(self.weights))
        self.tail_mass = self.potential.tail_mass
        self._tail_fn = tail_fn
        self.c0 = c0
        self._log_w = np.log(self.weights)

    @classmethod
    def geometric(cls, ratio: float = 0.5, M: int = 60) -> "BernoulliProduct":
        """``m[k] = (1 - r) r**k`` on the first ``M`` symbols, exact tail ``r**(i+1)``."""
        k = np.arange(M)
        return cls((1 - ratio) * ratio**k, tail_fn=lambda i: ratio ** (i + 1) if i >= 0 else 1.0)

    def log_cylinder_measure(self, word):
        word = self.spec.check_word(word)
        return float(sum(self._log_w[s] for s in word))

    def log_measure_table(self, n, budget=DEFAULT_WORD_BUDGET):
        _check_budget(self.alphabet_size, n, budget)
        return self.potential.bounds_table(n, self.alphabet_size)[0]

    def tail(self, i):
        if self._tail_fn is not None:
            return float(self._tail_fn(i))
        if i < 0:
            return 1.0
        return float(self.weights[i + 1:].sum()) + self.tail_mass

    def tail_after(self, word):
        return self.cylinder_measure(word) * self.tail_mass

    def sample(self, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
        if self.tail_mass > 1e-15:
            raise ValueError("sampling needs weights summing to 1")
        return rng.choice(self.alphabet_size, size=(size, n), p=self.weights / self.weights.sum())


class GaussMeasure(GibbsModel):
    """Gauss measure ``dx / ((1+x) log 2)``, the Gibbs state of GaussLog with ``P = 0``.

    Symbol ``s`` is digit ``s + 1``; ``M`` truncates enumeration only, since
    cylinder masses and tails are exact for every digit.
    """

    kind = "gauss"

    def __init__(self, M: int = 6, c0: Optional[float] = None):
        self.spec = full_shift(M)
        self.potential = GaussLog()
        self.c0 = c0

    def log_cylinder_measure(self, word):
        if not word or min(word) < 0:
            raise InadmissibleWord(f"{tuple(word)} is not a digit word")
        return math.log(gauss_mass(word_to_digits(word)))

    def log_measure_table(self, n, budget=DEFAULT_WORD_BUDGET):
        _check_budget(self.alphabet_size, n, budget)
        return gauss_log_mass_table(self.alphabet_size, n)

    def tail(self, i):
        # digits > i + 1
        return gauss_tail(i + 1) if i >= 0 else 1.0

    def tail_after(self, word):
        c = continuants(word_to_digits(word))
        M = self.alphabet_size
        a = Fraction(c.p, c.q)
        b = Fraction(c.p * (M + 1) + c.p_prev, c.q * (M + 1) + c.q_prev)
        lo, hi = min(a, b), max(a, b)
        # log((1+hi)/(1+lo)) via log1p of an exact small rational
        return math.log1p(float((hi - lo) / (1 + lo))) / LOG2

    def sample(self, rng, n, size):
        return sample_gauss(rng, n, size) - 1


class MarkovChain(GibbsModel):
    """Stationary Markov measure; Gibbs state of ``log P[x_0, x_1]`` with pressure 0."""

    kind = "markov"

    def __init__(self, spec: ShiftSpec, stochastic, stationary=None, c0: Optional[float] = None):
        Pm = np.asarray(stochastic, dtype=float)
        if Pm.shape != spec.transition.shape:
            raise ValueError("stochastic matrix has the wrong shape")
        if ((Pm > 0) != spec.transition.astype(bool)).any():
            raise ValueError("stochastic matrix must be positive exactly on allowed transitions")
        if not np.allclose(Pm.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("rows must sum to 1")
        if stationary is None:
            vals, vecs = np.linalg.eig(Pm.T)
            v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
            stationary = v / v.sum()
        self.spec = spec
        self.stochastic = Pm
        self.stationary = np.asarray(stationary, dtype=float)
        self.c0 = c0
        with np.errstate(divide="ignore"):
            self._logP = np.log(Pm)
            self._logpi = np.log(self.stationary)
        M = spec.alphabet_size
        self.potential = LocallyConstant(
            2, {(a, b): self._logP[a, b] for a in range(M) for b in range(M) if spec.allowed(a, b)}, M)

    @classmethod
    def parry(cls, spec: ShiftSpec) -> "MarkovChain":
        """Measure of maximal entropy of an irreducible shift of finite type."""
        A = spec.transition.astype(float)
        vals, right = np.linalg.eig(A)
        i = int(np.argmax(np.real(vals)))
        lam = float(np.real(vals[i]))
        v = np.abs(np.real(right[:, i]))
        vals_l, left = np.linalg.eig(A.T)
        u = np.abs(np.real(left[:, int(np.argmax(np.real(vals_l)))]))
        Pm = A * v[None, :] / (lam * v[:, None])
        pi = u * v / (u @ v)
        return cls(spec, Pm, pi)

    def log_cylinder_measure(self, word):
        word = self.spec.check_word(word)
        return float(self._logpi[word[0]] + sum(self._logP[a, b] for a, b in zip(word, word[1:])))

    def log_measure_table(self, n, budget=DEFAULT_WORD_BUDGET):
        M = self.alphabet_size
        _check_budget(M, n, budget)
        t = self._logpi.copy()
        for _ in range(n - 1):
            prev = t.reshape(-1, M)
            t = (prev[:, :, None] + self._logP[None, :, :]).reshape(-1)
        return t

    def tail(self, i):
        return float(self.stationary[i + 1:].sum()) if i >= 0 else 1.0

    def tail_after(self, word):
        return 0.0

    def sample(self, rng, n, size):
        M = self.alphabet_size
        out = np.empty((size, n), dtype=np.int64)
        out[:, 0] = rng.choice(M, size=size, p=self.stationary)
        cum = np.cumsum(self.stochastic, axis=1)
        for j in range(1, n):
            u = rng.random(size)
            out[:, j] = (u[:, None] > cum[out[:, j - 1]]).sum(axis=1)
        return np.minimum(out, M - 1)


# ---------------------------------------------------------------------------
# checks


@dataclass
class GibbsConstantReport:
    c0: float
    depth: int
    log_c0_by_depth: list
    nonconvergent: bool
    witness: tuple

    def to_json(self) -> dict:
        return {"c0": self.c0, "depth": self.depth, "log_c0_by_depth": self.log_c0_by_depth,
                "nonconvergent": self.nonconvergent, "witness": [list(self.witness)]}


def _masked(model, n, budget):
    lm = model.log_measure_table(n, budget)
    mask = admissible_mask(model.spec, n, budget) & np.isfinite(lm)
    return lm, mask


def estimate_gibbs_constant(model: GibbsModel, pot: Optional[Potential] = None, P: Optional[float] = None,
                            n_max: int = 4, budget: int = DEFAULT_WORD_BUDGET) -> GibbsConstantReport:
    """Smallest ``c0`` for which the Gibbs sandwich holds on all words of length ``<= n_max``.

    For ``x`` in ``[w]`` the ratio ``mu[w] / exp(-P n + S_n phi(x))`` ranges
    over ``[mu[w] e^{Pn - hi}, mu[w] e^{Pn - lo}]``; ``c0`` is the largest
    deviation of either end from 1 in log scale.

    The log of the certified constant is reported per depth; the estimate is
    flagged ``nonconvergent`` when it keeps growing by at least 0.25 per
    level over the last three levels, the signature of a wrong ``P``.
    """
    pot = model.potential if pot is None else pot
    P = model.P if P is None else P
    M = model.alphabet_size
    per_depth, running, witness = [], 0.0, ()
    for n in range(1, n_max + 1):
        lm, mask = _masked(model, n, budget)
        lo, hi = pot.bounds_table(n, M)
        upper = (lm + P * n - lo)[mask]
        lower = -(lm + P * n - hi)[mask]
        idx = np.flatnonzero(mask)
        for arr in (upper, lower):
            j = int(np.argmax(arr))
            if arr[j] > running:
                running = float(arr[j])
                witness = index_to_word(int(idx[j]), M, n)
        per_depth.append(running)
    steps = np.diff([0.0] + per_depth)
    nonconv = len(steps) >= 3 and bool((steps[-3:] >= 0.25).all())
    return GibbsConstantReport(math.exp(running), n_max, per_depth, nonconv, witness)


@dataclass
class DistortionReport:
    c0: float
    depth: int
    max_ratio: float
    min_ratio: float
    violations: int
    max_violation: float
    attained_pair: tuple

    def to_json(self) -> dict:
        return {"c0": self.c0, "depth": self.depth, "max_ratio": self.max_ratio, "min_ratio": self.min_ratio,
                "violations": self.violations, "max_violation": self.max_violation,
                "witness": [list(self.attained_pair[0]), list(self.attained_pair[1])]}


def check_distortion(model: GibbsModel, depth: int, c0: Optional[float] = None,
                     budget: int = DEFAULT_WORD_BUDGET) -> DistortionReport:
    """Check ``c0**-3 <= mu[vw] / (mu[v] mu[w]) <= c0**3`` for ``|v| + |w| <= depth``.

    ``max_violation`` is the largest excess, in log scale, of any ratio over
    the band (0 when none).
    """
    c0 = model.c0 if c0 is None else c0
    if c0 is None:
        raise ValueError("model has no Gibbs constant; pass c0")
    M = model.alphabet_size
    band = 3.0 * math.log(c0)
    tables = {m: _masked(model, m, budget) for m in range(1, depth + 1)}
    best_hi, best_lo = -math.inf, math.inf
    pair_hi = pair_lo = ((), ())
    count, worst = 0, 0.0
    for total in range(2, depth + 1):
        lm, mask = tables[total]
        for a in range(1, total):
            b = total - a
            lv, mv = tables[a]
            lw, mw = tables[b]
            with np.errstate(invalid="ignore"):
                r = lm.reshape(M**a, M**b) - lv[:, None] - lw[None, :]
            ok = mask.reshape(M**a, M**b)
            if not ok.any():
                continue
            rv = np.where(ok, r, np.nan)
            i_hi = int(np.nanargmax(rv))
            i_lo = int(np.nanargmin(rv))
            if rv.flat[i_hi] > best_hi:
                best_hi = float(rv.flat[i_hi])
                pair_hi = (index_to_word(i_hi // M**b, M, a), index_to_word(i_hi % M**b, M, b))
            if rv.flat[i_lo] < best_lo:
                best_lo = float(rv.flat[i_lo])
                pair_lo = (index_to_word(i_lo // M**b, M, a), index_to_word(i_lo % M**b, M, b))
            excess = np.abs(rv[ok]) - band
            count += int((excess > 1e-12).sum())
            worst = max(worst, float(excess.max()))
    pair = pair_hi if best_hi >= -best_lo else pair_lo
    return DistortionReport(c0, depth, math.exp(best_hi), math.exp(best_lo), count, max(worst, 0.0), pair)


@dataclass
class MixingReport:
    c: float
    c_upper: float
    attained: tuple
    rows: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"c": self.c, "c_upper": self.c_upper, "witness": list(self.attained), "rows": self.rows}


def check_mixing_constant(model: GibbsModel, n_range: Iterable[int], symbol_pairs: Iterable[tuple],
                          budget: int = DEFAULT_WORD_BUDGET) -> MixingReport:
    """Bracket ``mu([a] & shift^-n [b]) / (mu[a] mu[b])`` and return the smallest lower end.

    Intermediate words use symbols below the truncation; the rest of ``[a]``
    is bounded by ``mu[a] - sum_u mu[a u]``, which is exact, and added to the
    upper end of each bracket.
    """
    M = model.alphabet_size
    rows, best, best_hi, attained = [], math.inf, math.inf, None
    symbol_pairs = list(symbol_pairs)
    for n in n_range:
        if n < 1:
            raise ValueError("n must be >= 1")
        lm, mask = _masked(model, n + 1, budget)
        mass = np.where(mask, np.exp(lm), 0.0).reshape(M, M ** (n - 1), M)
        lh, mh = _masked(model, n, budget)
        head = np.where(mh, np.exp(lh), 0.0).reshape(M, -1).sum(axis=1)
        for a, b in symbol_pairs:
            mu_a = model.cylinder_measure((a,))
            mu_b = model.cylinder_measure((b,))
            joint = float(mass[a, :, b].sum())
            escape = max(0.0, mu_a - float(head[a])) if n > 1 else 0.0
            lo = joint / (mu_a * mu_b)
            hi = (joint + escape) / (mu_a * mu_b)
            rows.append({"a": a, "b": b, "n": n, "lo": lo, "hi": hi})
            if lo < best:
                best, best_hi, attained = lo, hi, (a, b, n)
    return MixingReport(best, best_hi, attained, rows)


def check_premeasure(model: GibbsModel, depth: int, budget: int = DEFAULT_WORD_BUDGET) -> float:
    """Largest ``|mu[w] - sum_a mu[wa] - tail_after(w)|`` over admissible words of length ``<= depth``."""
    M = model.alphabet_size
    worst = 0.0
    for n in range(1, depth + 1):
        lm, mask = _masked(model, n, budget)
        lm1, mask1 = _masked(model, n + 1, budget)
        child = np.where(mask1, np.exp(lm1), 0.0).reshape(-1, M).sum(axis=1)
        for i in np.flatnonzero(mask):
            w = index_to_word(int(i), M, n)
            worst = max(worst, abs(math.exp(lm[i]) - child[i] - model.tail_after(w)))
    return worst
