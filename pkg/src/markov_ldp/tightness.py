"""Truncation schedules and the exponential visit bound.

A schedule ``N_0 <= N_1 <= ...`` defines ``Gamma = {x : x_j <= N_j for all j}``.
The shifted point ``shift^i x`` leaves ``Gamma`` when some ``x_{i+j}`` exceeds
``N_j``.  :func:`visit_distribution` gives the exact law of the number of
such ``i < n`` for product and finite Markov measures.

Scanning positions from right to left, let ``J(v) = max{j : N_j < v}``
(``-1`` when ``v <= N_0``) and ``m_i = min_{t >= i} (t - J(x_t)) - i``; then
``shift^i x`` is outside ``Gamma`` exactly when ``m_i <= 0``, and
``m_i = min(-J(x_i), m_{i+1} + 1)``.  Values ``m >= 1`` behave alike, and
values below ``-n`` never become positive again within ``n`` steps, so the
state space is ``{-n, ..., 1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .errors import BudgetExceeded, ThetaOutOfRange, UnsupportedModel
from .gibbs import BernoulliProduct, GaussMeasure, GibbsModel, MarkovChain

MAX_SYMBOL = 2**62
#: tail masses below this are treated as zero in infinite products
NEGLIGIBLE = 1e-18


@dataclass
class TightnessSchedule:
    theta: float
    levels: tuple
    model: GibbsModel = field(repr=False)
    certified: bool = True

    def level(self, j: int) -> float:
        """``N_j``; indices past the stored depth follow the same minimal rule."""
        if j < len(self.levels):
            return self.levels[j]
        return minimal_level(self.model, self.theta ** (j + 1))

    def tail(self, j: int) -> float:
        N = self.level(j)
        return 0.0 if math.isinf(N) else self.model.tail(int(N))

    def check(self) -> bool:
        """Re-check the tail condition ``tail(N_i) <= theta**(i+1)`` at every stored level."""
        return all(self.tail(i) <= self.theta ** (i + 1) * (1 + 1e-12) for i in range(len(self.levels)))

    def to_json(self) -> dict:
        return {"theta": self.theta, "levels": [None if math.isinf(N) else int(N) for N in self.levels],
                "certified": self.certified}


def minimal_level(model: GibbsModel, target: float) -> int:
    """Smallest ``N >= 0`` with ``model.tail(N) <= target``."""
    if model.tail(0) <= target:
        return 0
    hi = 1
    while model.tail(hi) > target:
        hi *= 2
        if hi > MAX_SYMBOL:
            raise BudgetExceeded(f"no level with tail <= {target:.3g} below {MAX_SYMBOL}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if model.tail(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def build_schedule(model: GibbsModel, theta: float, depth: int) -> TightnessSchedule:
    """Levels ``N_i``, ``i <= depth``: minimal with ``tail(N_i) <= theta**(i+1)``.

    ``theta`` must lie in ``(0, min(c0**-3, 1/5)]``.  When the model has no
    declared ``c0`` only the ``1/5`` cap is enforced and the schedule is
    marked uncertified.
    """
    cap = 0.2
    certified = model.c0 is not None
    if certified:
        cap = min(cap, model.c0 ** -3)
    if not 0.0 < theta <= cap * (1 + 1e-12):
        raise ThetaOutOfRange(f"theta={theta} outside (0, {cap:.6g}]")
    levels = []
    for i in range(depth + 1):
        N = minimal_level(model, theta ** (i + 1))
        levels.append(max(N, levels[-1]) if levels else N)
    return TightnessSchedule(theta, tuple(levels), model, certified)


def fixed_schedule(model: GibbsModel, levels, theta: float = 0.2) -> TightnessSchedule:
    """Schedule with explicit levels (``math.inf`` for no constraint); no validation of the tail rule."""
    return TightnessSchedule(theta, tuple(levels), model, False)


@dataclass
class VisitDistribution:
    p: np.ndarray
    n: int
    method: str
    ci: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"n": self.n, "p": self.p.tolist(), "method": self.method, **self.meta}
        if self.ci is not None:
            out["ci"] = self.ci.tolist()
        return out


def _levels_until_negligible(schedule, start=0, limit=10_000):
    j = start
    out = []
    while True:
        t = schedule.tail(j)
        out.append(t)
        if t < NEGLIGIBLE or j - start > limit:
            return out
        j += 1


def _product_visits(schedule: TightnessSchedule, n: int) -> np.ndarray:
    K = n + 2  # states m = -n..1 at index m + n
    tails = _levels_until_negligible(schedule)
    tail = lambda j: tails[j] if j < len(tails) else 0.0
    # P(J = j) for j = -1..n-1, with J >= n lumped at j = n
    pJ = np.array([1.0 - tail(0)] + [tail(j) - tail(j + 1) for j in range(n)] + [tail(n)])
    # P(m_n >= h) for h <= 1; zero for h >= 2
    def ge(h):
        prod = 1.0
        for s in range(len(tails) + 2):
            prod *= 1.0 - tail(s - h + 1)
        return prod
    surv = np.array([ge(h) for h in range(-n, 2)] + [0.0])
    init = surv[:-1] - surv[1:]
    init[0] = 1.0 - surv[1]
    D = np.zeros((K, n + 1))
    D[:, 0] = init
    for _ in range(n):
        new = np.zeros_like(D)
        for mi in range(K):
            m = mi - n
            row = D[mi]
            if not row.any():
                continue
            carry = 1 if m >= 1 else min(m + 1, 1)
            for ji, pj in enumerate(pJ):
                if pj == 0.0:
                    continue
                j = ji - 1
                m2 = max(min(-j, carry), -n)
                if m2 <= 0:
                    new[m2 + n, 1:] += pj * row[:-1]
                else:
                    new[m2 + n] += pj * row
        D = new
    return D.sum(axis=0)


def _markov_visits(model: MarkovChain, schedule: TightnessSchedule, n: int) -> np.ndarray:
    M = model.alphabet_size
    levels = []
    j = 0
    while True:
        N = schedule.level(j)
        if N >= M - 1:
            break
        levels.append(N)
        j += 1
    Jmax = len(levels) - 1
    Jv = np.array([max([i for i, N in enumerate(levels) if N < v], default=-1) for v in range(M)])
    pi, P = model.stationary, model.stochastic
    with np.errstate(divide="ignore", invalid="ignore"):
        Prev = np.where(pi[:, None] > 0, (pi[None, :] * P.T) / pi[:, None], 0.0)
    K = n + 2
    L = n + Jmax + 1
    # D[m, x, c]: state at position i (scanning right to left)
    D = np.zeros((K, M, n + 1))
    first = True
    for pos in range(L - 1, -1, -1):
        new = np.zeros_like(D)
        for x in range(M):
            if first:
                src = np.zeros((K, n + 1))
                src[1 + n, 0] = pi[x]
                m_prev_rows = [(1, src[1 + n])]
            else:
                incoming = np.einsum("y,myc->mc", Prev[:, x], D)
                m_prev_rows = [(mi - n, incoming[mi]) for mi in range(K) if incoming[mi].any()]
            for m_prev, row in m_prev_rows:
                carry = 1 if (first or m_prev >= 1) else m_prev + 1
                m2 = max(min(-int(Jv[x]), carry), -n)
                if pos < n and m2 <= 0:
                    new[m2 + n, x, 1:] += row[:-1]
                else:
                    new[m2 + n, x] += row
        D = new
        first = False
    return D.sum(axis=(0, 1))


def visit_distribution(model: GibbsModel, schedule: TightnessSchedule, n: int, trials: int = 20000,
                       seed: int = 0) -> VisitDistribution:
    """Law of ``#{i < n : shift^i x not in Gamma}`` under ``model``.

    Exact for product measures (any alphabet, through exact tails) and for
    finite Markov measures (reversed chain).  Other models are sampled
    (``trials``, ``seed``) with Wilson intervals; positions beyond the level
    where tails fall below ``1e-9`` are ignored there.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 400:
        raise BudgetExceeded(f"n={n} exceeds the exact DP budget of 400")
    if isinstance(model, BernoulliProduct):
        return VisitDistribution(_product_visits(schedule, n), n, "exact")
    if isinstance(model, MarkovChain):
        return VisitDistribution(_markov_visits(model, schedule, n), n, "exact")
    if isinstance(model, GaussMeasure):
        return _mc_visits(model, schedule, n, trials, seed)
    raise UnsupportedModel(f"no visit distribution for {type(model).__name__}")


def _mc_visits(model, schedule, n, trials, seed):
    extra = 0
    while schedule.tail(extra) > 1e-9:
        extra += 1
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = model.sample(rng, n + extra, trials)
    lv = np.array([schedule.level(j) for j in range(n + extra)], dtype=float)
    counts = np.zeros(trials, dtype=np.int64)
    for i in range(n):
        window = x[:, i:n + extra]
        counts += (window > lv[None, :n + extra - i]).any(axis=1)
    hist = np.bincount(counts, minlength=n + 1).astype(float)
    lo, hi = proportion_confint(hist, trials, method="wilson")
    return VisitDistribution(hist / trials, n, "monte_carlo", np.stack([lo, hi], axis=1),
                             {"trials": trials, "seed": seed, "window": n + extra})


@dataclass
class ExpoReport:
    theta: float
    n: int
    p: list
    bound: list
    passed: bool
    margin: float
    informative_from: Optional[int]

    def to_json(self) -> dict:
        return {"theta": self.theta, "n": self.n, "p": self.p, "bound": self.bound, "pass": self.passed,
                "margin": self.margin, "informative_from": self.informative_from}


def check_expo_bound(distribution: VisitDistribution, theta: float, n: Optional[int] = None) -> ExpoReport:
    """Compare ``p_m`` with ``2**n (4 theta)**m / (1 - 4 theta)`` for every ``m``.

    ``informative_from`` is the first ``m`` where the bound drops below 1.
    """
    n = distribution.n if n is None else n
    if not 0 < theta < 0.25:
        raise ThetaOutOfRange("the bound needs 0 < theta < 1/4")
    m = np.arange(n + 1)
    log_bound = n * math.log(2) + m * math.log(4 * theta) - math.log(1 - 4 * theta)
    bound = np.exp(log_bound)
    p = np.asarray(distribution.p, dtype=float)
    passed = bool((p <= bound * (1 + 1e-12)).all())
    below = np.flatnonzero(log_bound < 0)
    return ExpoReport(theta, n, p.tolist(), bound.tolist(), passed, float((bound - p).min()),
                      int(below[0]) if below.size else None)
