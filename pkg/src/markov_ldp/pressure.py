"""Pressure from word sums, periodic points, preimages and transfer operators.

Every estimate records the direction of its error at finite ``n``:

* word sums ``a_n / n`` are upper bounds (subadditivity);
* periodic and preimage sums are point estimates whose ``lo``/``hi`` give
  the spread obtained by replacing the exact point weights with the cylinder
  infimum and supremum;
* transfer-operator estimates are two-sided brackets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import InadmissibleAnchor
from .potential import Potential, gauss_base
from .shift import DEFAULT_WORD_BUDGET, ShiftSpec, admissible_mask, check_budget
from .transfer import WindowChain, gauss_operator, gauss_periodic_sums, power_bracket

UPPER, LOWER, TWO_SIDED = "upper", "lower", "two_sided"


@dataclass(frozen=True)
class PressureEstimate:
    value: float
    direction: str
    ensemble: str
    n: Optional[int]
    M: int
    lo: Optional[float] = None
    hi: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lo is not None and self.hi is not None and self.lo > self.hi:
            raise ValueError("lo > hi")

    def contains(self, x: float) -> bool:
        lo = -math.inf if self.lo is None else self.lo
        hi = math.inf if self.hi is None else self.hi
        return lo <= x <= hi

    @property
    def width(self) -> float:
        if self.lo is None or self.hi is None:
            return math.inf
        return self.hi - self.lo

    def to_json(self) -> dict:
        return {"ensemble": self.ensemble, "n": self.n, "M": self.M, "value": self.value,
                "lo": self.lo, "hi": self.hi, "direction": self.direction, **self.meta}


def _lse(values) -> float:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    return float(logsumexp(values)) if values.size else -math.inf


def _chain(spec, pot):
    try:
        return WindowChain(spec, pot)
    except TypeError:
        return None


def _is_gauss(pot) -> bool:
    return gauss_base(pot) is not None


def pressure_word_sum(spec: ShiftSpec, pot: Potential, n: int, budget: int = DEFAULT_WORD_BUDGET) -> PressureEstimate:
    """``(1/n) log sum_{w in E^n} sup_[w] exp(S_n phi)``, an upper bound for the pressure."""
    if n < 1:
        raise ValueError("n must be >= 1")
    M = spec.alphabet_size
    chain = _chain(spec, pot)
    if chain is not None and n >= chain.depth - 1:
        a_hi = _lse(chain.word_sums(n, "hi").log_values())
        a_lo = _lse(chain.word_sums(n, "lo").log_values())
    else:
        check_budget(M, n, budget)
        lo, hi = pot.bounds_table(n, M)
        mask = admissible_mask(spec, n, budget)
        a_hi, a_lo = _lse(hi[mask]), _lse(lo[mask])
    return PressureEstimate(a_hi / n, UPPER, "word_sum", n, M, None, a_hi / n, {"a_n": a_hi, "inf_sum": a_lo / n})


def pressure_periodic(spec: ShiftSpec, pot: Potential, n: int, start_symbol: Optional[int] = None,
                      method: str = "auto", grid_size: int = 64, tail: bool = False,
                      budget: int = DEFAULT_WORD_BUDGET) -> PressureEstimate:
    """``(1/n) log Z_n(phi, Per_n)``, optionally restricted to ``x_0 = start_symbol``.

    ``method`` is ``"enumerate"``, ``"trace"`` (Gauss potentials only, uses
    the collocated operator, ``tail`` selects the full system) or ``"auto"``.
    """
    M = spec.alphabet_size
    chain = _chain(spec, pot)
    if chain is not None:
        val = _lse(chain.periodic_sums(n, start_symbol).log_values()) / n
        return PressureEstimate(val, TWO_SIDED, "periodic", n, M, val, val, {"method": "transfer_matrix"})
    if method == "auto":
        method = "enumerate" if (M**n <= budget and not tail) else "trace"
    if method == "trace":
        base = gauss_base(pot)
        if base is None:
            raise ValueError("trace method needs a Gauss potential")
        beta, marked = base
        res = gauss_periodic_sums(M, n, grid_size, None if marked is None else marked + 1, tail,
                                  None if start_symbol is None else start_symbol + 1)
        logs = res.log_values() + beta * np.arange(len(res.coef))
        val = _lse(logs) / n
        return PressureEstimate(val, TWO_SIDED, "periodic", n, M, val, val, {"method": "trace", "tail": tail})
    check_budget(M, n, budget)
    mask = admissible_mask(spec, n, budget)
    A = spec.transition
    idx = np.arange(M**n)
    first, last = idx // M ** (n - 1), idx % M
    mask &= A[last, first].astype(bool)
    if start_symbol is not None:
        mask &= first == start_symbol
    exact = pot.periodic_table(n, M)[mask]
    lo, hi = pot.bounds_table(n, M)
    val = _lse(exact) / n
    return PressureEstimate(val, TWO_SIDED, "periodic", n, M, min(val, _lse(lo[mask]) / n), max(val, _lse(hi[mask]) / n),
                            {"method": "enumerate"})


def pressure_preimage(spec: ShiftSpec, pot: Potential, n: int, anchor, budget: int = DEFAULT_WORD_BUDGET) -> PressureEstimate:
    """``(1/n) log sum_{shift^n x = y} exp(S_n phi(x))``.

    For Gauss potentials ``anchor`` is the real point ``y`` in [0, 1];
    otherwise a symbol sequence long enough for the potential's depth.
    """
    M = spec.alphabet_size
    if _is_gauss(pot):
        y = float(anchor)
        if not 0.0 <= y <= 1.0:
            raise InadmissibleAnchor(f"Gauss anchor {y} is outside [0, 1]")
        check_budget(M, n, budget)
        exact = pot.preimage_table(n, M, y)
        val = _lse(exact) / n
        lo, hi = pot.bounds_table(n, M)
        return PressureEstimate(val, TWO_SIDED, "preimage", n, M, min(val, _lse(lo) / n), max(val, _lse(hi) / n),
                                {"anchor": y})
    anchor = tuple(int(s) for s in anchor)
    if not anchor or not spec.is_admissible(anchor):
        raise InadmissibleAnchor(f"anchor {anchor} is not admissible")
    chain = _chain(spec, pot)
    if chain is None:
        raise TypeError(f"no preimage rule for {type(pot).__name__}")
    if len(anchor) < chain.depth - 1:
        raise InadmissibleAnchor(f"anchor needs at least {chain.depth - 1} symbols")
    val = _lse(chain.preimage_sums(n, anchor).log_values()) / n
    return PressureEstimate(val, TWO_SIDED, "preimage", n, M, val, val, {"anchor": list(anchor)})


def pressure_transfer_bracket(pot: Potential, M: int, grid_size: int = 64, n_iter: int = 40,
                              tail: bool = True, tol: float = 1e-6) -> PressureEstimate:
    """Pressure of a Gauss potential from the collocated transfer operator.

    ``pot`` is GaussLog, possibly tilted by an indicator.  The power
    iteration gives Collatz-Wielandt bounds ``[lo, hi]`` on the growth rate.
    With ``tail=True`` the operator represents the full system and the
    bounds are widened by the error allowance of the closed-form tail.  With
    ``tail=False`` the operator is the ``M``-digit truncation and ``hi`` is
    raised by the one-sided allowance ``sum_{a > M} a**-2 <= 1/M`` so that the
    bracket still covers the full system.

    Raises
    ------
    DivergedInterpolation
        The ratios fail to settle within ``tol``.
    """
    base = gauss_base(pot)
    if base is None:
        raise ValueError("transfer bracket needs GaussLog, optionally tilted by an indicator")
    beta, marked = base
    if beta == 0.0:
        marked = None
    op = gauss_operator(M, grid_size, None if marked is None else marked + 1, tail)
    res = power_bracket(op.matrix(beta), n_iter, tol)
    f = res.vector
    if tail:
        slack = op.tail_allowance(f)
        lo, hi = res.log_lo - slack, res.log_hi + slack
        meta = {"tail": "closed_form", "allowance": slack}
    else:
        lo = res.log_lo
        excess = f.max() / (f.min() * M * math.exp(res.log_hi))
        hi = res.log_hi + math.log1p(excess)
        meta = {"tail": "bound", "allowance": hi - res.log_hi}
    meta.update(grid_size=grid_size, n_iter=n_iter)
    value = 0.5 * (res.log_lo + res.log_hi)
    return PressureEstimate(value, TWO_SIDED, "transfer", None, M, lo, hi, meta)


def pressure_spectral(spec: ShiftSpec, pot: Potential) -> PressureEstimate:
    """Log spectral radius of the exact transfer matrix of a locally constant potential."""
    chain = WindowChain(spec, pot)
    val = math.log(chain.spectral_radius())
    return PressureEstimate(val, TWO_SIDED, "spectral", None, spec.alphabet_size, val, val, {"method": "spectral"})
