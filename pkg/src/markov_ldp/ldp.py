"""Level-1 large deviations: free energies, rate curves and constrained sums.

The free energy ``Lambda(beta) = P(phi + beta psi) - P(phi)`` is sampled on a
grid and kept together with an evaluator, so the Legendre transform can
refine between samples.  Constrained deviation sums come from the
count-marked DP of :mod:`markov_ldp.transfer`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp
from statsmodels.stats.proportion import proportion_confint

from .errors import AlphaOutsideDomain, BudgetExceeded, NonconvexSamples
from .gauss import periodic_log_weight_table
from .gibbs import BernoulliProduct, GibbsModel, MarkovChain
from .potential import Indicator, Potential, gauss_base, tilt
from .shift import DEFAULT_WORD_BUDGET, ShiftSpec
from .transfer import (
    Marked,
    WindowChain,
    gauss_operator,
    gauss_periodic_sums,
    gauss_vector_sums,
    power_bracket,
)

BETA_RANGE = (-8.0, 8.0)
MAX_DP_LENGTH = 2000
#: Default anchor for Gauss preimage sums; irrational, as the theory asks.
GAUSS_ANCHOR = math.sqrt(2.0) - 1.0
ENSEMBLES = ("lebesgue", "periodic", "preimage", "gibbs")


# ---------------------------------------------------------------------------
# free energy


@dataclass
class FreeEnergy:
    """Samples of ``Lambda`` with the evaluator that produced them."""

    betas: np.ndarray
    values: np.ndarray
    evaluator: Optional[Callable[[float], float]]
    method: str
    convex: bool
    max_violation: float
    obs_range: tuple = (-math.inf, math.inf)
    meta: dict = field(default_factory=dict)

    def __call__(self, beta: float) -> float:
        if self.evaluator is None:
            return float(np.interp(beta, self.betas, self.values))
        return self.evaluator(beta)

    def derivative(self, beta: float = 0.0, h: float = 1e-3) -> float:
        """Central difference ``(Lambda(beta+h) - Lambda(beta-h)) / 2h``."""
        return (self(beta + h) - self(beta - h)) / (2 * h)


def _secant_violation(x, y) -> float:
    slopes = np.diff(y) / np.diff(x)
    return float(max(0.0, -np.diff(slopes).min())) if len(slopes) > 1 else 0.0


def _marked_pressure(res: Marked, n: int):
    logs = res.log_values()
    c = np.arange(len(logs))
    good = np.isfinite(logs)
    logs, c = logs[good], c[good]
    return lambda beta: float(logsumexp(logs + beta * c)) / n


def free_energy(spec: Optional[ShiftSpec], pot: Potential, obs: Potential, betas: Sequence[float],
                method: str = "auto", n: Optional[int] = None, M: Optional[int] = None, grid_size: int = 64,
                n_iter: int = 80, tail: bool = True, anchor=None, tol: float = 1e-8) -> FreeEnergy:
    """Sample ``Lambda(beta) = P(phi + beta psi) - P(phi)`` at ``betas``.

    Methods
    -------
    ``"spectral"``
        exact log spectral radius of the finite transfer matrix;
    ``"transfer"``
        collocated Gauss operator (``M``, ``grid_size``, ``n_iter``, ``tail``);
    ``"word_sum"``, ``"periodic"``, ``"preimage"``
        ``(1/n) log`` of the finite-``n`` sums, exact in ``beta`` through the
        count-marked DP (``obs`` must be an indicator);
    ``"auto"``
        ``"transfer"`` for Gauss potentials, ``"spectral"`` otherwise.

    ``Lambda(0) = 0`` holds exactly.  Secant slopes that decrease by more
    than ``tol`` mark the samples non-convex (``convex=False``).
    """
    betas = np.unique(np.append(np.asarray(betas, dtype=float), 0.0))
    gauss = gauss_base(pot) is not None
    if method == "auto":
        method = "transfer" if gauss else "spectral"
    if method == "transfer":
        if not isinstance(obs, Indicator):
            raise ValueError("the Gauss operator marks indicator observables only")
        M = M or 100
        op = gauss_operator(M, grid_size, obs.symbol + 1, tail)
        base_beta = gauss_base(pot)[0]

        def pressure(beta):
            return power_bracket(op.matrix(base_beta + beta), n_iter, tol=1e-6).log_mid
    elif method == "spectral":
        if isinstance(obs, Indicator) and pot.locally_constant(spec) is not None:
            chain = WindowChain(spec, pot, marked=obs.symbol)

            def pressure(beta):
                return math.log(chain.spectral_radius(beta))
        else:
            def pressure(beta):
                return math.log(WindowChain(spec, tilt(pot, obs, beta)).spectral_radius())
    elif method in ("word_sum", "periodic", "preimage"):
        if n is None or not isinstance(obs, Indicator):
            raise ValueError(f"method {method!r} needs n and an indicator observable")
        if gauss:
            res = _gauss_marked(method if method != "word_sum" else "lebesgue", pot, obs, n, M or spec.alphabet_size,
                                grid_size, tail, anchor)[0]
        else:
            chain = WindowChain(spec, pot, marked=obs.symbol)
            if method == "word_sum":
                res = chain.word_sums(n, "hi")
            elif method == "periodic":
                res = chain.periodic_sums(n)
            else:
                res = chain.preimage_sums(n, anchor)
        pressure = _marked_pressure(res, n)
    else:
        raise ValueError(f"unknown method {method!r}")

    p0 = pressure(0.0)

    def evaluator(beta):
        return 0.0 if beta == 0.0 else pressure(beta) - p0

    values = np.array([evaluator(b) for b in betas])
    viol = _secant_violation(betas, values)
    lo = getattr(obs, "inf_bound", -math.inf)
    hi = getattr(obs, "sup_bound", math.inf)
    return FreeEnergy(betas, values, evaluator, method, viol <= tol, viol, (lo, hi),
                      {"M": M, "n": n, "grid_size": grid_size, "tail": tail, "P0": p0})


# ---------------------------------------------------------------------------
# Legendre transform


@dataclass
class RateCurve:
    """``I(alpha) = sup_beta (beta alpha - Lambda(beta))`` on a grid."""

    alphas: np.ndarray
    rates: np.ndarray
    beta_star: np.ndarray
    boundary: np.ndarray
    domain: tuple
    mean: float
    method: str
    beta_range: tuple = BETA_RANGE

    def rows(self):
        return [(float(a), float(i), float(b)) for a, i, b in zip(self.alphas, self.rates, self.beta_star)]

    def to_json(self) -> dict:
        return {"method": self.method, "domain": list(self.domain), "mean": self.mean,
                "beta_range": list(self.beta_range), "boundary_alphas": self.alphas[self.boundary].tolist()}


def _sup(fe: FreeEnergy, alpha: float, grid: np.ndarray, lam: np.ndarray, refine: bool):
    vals = alpha * grid - lam
    top = vals.max()
    ties = np.flatnonzero(vals >= top - 1e-15)
    i = int(ties[np.argmin(np.abs(grid[ties]))])
    best_b, best_v = float(grid[i]), float(vals[i])
    at_edge = i == 0 or i == len(grid) - 1
    if refine and fe.evaluator is not None and not at_edge:
        neg = lambda b: -(alpha * b - fe(b))
        a, c = float(grid[i - 1]), float(grid[i + 1])
        try:
            if vals[i - 1] < vals[i] and vals[i + 1] < vals[i]:
                res = minimize_scalar(neg, bracket=(a, best_b, c), method="golden", tol=1e-12)
            else:
                res = minimize_scalar(neg, bounds=(a, c), method="bounded", options={"xatol": 1e-12})
            if -res.fun > best_v and a <= res.x <= c:
                best_b, best_v = float(res.x), float(-res.fun)
        except (ValueError, RuntimeError):
            pass
    return best_v, best_b, at_edge


def rate_legendre(fe: FreeEnergy, alphas: Sequence[float], refine: bool = True, strict: bool = False,
                  grid_points: int = 161) -> RateCurve:
    """Legendre transform of ``fe`` over ``beta`` in ``[-8, 8]``.

    The supremum is taken over an even grid and refined by golden-section
    search between the neighbours of the best grid point.  Ties go to the
    smaller ``|beta|``.  A supremum attained at the range edge is flagged in
    ``boundary``.  Outside the range of the observable the rate is ``+inf``
    (``AlphaOutsideDomain`` when ``strict``).
    """
    if not fe.convex:
        raise NonconvexSamples(f"free energy samples violate convexity by {fe.max_violation:.3g}")
    lo_b, hi_b = BETA_RANGE
    if fe.evaluator is not None:
        grid = np.unique(np.concatenate([np.linspace(lo_b, hi_b, grid_points), [0.0]]))
    else:
        grid = fe.betas
    lam = np.array([fe(b) for b in grid])
    alphas = np.asarray(alphas, dtype=float)
    rates, bstar, edge = [], [], []
    a_min, a_max = fe.obs_range
    for a in alphas:
        if a < a_min - 1e-12 or a > a_max + 1e-12:
            if strict:
                raise AlphaOutsideDomain(f"alpha={a} outside [{a_min}, {a_max}]")
            rates.append(math.inf)
            bstar.append(math.nan)
            edge.append(True)
            continue
        v, b, e = _sup(fe, float(a), grid, lam, refine)
        rates.append(max(v, 0.0))
        bstar.append(b)
        edge.append(e)
    mean = fe.derivative(0.0) if fe.evaluator is not None else float(np.interp(0.0, fe.betas, np.gradient(fe.values, fe.betas)))
    slopes = (lam[1] - lam[0]) / (grid[1] - grid[0]), (lam[-1] - lam[-2]) / (grid[-1] - grid[-2])
    return RateCurve(alphas, np.array(rates), np.array(bstar), np.array(edge, dtype=bool),
                     (float(slopes[0]), float(slopes[1])), mean, fe.method)


def rate_at(fe: FreeEnergy, alpha: float) -> float:
    return float(rate_legendre(fe, [alpha]).rates[0])


@dataclass(frozen=True)
class CurveCheck:
    nonnegative: bool
    rate_at_mean: float
    max_convexity_violation: float

    def passed(self, mean_tol: float = 1e-6, convex_tol: float = 1e-8) -> bool:
        return self.nonnegative and self.rate_at_mean < mean_tol and self.max_convexity_violation <= convex_tol


def check_rate_curve(fe: FreeEnergy, curve: RateCurve) -> CurveCheck:
    """Non-negativity, zero at the mean and convexity (secant slopes) of a curve."""
    finite = np.isfinite(curve.rates)
    order = np.argsort(curve.alphas[finite])
    x, y = curve.alphas[finite][order], curve.rates[finite][order]
    return CurveCheck(bool((y >= 0).all()), rate_at(fe, curve.mean), _secant_violation(x, y))


# ---------------------------------------------------------------------------
# constrained deviation sums


@dataclass
class DeviationRate:
    """``(1/n) log(constrained sum / normaliser)`` for one ensemble."""

    ensemble: str
    alpha: float
    direction: str
    n: int
    M: int
    value: float
    lo: float
    hi: float
    log_constrained: float
    log_normaliser: float
    empty: bool = False
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"ensemble": self.ensemble, "alpha": self.alpha, "direction": self.direction, "n": self.n,
               "M": self.M, "value": self.value, "lo": self.lo, "hi": self.hi, "empty": self.empty}
        out.update(self.meta)
        return out


def count_selection(n: int, alpha: float, direction: str, size: int) -> np.ndarray:
    """Boolean mask over counts ``0..size-1`` meeting ``count/n >= alpha`` (or ``<=``)."""
    c = np.arange(size)
    if direction in (">=", "ge"):
        return c >= math.ceil(alpha * n - 1e-9)
    if direction in ("<=", "le"):
        return c <= math.floor(alpha * n + 1e-9)
    raise ValueError(f"direction must be '>=' or '<=', got {direction!r}")


def _lse_sel(logs, sel):
    vals = logs[sel[:len(logs)]]
    vals = vals[np.isfinite(vals)]
    return float(logsumexp(vals)) if vals.size else -math.inf


def _gauss_marked(ensemble, pot, obs, n, M, grid_size, tail, anchor, first_digit=None):
    """Marked sums for the Gauss system: ``(main, lower, upper)``; bounds may be None."""
    beta, marked = gauss_base(pot)
    if marked is not None and marked != obs.symbol:
        raise ValueError("tilt and observable mark different digits")
    digit = obs.symbol + 1
    op = gauss_operator(M, grid_size, digit, tail)
    shift = lambda r: Marked(r.coef, r.log_scale + beta * np.arange(len(r.coef)))
    if ensemble == "periodic":
        if not tail and M**n <= DEFAULT_WORD_BUDGET and n < 8:
            return _gauss_periodic_enum(M, n, obs.symbol, beta), None, None
        return shift(gauss_periodic_sums(M, n, grid_size, digit, tail, first_digit)), None, None
    init = op.density() if ensemble == "gibbs" else np.ones(grid_size)
    F = gauss_vector_sums(op, init, n, first_digit)
    if ensemble in ("lebesgue", "gibbs"):
        main = F.reduce(lambda v: op.quadrature_row @ v)
        lo = F.reduce(lambda v: op.row(1.0) @ v)
        hi = F.reduce(lambda v: op.row(0.0) @ v)
        if ensemble == "gibbs":
            # density ratio sup/inf is 2 on [0, 1]
            lo, hi = None, None
        return shift(main), (shift(lo) if lo else None), (shift(hi) if hi else None)
    if ensemble == "preimage":
        y = GAUSS_ANCHOR if anchor is None else float(anchor)
        return shift(F.reduce(lambda v: op.row(y) @ v)), None, None
    raise ValueError(f"unknown ensemble {ensemble!r}")


def _gauss_periodic_enum(M, n, symbol, beta):
    lw = periodic_log_weight_table(M, n)
    digits = np.indices((M,) * n).reshape(n, -1)
    counts = (digits == symbol).sum(axis=0)
    logs = np.full(n + 1, -np.inf)
    for c in range(n + 1):
        sel = counts == c
        if sel.any():
            logs[c] = float(logsumexp(lw[sel])) + beta * c
    return Marked(np.where(np.isfinite(logs), 1.0, 0.0), logs)


def _finite_marked(ensemble, spec, pot, obs, n, anchor, model):
    if ensemble == "gibbs":
        if isinstance(model, MarkovChain):
            chain = WindowChain(model.spec, model.potential, marked=obs.symbol)
            with np.errstate(divide="ignore"):
                init = np.log(model.stationary)
            return chain.word_sums(n, "none", init_log=init), None, None
        if isinstance(model, BernoulliProduct):
            chain = WindowChain(model.spec, model.potential, marked=obs.symbol)
            return chain.word_sums(n, "hi"), None, None
        raise ValueError("the gibbs ensemble needs a Bernoulli or Markov model")
    chain = WindowChain(spec, pot, marked=obs.symbol)
    if ensemble == "lebesgue":
        return chain.word_sums(n, "hi"), chain.word_sums(n, "lo"), chain.word_sums(n, "hi")
    if ensemble == "periodic":
        return chain.periodic_sums(n), None, None
    if ensemble == "preimage":
        if anchor is None:
            raise ValueError("preimage ensemble needs an anchor sequence")
        return chain.preimage_sums(n, anchor), None, None
    raise ValueError(f"unknown ensemble {ensemble!r}")


def deviation_rate_constrained(ensemble: str, spec: Optional[ShiftSpec], pot: Potential, obs: Indicator, alpha: float,
                               direction: str = ">=", n: int = 12, M: Optional[int] = None, anchor=None,
                               model: Optional[GibbsModel] = None, grid_size: int = 64, tail: bool = True,
                               normalise: Optional[bool] = None) -> DeviationRate:
    """Exponential rate of the sum over points whose count of ``obs.symbol`` satisfies the constraint.

    Ensembles: ``"lebesgue"`` (cylinder sums; Lebesgue measure for the Gauss
    system), ``"periodic"``, ``"preimage"`` and ``"gibbs"`` (mass under the
    reference measure).  The normaliser is the unconstrained sum of the same
    ensemble at the same ``(n, M)``, except for Gauss Lebesgue and Gibbs sums,
    whose normaliser is the total mass 1.

    For Gauss potentials the collocated operator is used; ``tail=True``
    represents the full system (branches up to ``max(M, 2000)`` summed
    explicitly, the rest in closed form) and ``tail=False`` the ``M``-digit
    truncation.  Lebesgue values carry a bracket from the branch-derivative
    values at ``t = 1`` and ``t = 0``.
    """
    if ensemble not in ENSEMBLES:
        raise ValueError(f"ensemble must be one of {ENSEMBLES}")
    if n < 1 or n > MAX_DP_LENGTH:
        raise BudgetExceeded(f"n={n} outside 1..{MAX_DP_LENGTH}")
    if not isinstance(obs, Indicator):
        raise ValueError("constrained sums mark indicator observables")
    gauss = gauss_base(pot) is not None
    if gauss:
        M = M or 20
        main, lo, hi = _gauss_marked(ensemble, pot, obs, n, M, grid_size, tail, anchor)
        unit_total = ensemble in ("lebesgue", "gibbs")
    else:
        M = spec.alphabet_size
        main, lo, hi = _finite_marked(ensemble, spec, pot, obs, n, anchor, model)
        unit_total = ensemble == "gibbs"
    if normalise is None:
        normalise = not unit_total
    logs = main.log_values()
    sel = count_selection(n, alpha, direction, len(logs))
    log_c = _lse_sel(logs, sel)
    log_z = _lse_sel(logs, np.ones(len(logs), dtype=bool)) if normalise else 0.0
    value = (log_c - log_z) / n
    v_lo = v_hi = value
    if lo is not None and hi is not None:
        lz_lo = _lse_sel(lo.log_values(), np.ones(len(logs), dtype=bool)) if normalise else 0.0
        lz_hi = _lse_sel(hi.log_values(), np.ones(len(logs), dtype=bool)) if normalise else 0.0
        v_lo = min(value, (_lse_sel(lo.log_values(), sel) - lz_hi) / n)
        v_hi = max(value, (_lse_sel(hi.log_values(), sel) - lz_lo) / n)
    meta = {"normalised": normalise, "log_normaliser": log_z}
    if gauss:
        meta.update(tail=tail, grid_size=grid_size)
        if ensemble == "preimage":
            meta["anchor"] = GAUSS_ANCHOR if anchor is None else float(anchor)
    return DeviationRate(ensemble, float(alpha), direction, n, M, value, v_lo, v_hi, log_c, log_z,
                         log_c == -math.inf, meta)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MCResult:
    estimate: float
    ci: tuple
    rate: Optional[float]
    hits: int
    trials: int
    seed: int
    n: int
    alpha: float
    direction: str

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "ci": list(self.ci), "rate": self.rate, "hits": self.hits,
                "trials": self.trials, "seed": self.seed, "n": self.n, "alpha": self.alpha,
                "direction": self.direction, "rng": "numpy.PCG64", "ci_method": "wilson"}


MC_CHUNK = 2000


def mc_deviation(model: GibbsModel, obs: Indicator, alpha: float, direction: str, n: int, trials: int,
                 seed: int, workers: int = 1, confidence: float = 0.95) -> MCResult:
    """Estimate ``mu{ (1/n) #{i < n : x_i = k} >= alpha }`` (or ``<=``) by sampling.

    Trials are split into fixed chunks of 2000, each driven by its own child
    of ``numpy.random.SeedSequence(seed)``, so the result does not depend on
    ``workers``.  The interval is Wilson's score interval; with no hits the
    rate is None and only the upper end of the interval is informative.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = [MC_CHUNK] * (trials // MC_CHUNK) + ([trials % MC_CHUNK] if trials % MC_CHUNK else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    sel = count_selection(n, alpha, direction, n + 1)

    def run(job):
        ss, size = job
        x = model.sample(np.random.default_rng(ss), n, size)
        return int(sel[(x == obs.symbol).sum(axis=1)].sum())

    jobs = list(zip(children, sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = sum(pool.map(run, jobs))
    else:
        hits = sum(map(run, jobs))
    p = hits / trials
    lo, hi = proportion_confint(hits, trials, alpha=1 - confidence, method="wilson")
    rate = math.log(p) / n if hits else None
    return MCResult(p, (float(lo), float(hi)), rate, hits, trials, int(seed), n, float(alpha), direction)
