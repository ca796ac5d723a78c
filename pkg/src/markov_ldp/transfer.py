"""Transfer operators and the count-marked dynamic programme.

Two realisations share one DP:

* :class:`WindowChain`, the exact finite matrix of a locally constant
  potential on the higher-block graph of a truncated shift;
* :class:`GaussOperator`, a Chebyshev collocation of the weighted Gauss
  operator ``(L f)(t) = sum_a (a+t)**(-2s) f(1/(a+t))``.

The marked DP splits an operator as ``L0 + z L1``, where ``L1`` carries the
branches that raise the count, and returns the coefficient of every power of
``z`` in ``(L0 + z L1)**n v``.  Each coefficient keeps its own log scale, so
nothing underflows at moderate ``n``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import zeta

from .errors import DivergedInterpolation
from .potential import Potential
from .shift import ShiftSpec, enumerate_words

#: Collocation interval.  Every inverse branch maps it strictly inside itself,
#: which keeps the discretised operator well conditioned.
J_LO, J_HI = -0.2, 1.3
EXPLICIT_BRANCHES = 2000


@dataclass
class Marked:
    """Coefficients ``exp(log_scale[c]) * coef[c]`` of ``z**c``."""

    coef: np.ndarray
    log_scale: np.ndarray

    def reduce(self, fn) -> "Marked":
        """Apply a linear map to every coefficient, keeping the scales."""
        return Marked(np.array([fn(c) for c in self.coef]), self.log_scale.copy())

    def log_values(self) -> np.ndarray:
        """``log`` of scalar coefficients; ``-inf`` for zero, NaN for negative."""
        c = np.asarray(self.coef, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(c > 0, np.log(np.where(c > 0, c, 1.0)) + self.log_scale,
                            np.where(c == 0, -np.inf, np.nan))


def marked_dp(L0, L1, init, n: int, first=None) -> Marked:
    """Coefficients of ``(L0 + z L1)**n init`` by count.

    ``first`` optionally replaces ``(L0, L1)`` in the first (innermost) step.
    ``init`` may be a vector or a matrix (columns evolve independently).
    """
    init = np.asarray(init, dtype=float)
    coef = np.zeros((n + 1,) + init.shape)
    logs = np.full(n + 1, -np.inf)
    scale = np.abs(init).max()
    if scale == 0:
        return Marked(coef, logs)
    coef[0] = init / scale
    logs[0] = math.log(scale)
    for m in range(n):
        A0, A1 = first if (m == 0 and first is not None) else (L0, L1)
        live = coef[:m + 1]
        p0 = np.einsum("ij,cj...->ci...", A0, live)
        p1 = np.einsum("ij,cj...->ci...", A1, live)
        new = np.zeros_like(coef[:m + 2])
        new_logs = np.full(m + 2, -np.inf)
        lo_prev = logs[:m + 1]
        for c in range(m + 2):
            a = lo_prev[c] if c <= m else -np.inf
            b = lo_prev[c - 1] if c >= 1 else -np.inf
            top = max(a, b)
            if top == -np.inf:
                continue
            val = 0.0
            if a > -np.inf:
                val = val + p0[c] * math.exp(a - top)
            if b > -np.inf:
                val = val + p1[c - 1] * math.exp(b - top)
            s = np.abs(val).max()
            if s > 0:
                new[c] = val / s
                new_logs[c] = top + math.log(s)
        coef[:m + 2] = new
        logs[:m + 2] = new_logs
    return Marked(coef, logs)


def logsumexp_marked(log_values: np.ndarray, select) -> float:
    """``log`` of the sum of ``exp(log_values[c])`` over counts ``c`` in ``select``."""
    vals = log_values[select]
    vals = vals[vals > -np.inf]
    if vals.size == 0:
        return -math.inf
    top = vals.max()
    return float(top + math.log(np.exp(vals - top).sum()))


# ---------------------------------------------------------------------------
# finite systems


class WindowChain:
    """Exact transfer matrix of a locally constant potential.

    States are admissible words of length ``R - 1`` (``R >= 2``); the edge
    ``u -> v`` appends ``v[-1]``, completes the window ``u + v[-1]`` and carries
    ``exp`` of its value.  ``marked`` selects the symbol whose occurrences are
    counted (an edge counts when its window starts with that symbol).
    """

    def __init__(self, spec: ShiftSpec, pot: Potential, marked: Optional[int] = None):
        lc = pot.locally_constant(spec)
        if lc is None:
            raise TypeError(f"{type(pot).__name__} has no locally constant form")
        R = max(2, lc.depth)
        lc = lc.lifted(R, spec)
        self.spec, self.depth, self.pot, self.marked = spec, R, lc, marked
        self.states = list(enumerate_words(spec, R - 1))
        self.index = {u: i for i, u in enumerate(self.states)}
        S = len(self.states)
        self.T0 = np.zeros((S, S))
        self.T1 = np.zeros((S, S))
        self.log_edge = np.full((S, S), -np.inf)
        for window, value in lc.values.items():
            i, j = self.index[window[:-1]], self.index[window[1:]]
            target = self.T1 if marked is not None and window[0] == marked else self.T0
            target[i, j] = math.exp(value)
            self.log_edge[i, j] = value
        self.state_counts = np.array([sum(1 for s in u if s == marked) for u in self.states])

    @property
    def matrix(self) -> np.ndarray:
        return self.T0 + self.T1

    def tilted(self, beta: float) -> np.ndarray:
        return self.T0 + math.exp(beta) * self.T1

    def spectral_radius(self, beta: float = 0.0) -> float:
        return float(np.abs(np.linalg.eigvals(self.tilted(beta))).max())

    def _dp(self, init, n):
        # row-vector recursion F T written as T^T F
        return marked_dp(self.T0.T, self.T1.T, init, n)

    def word_sums(self, n: int, bound: str = "hi", init_log=None) -> Marked:
        """``sum_w exp(hi(w))`` (or ``lo``) split by the count of the marked symbol in ``w``.

        ``bound="none"`` drops the last ``R - 1`` windows instead of taking
        their extreme; ``init_log`` adds a log weight for the first ``R - 1``
        symbols.  Together they give cylinder masses of a Markov measure.
        """
        R = self.depth
        if n < R - 1:
            raise ValueError(f"n must be >= {R - 1} for a depth-{R} chain")
        init = np.ones(len(self.states)) if init_log is None else np.exp(np.asarray(init_log))
        res = self._dp(init, n - R + 1)
        # closing factor: extreme over continuations of the last R-1 windows
        pick = np.max if bound == "hi" else np.min
        fill = -np.inf if bound == "hi" else np.inf
        finite = np.isfinite(self.log_edge)
        acc = np.zeros(len(self.states))
        for _ in range(R - 1):
            acc = pick(np.where(finite, self.log_edge + acc[None, :], fill), axis=1)
        g = np.exp(acc) if bound != "none" else np.ones(len(self.states))
        return self._close(res, g, self.state_counts)

    def _close(self, res: Marked, g, shifts):
        K = res.coef.shape[0] + int(shifts.max(initial=0))
        coef = np.zeros(K)
        logs = np.full(K, -np.inf)
        for c in range(res.coef.shape[0]):
            if res.log_scale[c] == -np.inf:
                continue
            for j in np.unique(shifts):
                v = float(np.dot(res.coef[c][shifts == j], g[shifts == j]))
                if v == 0:
                    continue
                cc = c + j
                lv = res.log_scale[c] + math.log(v) if v > 0 else np.nan
                if logs[cc] == -np.inf:
                    coef[cc], logs[cc] = 1.0, lv
                else:
                    top = max(logs[cc], lv)
                    coef[cc] = coef[cc] * math.exp(logs[cc] - top) + math.exp(lv - top)
                    logs[cc] = top
        return Marked(coef, logs)

    def periodic_sums(self, n: int, start_symbol: Optional[int] = None) -> Marked:
        """``sum exp(S_n phi)`` over period-``n`` points, split by count."""
        cols = [i for i, u in enumerate(self.states) if start_symbol is None or u[0] == start_symbol]
        init = np.zeros((len(self.states), len(cols)))
        for j, i in enumerate(cols):
            init[i, j] = 1.0
        res = self._dp(init, n)
        return res.reduce(lambda F: sum(F[i, j] for j, i in enumerate(cols)))

    def preimage_sums(self, n: int, anchor) -> Marked:
        """``sum exp(S_n phi(w y))`` over words ``w`` with ``w y`` admissible."""
        anchor = tuple(anchor)
        R = self.depth
        end = anchor[:R - 1]
        if len(end) < R - 1 or end not in self.index:
            raise ValueError(f"anchor must begin with an admissible word of length {R - 1}")
        res = self._dp(np.ones(len(self.states)), n)
        k = self.index[end]
        # the final state holds anchor symbols, which the edges never count
        return res.reduce(lambda F: F[k])


# ---------------------------------------------------------------------------
# Gauss operator


def chebyshev_nodes(G: int, lo: float = J_LO, hi: float = J_HI) -> np.ndarray:
    s = np.cos(np.pi * np.arange(G) / (G - 1))[::-1]
    return lo + (hi - lo) * (s + 1) / 2


def barycentric_weights(G: int) -> np.ndarray:
    w = (-1.0) ** np.arange(G)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def interp_matrix(nodes, weights, x) -> np.ndarray:
    """Rows evaluating the barycentric interpolant at the points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x[:, None] - nodes[None, :]
    exact = d == 0
    d[exact] = 1.0
    c = weights / d
    B = c / c.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    B[rows] = exact[rows].astype(float)
    return B


def _branch_sum(nodes, weights, digits, s):
    G = len(nodes)
    out = np.zeros((G, G))
    for chunk in np.array_split(digits, max(1, len(digits) // 256)):
        X = 1.0 / (chunk[:, None] + nodes[None, :])
        B = interp_matrix(nodes, weights, X.ravel()).reshape(len(chunk), G, G)
        out += (B * (X ** (2 * s))[:, :, None]).sum(axis=0)
    return out


class GaussOperator:
    """Collocation matrix of the Gauss operator with exponent ``s``.

    Parameters
    ----------
    M : int
        Branches ``a = 1..M`` are summed explicitly.
    grid_size : int
        Number of Chebyshev-Lobatto nodes on ``[-0.2, 1.3]``.
    marked : int, optional
        Digit whose branch is split off into ``L1`` (the counted branch).
    tail : bool
        When True the operator represents the full system: branches up to
        ``max(M, 2000)`` are explicit and the rest are summed in closed form
        with Hurwitz zeta values from a first-order expansion of ``f`` at 0.
        When False it is the operator of the ``M``-digit truncation.
    """

    def __init__(self, M: int, grid_size: int = 64, marked: Optional[int] = None, tail: bool = True, s: float = 1.0):
        if M < 1 or grid_size < 8:
            raise ValueError("need M >= 1 and grid_size >= 8")
        self.M, self.grid_size, self.marked, self.tail, self.s = M, grid_size, marked, tail, s
        self.nodes = chebyshev_nodes(grid_size)
        self.weights = barycentric_weights(grid_size)
        top = max(M, EXPLICIT_BRANCHES) if tail else M
        self.explicit = top
        total = _branch_sum(self.nodes, self.weights, np.arange(1, top + 1, dtype=float), s)
        if marked is not None and 1 <= marked <= top:
            L1 = _branch_sum(self.nodes, self.weights, np.array([float(marked)]), s)
        else:
            L1 = np.zeros_like(total)
        L0 = total - L1
        if tail:
            h = 1.0 / (top + 1)
            e0 = self.row(0.0)
            eh = self.row(h)
            L0 = L0 + np.outer(zeta(2 * s, top + 1 + self.nodes), e0)
            L0 = L0 + np.outer(zeta(2 * s + 1, top + 1 + self.nodes), (eh - e0) / h)
        self.L0, self.L1 = L0, L1

    def row(self, x) -> np.ndarray:
        r = interp_matrix(self.nodes, self.weights, x)
        return r[0] if np.ndim(x) == 0 else r

    def matrix(self, beta: float = 0.0) -> np.ndarray:
        return self.L0 + math.exp(beta) * self.L1 if beta else self.L0 + self.L1

    @functools.cached_property
    def quadrature_row(self) -> np.ndarray:
        """Row integrating the interpolant over ``[0, 1]`` (Gauss-Legendre)."""
        x, w = np.polynomial.legendre.leggauss(self.grid_size)
        return (w / 2) @ self.row((x + 1) / 2)

    @functools.cached_property
    def second_derivative(self) -> np.ndarray:
        t, w = self.nodes, self.weights
        G = len(t)
        D = np.zeros((G, G))
        for i in range(G):
            dt = t[i] - t
            dt[i] = 1.0
            D[i] = (w / w[i]) / dt
            D[i, i] = 0.0
            D[i, i] = -D[i].sum()
        return D @ D

    def tail_allowance(self, f: np.ndarray) -> float:
        """Relative error bound of the closed-form tail applied to ``f``.

        The remainder of the first-order expansion on ``[0, 1/(A+1)]`` is at
        most ``|f''|/2 * x * (x + h)`` for ``x = 1/(a+t) <= h``; summing over
        ``a > A`` gives roughly ``|f''| h**3``.
        """
        if not self.tail:
            return 0.0
        h = 1.0 / (self.explicit + 1)
        f2 = np.abs(self.second_derivative @ f).max()
        return float(2.0 * f2 * h**3 / np.abs(f).min())

    def density(self) -> np.ndarray:
        """Gauss density ``1/((1+t) log 2)`` at the nodes."""
        return 1.0 / ((1.0 + self.nodes) * math.log(2.0))


@functools.lru_cache(maxsize=32)
def gauss_operator(M: int, grid_size: int = 64, marked: Optional[int] = None, tail: bool = True, s: float = 1.0) -> GaussOperator:
    """Cached :class:`GaussOperator`; instances are treated as read-only."""
    return GaussOperator(M, grid_size, marked, tail, s)


@dataclass(frozen=True)
class PowerResult:
    log_lo: float
    log_hi: float
    log_mid: float
    vector: np.ndarray
    iterations: int


def power_bracket(L: np.ndarray, n_iter: int, tol: float = 1e-2) -> PowerResult:
    """Power iteration from the constant function with Collatz-Wielandt bounds.

    Raises :class:`DivergedInterpolation` when the iterate stops being
    positive or the final ratios spread by more than ``tol`` in log.
    """
    f = np.ones(L.shape[0])
    for _ in range(n_iter):
        g = L @ f
        if not (g > 0).all():
            raise DivergedInterpolation("iterate lost positivity")
        ratio = g / f
        f = g / g.max()
    lo, hi = math.log(ratio.min()), math.log(ratio.max())
    if hi - lo > tol:
        raise DivergedInterpolation(f"ratio oscillation {hi - lo:.3g} exceeds {tol}")
    return PowerResult(lo, hi, float(np.log(ratio).mean()), f, n_iter)


def _branch_pair(op: GaussOperator, digit: int):
    """``(L0, L1)`` restricted to the single branch ``digit``."""
    B = _branch_sum(op.nodes, op.weights, np.array([float(digit)]), op.s)
    Z = np.zeros_like(B)
    return (Z, B) if digit == op.marked else (B, Z)


def gauss_vector_sums(op: GaussOperator, init, n: int, first_digit: Optional[int] = None) -> Marked:
    """Marked coefficients of ``L**n init``; the first step is the first digit."""
    first = _branch_pair(op, first_digit) if first_digit is not None else None
    return marked_dp(op.L0, op.L1, init, n, first=first)


def gauss_periodic_sums(M: int, n: int, grid_size: int = 64, marked: Optional[int] = None, tail: bool = True,
                        first_digit: Optional[int] = None) -> Marked:
    """``sum |DT^n(x)|^-1`` over period-``n`` points, split by count of ``marked``.

    Uses the trace identity ``Z_n = tr L_1^n - (-1)^n tr L_2^n`` with ``L_s``
    the operator of exponent ``s``.  Spurious small eigenvalues of the
    collocation matrices pollute traces of short powers; results are accurate
    to about ``1e-12`` relative for ``n >= 8``.
    """
    parts = []
    for s in (1.0, 2.0):
        op = gauss_operator(M, grid_size, marked, tail, s)
        res = gauss_vector_sums(op, np.eye(grid_size), n, first_digit)
        parts.append(res.reduce(np.trace))
    a, b = parts
    sign = -1.0 if n % 2 == 0 else 1.0
    top = np.maximum(a.log_scale, b.log_scale)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore"):
        ea = np.where(np.isfinite(a.log_scale), np.exp(a.log_scale - safe), 0.0)
        eb = np.where(np.isfinite(b.log_scale), np.exp(b.log_scale - safe), 0.0)
    coef = a.coef * ea + sign * b.coef * eb
    return Marked(coef, np.where(np.isfinite(top), top, -np.inf))
