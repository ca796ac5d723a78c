"""Potentials and observables evaluated at cylinder resolution.

All quantities are kept in log space.  ``birkhoff_bounds(word)`` returns
``(lo, hi)`` enclosing ``S_n phi`` over the cylinder ``[word]`` with
``n = len(word)``; the enclosure is exact for every kind defined here except
:class:`Tilted`, whose bounds add the bounds of its parts.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import AlphabetTooLargeForEnumeration, InadmissibleWord
from .gauss import (
    continuant_table,
    continuants,
    periodic_log_weight_table,
    periodic_point,
    preimage_log_weight,
    word_to_digits,
)
from .shift import DEFAULT_WORD_BUDGET, ShiftSpec, all_strings, enumerate_words


class Potential:
    """Base class.  Subclasses implement the cylinder and point evaluations."""

    kind = "abstract"
    #: True when ``phi(x)`` depends on ``x_0`` only
    depth_one = False

    def birkhoff_bounds(self, word):
        raise NotImplementedError

    def bounds_table(self, n: int, M: int):
        """``(lo, hi)`` arrays over all ``M**n`` strings in lexicographic order.

        Entries for strings the potential cannot evaluate are NaN; callers
        mask inadmissible strings themselves.
        """
        lo = np.full(M**n, np.nan)
        hi = np.full(M**n, np.nan)
        for i, w in enumerate(all_strings(M, n)):
            try:
                lo[i], hi[i] = self.birkhoff_bounds(w)
            except InadmissibleWord:
                pass
        return lo, hi

    def periodic_value(self, word) -> float:
        """``S_n phi`` at the periodic point repeating ``word``."""
        raise NotImplementedError

    def periodic_table(self, n: int, M: int) -> np.ndarray:
        """:meth:`periodic_value` over all ``M**n`` strings (NaN where undefined)."""
        return self._table(n, M, self.periodic_value)

    def preimage_table(self, n: int, M: int, anchor) -> np.ndarray:
        """:meth:`preimage_value` over all ``M**n`` strings (NaN where undefined)."""
        return self._table(n, M, lambda w: self.preimage_value(w, anchor))

    def _table(self, n, M, fn):
        out = np.full(M**n, np.nan)
        for i, w in enumerate(all_strings(M, n)):
            try:
                out[i] = fn(w)
            except InadmissibleWord:
                pass
        return out

    def preimage_value(self, word, anchor) -> float:
        """``S_n phi`` at the point ``word`` followed by ``anchor``."""
        raise NotImplementedError

    def locally_constant(self, spec: ShiftSpec) -> Optional["LocallyConstant"]:
        """Equivalent :class:`LocallyConstant` on ``spec``, or None."""
        return None

    def __add__(self, other):
        return Tilted(self, other, 1.0)


class LocallyConstant(Potential):
    """``phi(x) = values[(x_0, ..., x_{r-1})]``.

    The keys of ``values`` are the admissible ``r``-words; continuations of a
    word are enumerated through them.
    """

    kind = "locally_constant"

    def __init__(self, depth: int, values: Dict[tuple, float], alphabet_size: Optional[int] = None):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        values = {tuple(int(s) for s in k): float(v) for k, v in values.items()}
        if any(len(k) != depth for k in values):
            raise ValueError(f"all keys must have length {depth}")
        if not all(math.isfinite(v) for v in values.values()):
            raise ValueError("values must be finite")
        self.depth = depth
        self.values = values
        self.alphabet_size = alphabet_size or (1 + max(max(k) for k in values))
        self.depth_one = depth == 1
        self._succ = {}
        for k in values:
            self._succ.setdefault(k[:-1], []).append(k[-1])

    @classmethod
    def from_json(cls, doc: dict, alphabet_size: Optional[int] = None) -> "LocallyConstant":
        """Build from ``{"depth": r, "values": {"0,1": v, ...}}``."""
        depth = int(doc["depth"])
        values = {tuple(int(s) for s in key.split(",")): v for key, v in doc["values"].items()}
        return cls(depth, values, alphabet_size)

    def to_json(self) -> dict:
        return {"depth": self.depth, "values": {",".join(map(str, k)): v for k, v in sorted(self.values.items())}}

    @property
    def sup_bound(self) -> float:
        return max(self.values.values())

    @property
    def inf_bound(self) -> float:
        return min(self.values.values())

    def _window_sum(self, seq, n):
        total = 0.0
        for i in range(n):
            key = tuple(seq[i:i + self.depth])
            if key not in self.values:
                raise InadmissibleWord(f"window {key} has no value")
            total += self.values[key]
        return total

    def _continuations(self, word):
        """All extensions of ``word`` by ``depth - 1`` symbols with every window valued."""
        r = self.depth
        out = []

        def grow(seq):
            if len(seq) == len(word) + r - 1:
                out.append(tuple(seq))
                return
            ctx = tuple(seq[len(seq) - r + 1:]) if r > 1 else ()
            for b in self._succ.get(ctx, ()):
                seq.append(b)
                grow(seq)
                seq.pop()

        # windows fully inside the word must be valued
        for i in range(len(word) - r + 1):
            if tuple(word[i:i + r]) not in self.values:
                raise InadmissibleWord(f"word {tuple(word)} has an unvalued window")
        if len(word) < r - 1:
            prefixes = [k for k in self.values if k[:len(word)] == tuple(word)]
            return [k[:-1] + (b,) for k in prefixes for b in self._succ.get(k[1:], ())] if prefixes else []
        grow(list(word))
        return out

    def birkhoff_bounds(self, word):
        word = tuple(word)
        if not word:
            raise InadmissibleWord("empty word")
        n = len(word)
        if self.depth == 1:
            s = self._window_sum(word, n)
            return s, s
        sums = [self._window_sum(seq, n) for seq in self._continuations(word)]
        if not sums:
            raise InadmissibleWord(f"word {word} has no admissible continuation")
        return min(sums), max(sums)

    def bounds_table(self, n, M):
        if self.depth == 1:
            f = np.array([self.values.get((a,), np.nan) for a in range(M)])
            t = np.zeros(1)
            for _ in range(n):
                t = (t[:, None] + f[None, :]).ravel()
            return t, t.copy()
        return super().bounds_table(n, M)

    def periodic_table(self, n, M):
        if self.depth == 1:
            return self.bounds_table(n, M)[0]
        return super().periodic_table(n, M)

    def preimage_table(self, n, M, anchor):
        if self.depth == 1:
            return self.bounds_table(n, M)[0]
        return super().preimage_table(n, M, anchor)

    def periodic_value(self, word):
        word = tuple(word)
        n, r = len(word), self.depth
        seq = word * ((r - 1) // n + 2)
        return self._window_sum(seq, n)

    def preimage_value(self, word, anchor):
        anchor = tuple(anchor)
        if len(anchor) < max(self.depth - 1, 1):
            raise ValueError(f"anchor needs at least {max(self.depth - 1, 1)} symbols")
        return self._window_sum(tuple(word) + anchor, len(word))

    def locally_constant(self, spec):
        return self

    def lifted(self, depth: int, spec: ShiftSpec) -> "LocallyConstant":
        """The same function written on admissible ``depth``-words of ``spec``."""
        if depth < self.depth:
            raise ValueError("cannot lower the depth")
        table = {}
        for w in enumerate_words(spec, depth):
            key = w[:self.depth]
            if key in self.values:
                table[w] = self.values[key]
        return LocallyConstant(depth, table, spec.alphabet_size)


class Bernoulli(LocallyConstant):
    """``phi(x) = log m[x_0]``; the product measure of ``m`` is its Gibbs state with ``P = 0``."""

    kind = "bernoulli"

    def __init__(self, weights: Sequence[float]):
        weights = np.asarray(weights, dtype=float)
        if (weights <= 0).any():
            raise ValueError("Bernoulli weights must be strictly positive")
        if weights.sum() > 1 + 1e-12:
            raise ValueError("Bernoulli weights must sum to at most 1")
        self.weights = weights
        # rounding residue of a full probability vector is not missing mass
        missing = 1.0 - float(weights.sum())
        self.tail_mass = missing if missing > 1e-12 else 0.0
        super().__init__(1, {(a,): math.log(m) for a, m in enumerate(weights)}, len(weights))


class Indicator(LocallyConstant):
    """``psi(x) = 1`` if ``x_0 == symbol`` else 0."""

    kind = "indicator"

    def __init__(self, symbol: int, alphabet_size: int):
        if not 0 <= symbol < alphabet_size:
            raise ValueError(f"symbol {symbol} outside 0..{alphabet_size - 1}")
        self.symbol = symbol
        super().__init__(1, {(a,): float(a == symbol) for a in range(alphabet_size)}, alphabet_size)

    def count(self, word) -> int:
        return sum(1 for s in word if s == self.symbol)


def constant(value: float, alphabet_size: int) -> LocallyConstant:
    return LocallyConstant(1, {(a,): value for a in range(alphabet_size)}, alphabet_size)


class GaussLog(Potential):
    """``phi = -log |DT o pi|`` for the Gauss map; symbol ``s`` is digit ``s + 1``.

    On a digit cylinder ``S_n phi`` ranges over ``-2 log(q_n + t q_{n-1})``,
    ``t`` in [0, 1], so the bounds are attained at ``t = 0`` and ``t = 1``.
    """

    kind = "gauss"
    sup_bound = 0.0
    inf_bound = -math.inf

    def birkhoff_bounds(self, word):
        if not word or min(word) < 0:
            raise InadmissibleWord(f"word {tuple(word)} is not a digit word")
        c = continuants(word_to_digits(word))
        return -2.0 * math.log(c.q + c.q_prev), -2.0 * math.log(c.q)

    def bounds_table(self, n, M):
        _, _, qp, q = continuant_table(M, n)
        q = q.astype(float)
        qp = qp.astype(float)
        return -2.0 * np.log(q + qp), -2.0 * np.log(q)

    def periodic_value(self, word):
        return periodic_point(word_to_digits(word)).log_weight

    def periodic_table(self, n, M):
        return periodic_log_weight_table(M, n)

    def preimage_table(self, n, M, anchor):
        y = float(anchor)
        _, _, qp, q = continuant_table(M, n)
        q = q.astype(float)
        return -2.0 * (np.log(q) + np.log1p(y * qp.astype(float) / q))

    def preimage_value(self, word, anchor):
        y = float(anchor)
        if not 0.0 <= y <= 1.0:
            raise ValueError("Gauss anchor must be a real number in [0, 1]")
        return preimage_log_weight(word_to_digits(word), y)


class Tilted(Potential):
    """``base + beta * obs``."""

    kind = "tilted"

    def __init__(self, base: Potential, obs: Potential, beta: float):
        self.base = base
        self.obs = obs
        self.beta = float(beta)
        self.depth_one = base.depth_one and obs.depth_one

    def _combine(self, b, o):
        blo, bhi = b
        olo, ohi = o
        if self.beta >= 0:
            return blo + self.beta * olo, bhi + self.beta * ohi
        return blo + self.beta * ohi, bhi + self.beta * olo

    def birkhoff_bounds(self, word):
        return self._combine(self.base.birkhoff_bounds(word), self.obs.birkhoff_bounds(word))

    def bounds_table(self, n, M):
        return self._combine(self.base.bounds_table(n, M), self.obs.bounds_table(n, M))

    def periodic_value(self, word):
        return self.base.periodic_value(word) + self.beta * self.obs.periodic_value(word)

    def periodic_table(self, n, M):
        return self.base.periodic_table(n, M) + self.beta * self.obs.periodic_table(n, M)

    def _obs_anchor(self, anchor):
        # a real Gauss anchor means nothing to a symbolic observable of depth one
        return (0,) if isinstance(anchor, (float, int)) else anchor

    def preimage_value(self, word, anchor):
        return (self.base.preimage_value(word, anchor)
                + self.beta * self.obs.preimage_value(word, self._obs_anchor(anchor)))

    def preimage_table(self, n, M, anchor):
        return (self.base.preimage_table(n, M, anchor)
                + self.beta * self.obs.preimage_table(n, M, self._obs_anchor(anchor)))

    def locally_constant(self, spec):
        b = self.base.locally_constant(spec)
        o = self.obs.locally_constant(spec)
        if b is None or o is None:
            return None
        r = max(b.depth, o.depth)
        b, o = b.lifted(r, spec), o.lifted(r, spec)
        keys = b.values.keys() & o.values.keys()
        return LocallyConstant(r, {k: b.values[k] + self.beta * o.values[k] for k in keys}, spec.alphabet_size)


def tilt(pot: Potential, obs: Potential, beta: float) -> Potential:
    """Potential ``pot + beta * obs``."""
    return Tilted(pot, obs, beta)


def gauss_base(pot: Potential):
    """Return ``(beta, marked_symbol)`` if ``pot`` is GaussLog or GaussLog tilted by an indicator."""
    if isinstance(pot, GaussLog):
        return 0.0, None
    if isinstance(pot, Tilted) and isinstance(pot.obs, Indicator):
        inner = gauss_base(pot.base)
        if inner is not None and inner[1] in (None, pot.obs.symbol):
            return inner[0] + pot.beta, pot.obs.symbol
    return None


def _gauss_ratio_extremes(n: int, M: Optional[int]):
    """Max and min of ``q_{n-1}/q_n`` over digit words of length ``n`` (digits <= M)."""
    hi, lo = 1.0, (0.0 if M is None else 1.0 / M)
    for _ in range(n - 1):
        hi, lo = 1.0 / (1.0 + lo), (0.0 if M is None else 1.0 / (M + hi))
    return hi, lo


def variation(pot: Potential, n: int, M: Optional[int] = None, budget: int = DEFAULT_WORD_BUDGET) -> float:
    """``D_n(phi)``: the largest spread of ``S_n phi`` over an ``n``-cylinder.

    Exact for all kinds except :class:`Tilted`, where the spreads of the parts
    are added.  ``M`` restricts the alphabet (digits ``<= M`` for GaussLog).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(pot, GaussLog):
        r_max, _ = _gauss_ratio_extremes(n, M)
        return 2.0 * math.log1p(r_max)
    if isinstance(pot, Tilted):
        return variation(pot.base, n, M, budget) + abs(pot.beta) * variation(pot.obs, n, M, budget)
    if isinstance(pot, LocallyConstant):
        if pot.depth == 1:
            return 0.0
        M = M or pot.alphabet_size
        if M ** (n + pot.depth - 1) > budget:
            raise AlphabetTooLargeForEnumeration(f"{M}^{n + pot.depth - 1} strings exceed the budget")
        best = 0.0
        for w in set(_valued_words(pot, n)):
            lo, hi = pot.birkhoff_bounds(w)
            best = max(best, hi - lo)
        return best
    raise TypeError(f"no variation rule for {type(pot).__name__}")


def _valued_words(pot: LocallyConstant, n: int):
    """Words of length ``n`` extendable through valued windows."""
    r = pot.depth
    starts = {k[:min(n, r)] for k in pot.values}
    if n <= r:
        return starts
    out = []

    def grow(seq):
        if len(seq) == n:
            out.append(tuple(seq))
            return
        for b in pot._succ.get(tuple(seq[len(seq) - r + 1:]), ()):
            seq.append(b)
            grow(seq)
            seq.pop()

    for s in starts:
        grow(list(s))
    return out
