"""Truncated countable Markov shifts and their admissible words.

Symbols are the integers ``0..M-1``; a word is a plain ``tuple`` of symbols.
A countable alphabet is always handled through an explicit truncation ``M``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import AlphabetTooLargeForEnumeration, InadmissibleWord, NoWitnessFound, ZeroRowOrColumn

Word = tuple

DEFAULT_WORD_BUDGET = 4_000_000


@dataclass(frozen=True)
class Witness:
    """Connecting words of a common length certifying finite primitivity."""

    words: tuple
    length: int


@dataclass(frozen=True)
class ShiftSpec:
    alphabet_size: int
    transition: np.ndarray = field(repr=False)
    full: bool = False
    witness: Optional[Witness] = None

    def __post_init__(self):
        self.transition.setflags(write=False)

    def allowed(self, a: int, b: int) -> bool:
        return bool(self.transition[a, b])

    def is_admissible(self, word: Sequence[int]) -> bool:
        M = self.alphabet_size
        if any(s < 0 or s >= M for s in word):
            return False
        A = self.transition
        return all(A[a, b] for a, b in zip(word, word[1:]))

    def check_word(self, word: Sequence[int]) -> Word:
        word = tuple(int(s) for s in word)
        if not word or not self.is_admissible(word):
            raise InadmissibleWord(f"word {word} is not admissible")
        return word

    def to_json(self) -> dict:
        if self.full:
            return {"alphabet_size": self.alphabet_size, "transition": "full"}
        return {"alphabet_size": self.alphabet_size, "transition": self.transition.astype(int).tolist()}


def full_shift(alphabet_size: int) -> ShiftSpec:
    return build_shift(alphabet_size, "full")


def golden_mean_shift() -> ShiftSpec:
    return build_shift(2, [[1, 1], [1, 0]], witness_search_depth=2)


def build_shift(alphabet_size: int, transition="full", witness_search_depth: Optional[int] = None) -> ShiftSpec:
    """Validate a transition structure and optionally certify primitivity.

    Parameters
    ----------
    alphabet_size : int
        Truncation ``M``; symbols are ``0..M-1``.
    transition : "full" or (M, M) array_like of 0/1
    witness_search_depth : int, optional
        When given for a non-full shift, search connecting words of each
        common length ``N <= witness_search_depth``.  Raises
        :class:`NoWitnessFound` if none exists up to that depth.
    """
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be >= 1")
    if isinstance(transition, str):
        if transition != "full":
            raise ValueError(f"unknown transition {transition!r}")
        A = np.ones((alphabet_size, alphabet_size), dtype=np.int8)
    else:
        A = np.asarray(transition)
        if A.shape != (alphabet_size, alphabet_size):
            raise ValueError(f"transition must be {alphabet_size}x{alphabet_size}, got {A.shape}")
        if not np.isin(A, (0, 1)).all():
            raise ValueError("transition entries must be 0 or 1")
        A = A.astype(np.int8)
    bad_rows = np.flatnonzero(A.sum(axis=1) == 0)
    bad_cols = np.flatnonzero(A.sum(axis=0) == 0)
    if bad_rows.size or bad_cols.size:
        raise ZeroRowOrColumn(f"all-zero rows {bad_rows.tolist()} / columns {bad_cols.tolist()}")
    full = bool(A.all())
    witness = None
    if full:
        witness = Witness((), 0)
    elif witness_search_depth is not None:
        witness = _search_witness(A, witness_search_depth)
    return ShiftSpec(alphabet_size, A, full, witness)


def load_shift(source, witness_search_depth: Optional[int] = None) -> ShiftSpec:
    """Load ``{"alphabet_size": M, "transition": "full" | [[...]]}`` from a path or dict."""
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text())
    return build_shift(int(source["alphabet_size"]), source.get("transition", "full"), witness_search_depth)


def _search_witness(A: np.ndarray, depth: int) -> Witness:
    M = A.shape[0]
    for N in range(1, depth + 1):
        if M**N > DEFAULT_WORD_BUDGET:
            break
        spec = ShiftSpec(M, A.copy())
        candidates = list(enumerate_words(spec, N))
        # covers[c] = boolean M x M matrix of (i, j) pairs joined by candidate c
        covers = [np.outer(A[:, lam[0]], A[lam[-1], :]).astype(bool) for lam in candidates]
        if not np.logical_or.reduce(covers).all():
            continue
        chosen, covered = [], np.zeros((M, M), dtype=bool)
        while not covered.all():
            gains = [int((c & ~covered).sum()) for c in covers]
            best = int(np.argmax(gains))  # first maximum: lexicographically smallest word
            chosen.append(candidates[best])
            covered |= covers[best]
        return Witness(tuple(chosen), N)
    raise NoWitnessFound(f"no primitivity witness with N <= {depth}")


def check_witness(spec: ShiftSpec, witness: Witness) -> bool:
    """Re-check a witness against the definition for every symbol pair."""
    M, A = spec.alphabet_size, spec.transition
    if witness.length == 0:
        return not witness.words and bool(A.all())
    for lam in witness.words:
        if len(lam) != witness.length or not spec.is_admissible(lam):
            return False
    for i in range(M):
        for j in range(M):
            if not any(A[i, lam[0]] and A[lam[-1], j] for lam in witness.words):
                return False
    return True


def enumerate_words(
    spec: ShiftSpec,
    n: int,
    start_symbol: Optional[int] = None,
    end_symbol: Optional[int] = None,
    periodic_closure: bool = False,
) -> Iterator[Word]:
    """Yield admissible words of length ``n`` in lexicographic order.

    ``periodic_closure`` keeps only words with ``A[w[-1], w[0]] = 1``; these
    are in bijection with the points of period ``n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    M, A = spec.alphabet_size, spec.transition
    firsts = range(M) if start_symbol is None else [start_symbol]
    succ = [np.flatnonzero(A[a]).tolist() for a in range(M)]

    def extend(prefix):
        if len(prefix) == n:
            if end_symbol is not None and prefix[-1] != end_symbol:
                return
            if periodic_closure and not A[prefix[-1], prefix[0]]:
                return
            yield tuple(prefix)
            return
        for b in succ[prefix[-1]]:
            prefix.append(b)
            yield from extend(prefix)
            prefix.pop()

    for a in firsts:
        yield from extend([a])


def _int_matmul(X, Y):
    return [[sum(X[i][k] * Y[k][j] for k in range(len(Y))) for j in range(len(Y[0]))] for i in range(len(X))]


def _int_matpow(A, e):
    M = len(A)
    result = [[int(i == j) for j in range(M)] for i in range(M)]
    base = A
    while e:
        if e & 1:
            result = _int_matmul(result, base)
        base = _int_matmul(base, base)
        e >>= 1
    return result


def count_words(
    spec: ShiftSpec,
    n: int,
    start_symbol: Optional[int] = None,
    end_symbol: Optional[int] = None,
    periodic_closure: bool = False,
) -> int:
    """Exact number of words :func:`enumerate_words` would yield, by integer matrix powers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    M = spec.alphabet_size
    A = spec.transition.astype(int).tolist()
    P = _int_matpow(A, n - 1)
    rows = range(M) if start_symbol is None else [start_symbol]
    cols = range(M) if end_symbol is None else [end_symbol]
    return sum(P[a][b] for a in rows for b in cols if not periodic_closure or A[b][a])


def check_budget(M: int, n: int, budget: int = DEFAULT_WORD_BUDGET):
    if M**n > budget:
        raise AlphabetTooLargeForEnumeration(f"{M}^{n} words exceed the budget of {budget}")


def admissible_mask(spec: ShiftSpec, n: int, budget: int = DEFAULT_WORD_BUDGET) -> np.ndarray:
    """Boolean mask over all ``M**n`` strings in lexicographic (base-M) order."""
    M = spec.alphabet_size
    check_budget(M, n, budget)
    mask = np.ones(M, dtype=bool)
    A = spec.transition.astype(bool)
    for _ in range(n - 1):
        mask = (mask.reshape(-1, M)[:, :, None] & A[None, :, :]).reshape(-1)
    return mask


def index_to_word(index: int, M: int, n: int) -> Word:
    digits = []
    for _ in range(n):
        index, r = divmod(index, M)
        digits.append(r)
    return tuple(reversed(digits))


def all_strings(M: int, n: int):
    """All ``M**n`` strings in lexicographic order (the order used by table engines)."""
    return itertools.product(range(M), repeat=n)
