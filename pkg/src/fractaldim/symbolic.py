"""Finite-precision shift spaces: words, sequences, cylinders and d_beta.

Symbols are positive integers.  A one-sided sequence is stored as a
resolved head followed by an optional repeating period; without a period
the sequence only resolves ``len(head)`` symbols.  Two-sided sequences are
a (past, future) pair where ``past[0]`` is the symbol at position -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable

import numpy as np

from .errors import ResolutionExceeded, SymbolOutOfAlphabet


def _check_symbols(symbols, alphabet_size=None):
    for a in symbols:
        if int(a) != a or a < 1:
            raise SymbolOutOfAlphabet(f"symbol {a!r} is not a positive integer")
        if alphabet_size is not None and a > alphabet_size:
            raise SymbolOutOfAlphabet(f"symbol {a} outside working alphabet 1..{alphabet_size}")


@dataclass(frozen=True)
class Word:
    """Finite word occupying positions ``start .. start + len - 1``."""

    symbols: tuple
    start: int = 0

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(a) for a in self.symbols))
        _check_symbols(self.symbols)

    @property
    def end(self):
        return self.start + len(self.symbols) - 1

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, k):
        return self.symbols[k]


@dataclass(frozen=True)
class Sequence:
    """One-sided sequence ``head + period + period + ...``.

    With an empty period only the head is resolvable; ``depth`` is then
    ``len(head)`` and asking for more raises ResolutionExceeded.
    """

    head: tuple = ()
    period: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(int(a) for a in self.head))
        object.__setattr__(self, "period", tuple(int(a) for a in self.period))
        _check_symbols(self.head + self.period)
        if not self.head and not self.period:
            raise ValueError("empty sequence")

    @classmethod
    def periodic(cls, period, preperiod=()):
        return cls(tuple(preperiod), tuple(period))

    @classmethod
    def constant(cls, symbol):
        return cls((), (symbol,))

    @classmethod
    def finite(cls, symbols):
        return cls(tuple(symbols), ())

    @classmethod
    def from_function(cls, f: Callable[[int], int], depth: int):
        return cls(tuple(f(k) for k in range(depth)), ())

    @classmethod
    def random(cls, alphabet_size, depth, seed):
        rng = np.random.default_rng(seed)
        return cls(tuple(int(a) for a in rng.integers(1, alphabet_size + 1, size=depth)), ())

    @property
    def is_periodic(self):
        return bool(self.period)

    @property
    def depth(self):
        return math.inf if self.period else len(self.head)

    def __getitem__(self, k):
        if k < 0:
            raise IndexError("one-sided sequences have no negative positions")
        if k < len(self.head):
            return self.head[k]
        if not self.period:
            raise ResolutionExceeded(f"position {k} beyond resolution depth {len(self.head)}")
        return self.period[(k - len(self.head)) % len(self.period)]

    def prefix(self, k):
        if k > self.depth:
            raise ResolutionExceeded(f"prefix of length {k} beyond resolution depth {self.depth}")
        return tuple(self[j] for j in range(k))

    def shift(self, k=1):
        if k > self.depth:
            raise ResolutionExceeded(f"cannot shift {k} symbols of a depth-{self.depth} sequence")
        if k <= len(self.head):
            head = self.head[k:]
            if not head and not self.period:
                raise ResolutionExceeded("shift leaves an empty sequence")
            return Sequence(head, self.period)
        r = (k - len(self.head)) % len(self.period)
        return Sequence((), self.period[r:] + self.period[:r])

    def prepend(self, word):
        return Sequence(tuple(word) + self.head, self.period)

    def check_alphabet(self, alphabet_size):
        _check_symbols(self.head + self.period, alphabet_size)
        return self

    def key(self):
        """Hashable canonical description (minimal period, shortest head)."""
        period = self.period
        head = self.head
        if period:
            p = len(period)
            for d in range(1, p + 1):
                if p % d == 0 and period == period[:d] * (p // d):
                    period = period[:d]
                    break
            while head and head[-1] == period[-1]:
                head = head[:-1]
                period = period[-1:] + period[:-1]
        return (head, period)

    def equals(self, other):
        """Exact equality; None when undecidable (a finite sequence involved)."""
        if self.is_periodic and other.is_periodic:
            return self.key() == other.key()
        return None


@dataclass(frozen=True)
class TwoSidedSequence:
    """``past[j]`` is the symbol at position ``-(j+1)``; ``future[k]`` at ``k``."""

    past: Sequence
    future: Sequence

    def __getitem__(self, k):
        return self.future[k] if k >= 0 else self.past[-k - 1]

    def segment(self, m, n):
        return tuple(self[k] for k in range(m, n + 1))

    def shift(self):
        return TwoSidedSequence(self.past.prepend((self.future[0],)), self.future.shift())

    def tail_from(self, m):
        """The one-sided sequence ``tau|_m^infinity`` for m <= 0."""
        if m > 0:
            return self.future.shift(m)
        return self.future.prepend(tuple(self[k] for k in range(m, 0)))


@dataclass(frozen=True)
class Cylinder:
    word: Word

    def contains(self, a):
        return cylinder_contains(self, a)


def cylinder_contains(c: Cylinder, a) -> bool:
    w = c.word
    if isinstance(a, Sequence):
        if w.start < 0:
            raise ResolutionExceeded("one-sided sequence has no negative positions")
        seg = tuple(a[k] for k in range(w.start, w.end + 1))
    else:
        seg = a.segment(w.start, w.end)
    return seg == w.symbols


def common_prefix_length(a: Sequence, b: Sequence, depth: int) -> int:
    for k in range(depth):
        if a[k] != b[k]:
            return k
    return depth


def d_beta(a: Sequence, b: Sequence, beta: float, depth: int, *, with_flag=False):
    """Shift metric ``exp(-beta * L)`` with L the common-prefix length.

    Sequences that differ at position 0 are at distance 1.  Equal periodic
    sequences are at distance 0.  When the first ``depth`` symbols agree and
    equality cannot be decided, the value is clamped to ``exp(-beta*depth)``
    and the flag (returned when ``with_flag``) is False.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    for s in (a, b):
        if s.depth < depth:
            raise ResolutionExceeded(f"sequence resolves {s.depth} < {depth} symbols")
    L = common_prefix_length(a, b, depth)
    exact = True
    if L < depth:
        value = math.exp(-beta * L)
    elif a.equals(b):
        value = 0.0
    else:
        same = a.equals(b)
        if same is False:
            # periodic and distinct: the first difference lies within head + lcm of periods
            horizon = max(len(a.head), len(b.head)) + math.lcm(len(a.period), len(b.period))
            value = math.exp(-beta * common_prefix_length(a, b, horizon))
        else:
            value = math.exp(-beta * depth)
            exact = False
    return (value, exact) if with_flag else value


def shift(a: Sequence, k: int = 1) -> Sequence:
    return a.shift(k)


def all_words(alphabet_size: int, n: int) -> np.ndarray:
    """All words of length n over 1..N as an (N**n, n) array, lexicographic."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((alphabet_size,) * n).reshape(n, -1).T
    return grids.astype(np.int64) + 1


def word_index(word: Iterable[int], alphabet_size: int) -> int:
    idx = 0
    for a in word:
        idx = idx * alphabet_size + (a - 1)
    return idx


def iter_words(alphabet_size, n):
    return product(range(1, alphabet_size + 1), repeat=n)
