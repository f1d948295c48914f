"""Multi-index arithmetic, derivative bases and the Faa di Bruno expansion.

A multi-index is a plain tuple of non-negative ints, one entry per
differentiation variable: ``(2, 1)`` stands for d^3 / da^2 db.  Bases are
ordered by total order first and then so that earlier variables come first,
which is the order the derivatives are written by hand: ``a, b, aa, ab, bb``.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from math import comb, prod
from typing import Iterable, Iterator, Sequence

MultiIndex = tuple[int, ...]

MAX_ORDER = 6
MAX_JET_ORDER = 5

BELL_NUMBERS = (1, 1, 2, 5, 15, 52, 203)


def as_index(s: Iterable[int]) -> MultiIndex:
    s = tuple(int(x) for x in s)
    if any(x < 0 for x in s):
        raise ValueError(f"multi-index components must be non-negative: {s}")
    if sum(s) > MAX_ORDER:
        raise ValueError(f"total order {sum(s)} of {s} exceeds the engine limit {MAX_ORDER}")
    return s


def order(s: MultiIndex) -> int:
    return sum(s)


def zero(n_vars: int) -> MultiIndex:
    return (0,) * n_vars


def unit(n_vars: int, var: int) -> MultiIndex:
    return tuple(1 if i == var else 0 for i in range(n_vars))


def add(s: MultiIndex, r: MultiIndex) -> MultiIndex:
    return tuple(a + b for a, b in zip(s, r))


def sub(s: MultiIndex, r: MultiIndex) -> MultiIndex:
    return tuple(a - b for a, b in zip(s, r))


def dominates(s: MultiIndex, r: MultiIndex) -> bool:
    """True when ``s - r`` has no negative components."""
    return len(s) == len(r) and all(a >= b for a, b in zip(s, r))


def sort_key(s: MultiIndex) -> tuple:
    return (sum(s), tuple(-x for x in s))


def binomial(s: Sequence[int], r: Sequence[int]) -> int:
    """Multi-index binomial coefficient, the product of per-component ones."""
    s, r = tuple(s), tuple(r)
    if len(s) != len(r):
        raise ValueError(f"multi-indices {s} and {r} have different lengths")
    if not dominates(s, r):
        raise ValueError(f"{r} exceeds {s} in some component")
    return prod(comb(a, b) for a, b in zip(s, r))


def lower_set(s: Sequence[int]) -> list[MultiIndex]:
    """All ``r`` with ``0 <= r <= s`` componentwise, in basis order."""
    s = as_index(s)
    out = [tuple(r) for r in itertools.product(*(range(x + 1) for x in s))]
    return sorted(out, key=sort_key)


def label(s: MultiIndex, names: str = "abcdefgh") -> str:
    """Human-readable subscript, ``(2, 1) -> 'aab'``; the zero index is ``'0'``."""
    text = "".join(names[i] * n for i, n in enumerate(s))
    return text or "0"


class DerivativeBasis:
    """Ordered, downward-closed set of multi-indices propagated through a network."""

    def __init__(self, indices: Iterable[Sequence[int]]):
        idx = {as_index(s) for s in indices}
        if not idx:
            raise ValueError("a derivative basis needs at least the zero index")
        lengths = {len(s) for s in idx}
        if len(lengths) != 1:
            raise ValueError("all multi-indices of a basis must have the same length")
        n_vars = lengths.pop()
        for s in idx:
            for r in lower_set(s):
                if r not in idx:
                    raise ValueError(f"basis is not downward-closed: {s} present but {r} missing")
        self.indices: tuple[MultiIndex, ...] = tuple(sorted(idx, key=sort_key))
        self.n_vars = n_vars
        self._pos = {s: i for i, s in enumerate(self.indices)}

    @classmethod
    def closure(cls, indices: Iterable[Sequence[int]]) -> "DerivativeBasis":
        """Smallest basis containing ``indices``."""
        out: set[MultiIndex] = set()
        for s in indices:
            out.update(lower_set(s))
        return cls(out)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.indices)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.indices[i]

    def __contains__(self, s) -> bool:
        return tuple(s) in self._pos

    def __eq__(self, other) -> bool:
        return isinstance(other, DerivativeBasis) and self.indices == other.indices

    def __hash__(self) -> int:
        return hash(self.indices)

    def __repr__(self) -> str:
        return f"DerivativeBasis([{', '.join(label(s) for s in self.indices)}])"

    def position(self, s: Sequence[int]) -> int:
        try:
            return self._pos[tuple(s)]
        except KeyError:
            raise KeyError(f"{tuple(s)} is not in {self!r}") from None

    @property
    def max_order(self) -> int:
        return max(sum(s) for s in self.indices)

    @property
    def zero(self) -> MultiIndex:
        return zero(self.n_vars)

    def issubset(self, other: "DerivativeBasis") -> bool:
        return all(s in other for s in self.indices)

    def of_order(self, k: int) -> list[MultiIndex]:
        return [s for s in self.indices if sum(s) == k]


def total_basis(n_vars: int, max_order: int) -> DerivativeBasis:
    """Every multi-index over ``n_vars`` variables with total order ``<= max_order``."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    idx = [s for s in itertools.product(range(max_order + 1), repeat=n_vars) if sum(s) <= max_order]
    return DerivativeBasis(idx)


@dataclass(frozen=True)
class BrunoTerm:
    """One summand ``coefficient * sigma^(k)(z) * prod(d^f z for f in factors)``."""

    sigma_order: int
    factors: tuple[MultiIndex, ...]
    coefficient: int


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in set_partitions(rest):
        yield [[first], *p]
        for i in range(len(p)):
            yield p[:i] + [[first, *p[i]]] + p[i + 1:]


@lru_cache(maxsize=None)
def _bruno(s: MultiIndex) -> tuple[BrunoTerm, ...]:
    slots = [var for var, n in enumerate(s) for _ in range(n)]
    counts: Counter = Counter()
    for partition in set_partitions(range(len(slots))):
        blocks = []
        for block in partition:
            m = [0] * len(s)
            for j in block:
                m[slots[j]] += 1
            blocks.append(tuple(m))
        counts[tuple(sorted(blocks, key=sort_key))] += 1
    terms = [BrunoTerm(len(f), f, c) for f, c in counts.items()]
    terms.sort(key=lambda t: (-t.sigma_order, [sort_key(f) for f in t.factors]))
    return tuple(terms)


def bruno_terms(s: Sequence[int]) -> tuple[BrunoTerm, ...]:
    """Chain-rule expansion of ``d^s sigma(z)`` into sigma-derivative terms.

    The ``|s|`` differentiation slots are split in every possible way
    (set partitions); each block becomes one factor ``d^block z`` and the
    number of blocks is the order of the sigma derivative in front.
    Partitions giving the same product are merged and counted.

    Examples
    --------
    >>> [(t.sigma_order, t.coefficient) for t in bruno_terms((2,))]
    [(2, 1), (1, 1)]
    """
    s = as_index(s)
    if not 1 <= sum(s) <= MAX_JET_ORDER:
        raise ValueError(f"expansion is defined for 1 <= |s| <= {MAX_JET_ORDER}, got {s}")
    return _bruno(s)
