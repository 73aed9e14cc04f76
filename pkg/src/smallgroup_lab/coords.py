"""Coordinates on a tower: element words <-> class-index words, cylinders, measures."""
from __future__ import annotations

from fractions import Fraction
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .groups import FiberEnumeration, Tower


class IncompatibleWord(ValueError):
    def __init__(self, level: int, reason: str = "bonding relation fails"):
        self.level = level
        super().__init__(f"level {level}: {reason}")


class InvalidCoordinates(ValueError):
    def __init__(self, level: int, value):
        self.level = level
        super().__init__(f"coordinate {value!r} out of range at level {level}")


def element_word(tower: Tower, top) -> tuple:
    """Compatible word ``(g_0, ..., g_N)`` determined by ``g_N = top``."""
    word = [int(top)]
    for level in range(tower.depth - 1, -1, -1):
        word.append(int(tower.bonds[level](word[-1])))
    return tuple(reversed(word))


def check_word(tower: Tower, word: Sequence[int]) -> None:
    if len(word) != tower.depth + 1:
        raise IncompatibleWord(len(word) - 1, f"length {len(word)} != depth + 1 = {tower.depth + 1}")
    for i, g in enumerate(word):
        if not 0 <= g < tower.groups[i].order:
            raise IncompatibleWord(i, f"{g} is not an element of G_{i}")
        if i and int(tower.bonds[i - 1](g)) != word[i - 1]:
            raise IncompatibleWord(i)


def psi_encode(tower: Tower, enum: FiberEnumeration, word: Sequence[int]) -> tuple:
    check_word(tower, word)
    return tuple(int(enum.psi[i][g]) for i, g in enumerate(word))


def check_coordinates(tower: Tower, coords: Sequence[int], full: bool = True) -> None:
    if full and len(coords) != tower.depth + 1:
        raise InvalidCoordinates(len(coords) - 1, tuple(coords))
    if len(coords) > tower.depth + 1 or not coords:
        raise InvalidCoordinates(len(coords) - 1, tuple(coords))
    for i, k in enumerate(coords):
        if not 1 <= k <= tower.m[i]:
            raise InvalidCoordinates(i, k)


def psi_decode(tower: Tower, enum: FiberEnumeration, coords: Sequence[int]) -> tuple:
    check_coordinates(tower, coords, full=False)
    word = [0]
    for i in range(1, len(coords)):
        word.append(int(enum.lift(i, word[-1], coords[i])))
    return tuple(word)


def cylinder_measure(tower: Tower, prefix: Sequence[int]) -> Fraction:
    check_coordinates(tower, prefix, full=False)
    return Fraction(1, prod(tower.m[:len(prefix)]))


def union_measure(tower: Tower, prefixes: Iterable[Sequence[int]]) -> Fraction:
    """Exact measure of a finite union of cylinders.

    Prefixes covered by a shorter one are dropped; what remains is a
    disjoint family, so the measures add.
    """
    kept: list[tuple] = []
    for p in sorted({tuple(p) for p in prefixes}, key=lambda p: (len(p), p)):
        check_coordinates(tower, p, full=False)
        if not any(p[:len(q)] == q for q in kept):
            kept.append(p)
    return sum((cylinder_measure(tower, p) for p in kept), Fraction(0))


class ProductMeasure:
    """The product of uniform measures on ``{1..m_i}``, on finite cylinder unions."""

    def __init__(self, tower: Tower):
        self.tower = tower

    def cylinder(self, prefix: Sequence[int]) -> Fraction:
        return cylinder_measure(self.tower, prefix)

    def __call__(self, prefixes: Iterable[Sequence[int]]) -> Fraction:
        return union_measure(self.tower, prefixes)

    def coordinate_event(self, level: int, allowed: int) -> Fraction:
        """Measure of ``{s : s_level in K}`` with ``|K| = allowed``."""
        return Fraction(allowed, self.tower.m[level])


def pushforward_check(tower: Tower, i: int, j: int, x) -> bool:
    """``|phi_{i,j}^{-1}(X)| / |G_j| == |X| / |G_i|`` by counting the preimage."""
    mask = np.zeros(tower.groups[i].order, dtype=bool)
    x = np.asarray(x)
    if x.dtype == bool:
        mask |= x
    elif x.size:
        mask[x.astype(np.int64)] = True
    pre = int(mask[tower.composite(i, j)].sum())
    return Fraction(pre, tower.groups[j].order) == Fraction(int(mask.sum()), tower.groups[i].order)


def pushforward_check_all(tower: Tower, i: int, j: int, max_elements: int = 20):
    """Run the pushforward identity over every subset of ``G_i``.

    Subsets are bit masks, processed in chunks; the preimage size of ``X``
    is the sum of fiber sizes over ``X``. Returns ``(checked, failure)``
    where ``failure`` is the first offending subset or ``None``.
    """
    n, big = tower.groups[i].order, tower.groups[j].order
    if n > max_elements:
        raise ValueError(f"|G_{i}| = {n} is too large for an exhaustive subset scan")
    fiber = np.bincount(tower.composite(i, j), minlength=n).astype(np.int64)
    bits = np.arange(n, dtype=np.int64)
    total = 1 << n
    chunk = 1 << min(n, 16)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        masks = (codes[:, None] >> bits) & 1
        bad = np.flatnonzero(masks @ fiber * n != masks.sum(axis=1) * big)
        if bad.size:
            return int(lo + bad[0]) + 1, tuple(np.flatnonzero(masks[bad[0]]).tolist())
    return total, None


def coord_multiply(tower: Tower, enum: FiberEnumeration, w1: Sequence[int], w2: Sequence[int]) -> tuple:
    if len(w1) != len(w2):
        raise InvalidCoordinates(min(len(w1), len(w2)), "length mismatch")
    a = psi_decode(tower, enum, w1)
    b = psi_decode(tower, enum, w2)
    word = tuple(int(tower.groups[i].mul(x, y)) for i, (x, y) in enumerate(zip(a, b)))
    return tuple(int(enum.psi[i][g]) for i, g in enumerate(word))


def coord_inverse(tower: Tower, enum: FiberEnumeration, w: Sequence[int]) -> tuple:
    a = psi_decode(tower, enum, w)
    word = tuple(int(tower.groups[i].inv(x)) for i, x in enumerate(a))
    return tuple(int(enum.psi[i][g]) for i, g in enumerate(word))


def psi_decode_batch(tower: Tower, enum: FiberEnumeration, coords: np.ndarray) -> np.ndarray:
    """Row-wise :func:`psi_decode` of full coordinate words; returns the group words."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != tower.depth + 1:
        raise InvalidCoordinates(coords.shape[-1] - 1, "expected an (n, depth + 1) array")
    bad = (coords < 1) | (coords > np.array(tower.m))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InvalidCoordinates(int(col), int(coords[row, col]))
    words = np.zeros_like(coords)
    for i in range(1, tower.depth + 1):
        words[:, i] = enum.lift(i, words[:, i - 1], coords[:, i])
    return words


def _encode_rows(enum: FiberEnumeration, words: np.ndarray) -> np.ndarray:
    return np.stack([enum.psi[i][words[:, i]] for i in range(words.shape[1])], axis=1)


def coord_multiply_batch(tower: Tower, enum: FiberEnumeration, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """Row-wise :func:`coord_multiply` on ``(n, depth + 1)`` arrays."""
    a, b = psi_decode_batch(tower, enum, w1), psi_decode_batch(tower, enum, w2)
    if a.shape != b.shape:
        raise InvalidCoordinates(0, "shape mismatch")
    words = np.stack([tower.groups[i].mul(a[:, i], b[:, i]) for i in range(a.shape[1])], axis=1)
    return _encode_rows(enum, words)


def coord_inverse_batch(tower: Tower, enum: FiberEnumeration, w: np.ndarray) -> np.ndarray:
    a = psi_decode_batch(tower, enum, w)
    words = np.stack([tower.groups[i].inv(a[:, i]) for i in range(a.shape[1])], axis=1)
    return _encode_rows(enum, words)


def identity_coords(tower: Tower) -> tuple:
    return (1,) * (tower.depth + 1)


def all_coordinate_words(tower: Tower, enum: FiberEnumeration) -> np.ndarray:
    """Rows ``psi(word(x))`` for every top element ``x``, as an ``|G_N| x (N+1)`` array."""
    top = tower.groups[-1].elements()
    cols = []
    x = top
    for i in range(tower.depth, -1, -1):
        cols.append(enum.psi[i][x])
        if i:
            x = tower.bonds[i - 1](x)
    return np.stack(cols[::-1], axis=1)
