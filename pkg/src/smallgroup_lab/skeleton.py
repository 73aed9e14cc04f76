"""Finite-depth skeleton of the subgroup: witnessed membership, witness arithmetic, tail events.

A witnessed element is a coordinate word ``w`` with a level ``n`` and an
explicit index set ``U`` such that ``w_i`` lies in ``B_i^n`` for every
``i`` in ``U``. The non-principal ultrafilter that decides membership in
the real subgroup cannot be built; :class:`UltrafilterSurrogate` supplies
the index sets instead, as unions of alternate blocks between breakpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .coords import coord_inverse, coord_multiply
from .groups import FiberEnumeration, Tower
from .levelsets import LevelSets, LevelSetsMissing


class WitnessViolation(AssertionError):
    def __init__(self, level: int, detail: str = ""):
        self.level = level
        super().__init__(f"predicted membership fails at level {level}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class WitnessedElement:
    word: tuple
    level: int
    indices: frozenset
    dropped: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(int(k) for k in self.word))
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))
        object.__setattr__(self, "dropped", frozenset(int(i) for i in self.dropped))


def _level_sets(level_sets: Sequence[LevelSets], i: int) -> LevelSets:
    if i >= len(level_sets) or level_sets[i] is None:
        raise LevelSetsMissing(i)
    return level_sets[i]


def first_failure(level_sets: Sequence[LevelSets], word: Sequence[int], n: int,
                  indices: Iterable[int]) -> int | None:
    """Smallest ``i`` in ``indices`` with ``word_i`` outside ``B_i^n``, or ``None``."""
    for i in sorted(indices):
        if not 0 <= i < len(word):
            raise ValueError(f"index {i} outside the word of length {len(word)}")
        if not _level_sets(level_sets, i).in_b(n, word[i]):
            return i
    return None


def membership_truncated(level_sets: Sequence[LevelSets], word: Sequence[int], n: int,
                         indices: Iterable[int]) -> bool:
    return first_failure(level_sets, word, n, indices) is None


def identity_witness(tower: Tower) -> WitnessedElement:
    return WitnessedElement((1,) * (tower.depth + 1), 0, frozenset(range(tower.depth + 1)))


def witness_combine(tower: Tower, enum: FiberEnumeration, level_sets: Sequence[LevelSets],
                    x: WitnessedElement, y: WitnessedElement | None = None,
                    kind: str = "product", threshold: int = 0) -> WitnessedElement:
    """Witness for ``xy`` (level ``max + 1`` on ``U_x & U_y``) or ``x^{-1}`` (level ``n_x + 1`` on ``U_x``).

    Indices below ``threshold`` are removed from the claim and listed in
    ``dropped``. The claim is checked before it is returned.
    """
    if kind == "product":
        if y is None:
            raise ValueError("product needs two witnessed elements")
        word = coord_multiply(tower, enum, x.word, y.word)
        level = max(x.level, y.level) + 1
        indices = x.indices & y.indices
    elif kind == "inverse":
        word = coord_inverse(tower, enum, x.word)
        level = x.level + 1
        indices = x.indices
    else:
        raise ValueError(f"unknown combination {kind!r}")
    dropped = frozenset(i for i in indices if i < threshold)
    claim = WitnessedElement(word, level, indices - dropped, dropped)
    bad = first_failure(level_sets, claim.word, claim.level, claim.indices)
    if bad is not None:
        raise WitnessViolation(bad, f"{claim.word[bad]} not in B_{bad}^{claim.level}")
    return claim


def tail_event_measure(tower: Tower, level_sets: Sequence[LevelSets], n: int, i0: int,
                       depth: int | None = None) -> tuple[Fraction, Fraction]:
    """Measure of ``{s : s_k in B_k^n for some i0 <= k <= N}`` and the bound ``sum 1/k^2``.

    Coordinates are independent, so the union has measure
    ``1 - prod(1 - |B_k^n| / m_k)``. The bound runs over
    ``max(i0, n) <= k <= N``; a ``k = 0`` term contributes 1, the trivial
    bound for a probability.
    """
    top = tower.depth if depth is None else depth
    miss = Fraction(1)
    for k in range(i0, top + 1):
        miss *= 1 - Fraction(_level_sets(level_sets, k).b_size(n), tower.m[k])
    bound = sum((Fraction(1, k * k) if k else Fraction(1) for k in range(max(i0, n), top + 1)),
                Fraction(0))
    return 1 - miss, bound


EVEN, ODD = "even", "odd"


@dataclass(frozen=True)
class UltrafilterSurrogate:
    """Alternate blocks ``[n_j, n_{j+1})`` of a breakpoint sequence.

    Indices at or beyond the last breakpoint form one more block, so
    every index of a finite word has a parity.
    """

    parity: str
    breakpoints: tuple

    def __post_init__(self):
        if self.parity not in (EVEN, ODD):
            raise ValueError(f"parity must be 'even' or 'odd', not {self.parity!r}")
        bp = tuple(int(b) for b in self.breakpoints)
        if not bp or bp[0] != 0 or any(a >= b for a, b in zip(bp, bp[1:])):
            raise ValueError(f"breakpoints must start at 0 and increase: {bp}")
        object.__setattr__(self, "breakpoints", bp)

    def block_of(self, i: int) -> int:
        return sum(1 for b in self.breakpoints[1:] if b <= i)

    def selects_block(self, block: int) -> bool:
        return block % 2 == (0 if self.parity == EVEN else 1)

    def indices(self, depth: int) -> frozenset:
        return frozenset(i for i in range(depth + 1) if self.selects_block(self.block_of(i)))

    def flipped(self) -> "UltrafilterSurrogate":
        return UltrafilterSurrogate(ODD if self.parity == EVEN else EVEN, self.breakpoints)
