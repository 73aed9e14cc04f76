"""Sets of class indices ``{1..m}`` stored as sorted runs.

Class-index sets can live in ranges far beyond machine integers (thinned
cyclic towers reach ``m`` in the thousands of bits), but they are always a
handful of runs, so membership and size stay cheap.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class IndexSet:
    """Subset of ``{1..m}`` as disjoint, non-adjacent inclusive runs."""

    m: int
    runs: tuple

    @classmethod
    def from_runs(cls, m: int, runs: Iterable[tuple[int, int]]) -> "IndexSet":
        merged: list[list[int]] = []
        for lo, hi in sorted(r for r in runs if r[0] <= r[1]):
            if lo < 1 or hi > m:
                raise ValueError(f"run {(lo, hi)} outside 1..{m}")
            if merged and lo <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(m, tuple((a, b) for a, b in merged))

    @classmethod
    def from_indices(cls, m: int, indices: Iterable[int]) -> "IndexSet":
        return cls.from_runs(m, ((int(k), int(k)) for k in indices))

    @classmethod
    def full(cls, m: int) -> "IndexSet":
        return cls(m, ((1, m),))

    @classmethod
    def from_cyclic_ranges(cls, m: int, ranges: Iterable[tuple[int, int]]) -> "IndexSet":
        """Runs given as 0-based ``(start, length)`` on the cycle ``Z/m``."""
        runs = []
        for start, length in ranges:
            if length >= m:
                return cls.full(m)
            start %= m
            end = start + length - 1
            if end < m:
                runs.append((start + 1, end + 1))
            else:
                runs.append((start + 1, m))
                runs.append((1, end - m + 1))
        return cls.from_runs(m, runs)

    def __len__(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.runs)

    @property
    def size(self) -> int:
        return len(self)

    def __contains__(self, k) -> bool:
        k = int(k)
        pos = bisect_right(self.runs, (k, float("inf"))) - 1
        return pos >= 0 and self.runs[pos][0] <= k <= self.runs[pos][1]

    def __iter__(self):
        for lo, hi in self.runs:
            yield from range(lo, hi + 1)

    def issubset(self, other: "IndexSet") -> bool:
        return all(lo in other and _run_inside(lo, hi, other) for lo, hi in self.runs)

    def to_frozenset(self) -> frozenset:
        return frozenset(self)

    def __repr__(self):
        body = ",".join(f"{a}" if a == b else f"{a}..{b}" for a, b in self.runs)
        return f"IndexSet(m={self.m}, {{{body}}})"


def _run_inside(lo: int, hi: int, other: IndexSet) -> bool:
    pos = bisect_right(other.runs, (lo, float("inf"))) - 1
    return pos >= 0 and other.runs[pos][0] <= lo and hi <= other.runs[pos][1]
