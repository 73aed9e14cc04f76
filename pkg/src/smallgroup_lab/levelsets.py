"""Level sets ``A_i^j`` / ``B_i^j``, their closure relations, and tower thinning.

Two routes compute the same sets. The element route works on boolean
masks over ``G_i`` and needs a fiber enumeration. The class route is exact
arithmetic on class indices and applies to cyclic towers of any size: in a
cyclic tower with ``M = |G_{i-1}|`` the class ``G_i^{(k)}`` is the interval
``[(k-1)M, kM)``, so sums and negations of class runs are again runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groups import (
    DEFAULT_MAX_ORDER,
    CyclicGenerator,
    FiberEnumeration,
    FiniteGroup,
    GeneratorExhausted,
    TooLarge,
    Tower,
    enumerate_fibers,
)
from .indexsets import IndexSet

DEFAULT_MAX_INDEX = 1 << 16


class LevelSetsMissing(LookupError):
    def __init__(self, level, n=None):
        self.level = level
        msg = f"no level sets for level {level}" if n is None else f"level {level} not built to j={n}"
        super().__init__(msg)


# -- operators -------------------------------------------------------------


def op_F(group: FiniteGroup, h: np.ndarray) -> np.ndarray:
    """``HH`` together with its inverses, as a mask over the group."""
    hh = group.product_set(h, h)
    return hh | group.inverse_set(hh)


def op_G(enum: FiberEnumeration, i: int, h: np.ndarray) -> np.ndarray:
    """Smallest union of partition classes of ``G_i`` containing ``h``."""
    if i == 0:
        return h.copy()
    psi = enum.psi[i]
    hit = np.zeros(enum.tower.m[i] + 1, dtype=bool)
    hit[psi[h]] = True
    return hit[psi]


def classes_of(enum: FiberEnumeration, i: int, a: np.ndarray) -> IndexSet:
    """Indices ``k`` with ``G_i^{(k)}`` entirely inside ``a``."""
    m = enum.tower.m[i]
    total = np.bincount(enum.psi[i], minlength=m + 1)
    inside = np.bincount(enum.psi[i][a], minlength=m + 1)
    ks = np.flatnonzero((inside == total) & (total > 0))
    return IndexSet.from_indices(m, ks.tolist())


def class_union(enum: FiberEnumeration, i: int, b: IndexSet) -> np.ndarray:
    psi = enum.psi[i]
    keep = np.zeros(enum.tower.m[i] + 1, dtype=bool)
    for lo, hi in b.runs:
        keep[lo:hi + 1] = True
    return keep[psi]


# -- level sets ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevelSets:
    """``B_i^0..B_i^{j_max}`` (always) and ``A_i^j`` masks (element route only)."""

    level: int
    j_max: int
    m: int
    b: tuple
    a: tuple | None = field(default=None, repr=False)
    method: str = "elements"

    def b_at(self, j: int) -> IndexSet:
        if j > self.level:
            return IndexSet.full(self.m)
        if j > self.j_max:
            raise LevelSetsMissing(self.level, j)
        return self.b[j]

    def in_b(self, j: int, k: int) -> bool:
        return k in self.b_at(j)

    def b_size(self, j: int) -> int:
        return self.b_at(j).size


def _cyclic_step(b: IndexSet, big_m: int, m: int) -> IndexSet:
    """Classes of ``G(F(A))`` for ``A`` the union of classes in ``b``.

    Class ``k`` is the element interval ``[(k-1)M, kM)``, so ``A`` and
    ``-A`` are unions of intervals and ``F(A)`` is the union of their
    pairwise interval sums.
    """
    n = big_m * m
    intervals = []
    for lo, hi in b.runs:
        start, length = (lo - 1) * big_m, (hi - lo + 1) * big_m
        intervals.append((start, length))
        intervals.append((-(start + length - 1) % n, length))
    covered = []
    for s1, l1 in intervals:
        for s2, l2 in intervals:
            length = l1 + l2 - 1
            if length >= n:
                return IndexSet.full(m)
            start = (s1 + s2) % n
            c0 = start // big_m
            covered.append((c0, (start + length - 1) // big_m - c0 + 1))
    return IndexSet.from_cyclic_ranges(m, covered)


def build_level_sets(tower: Tower, enum: FiberEnumeration | None, i: int, j_max: int,
                     method: str = "auto") -> LevelSets:
    """``A_i^0 = G_i({e})``, ``A_i^{j+1} = G_i(F_i(A_i^j))`` for ``j < i``, ``G_i`` beyond."""
    if not 0 <= i <= tower.depth:
        raise ValueError(f"level {i} outside tower depth {tower.depth}")
    if method == "auto":
        method = "elements" if enum is not None else "classes"
    m = tower.m[i]
    top = min(i, j_max)
    if method == "classes":
        if tower.moduli is None:
            raise ValueError("the class route needs a cyclic tower")
        big_m = tower.moduli[i - 1] if i else 1
        bs = [IndexSet.from_indices(m, [1])]
        for _ in range(top):
            bs.append(_cyclic_step(bs[-1], big_m, m) if i else bs[-1])
        bs += [IndexSet.full(m)] * (j_max - top)
        return LevelSets(i, j_max, m, tuple(bs), None, "classes")
    if enum is None:
        raise ValueError("the element route needs a fiber enumeration")
    g = tower.groups[i]
    start = np.zeros(g.order, dtype=bool)
    start[g.identity] = True
    a = [op_G(enum, i, start)]
    for _ in range(top):
        a.append(op_G(enum, i, op_F(g, a[-1])))
    a += [np.ones(g.order, dtype=bool)] * (j_max - top)
    for mask in a:
        mask.setflags(write=False)
    bs = tuple(classes_of(enum, i, mask) for mask in a)
    return LevelSets(i, j_max, m, bs, tuple(a), "elements")


def build_all_level_sets(tower: Tower, enum: FiberEnumeration | None, j_max: int | None = None,
                         method: str = "auto") -> list[LevelSets]:
    """Level sets for every level; ``j_max`` defaults to the level itself."""
    return [build_level_sets(tower, enum, i, i if j_max is None else j_max, method)
            for i in range(tower.depth + 1)]


# -- closure verification --------------------------------------------------


@dataclass(frozen=True)
class RelationCheck:
    relation: str
    j: int
    holds: bool
    witness: tuple | None = None


RELATIONS = ("A-product", "A-inverse", "A-monotone", "B-product", "B-inverse", "B-monotone")


def _first(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    return int(idx[0]) if len(idx) else None


def verify_level_closure(tower: Tower, enum: FiberEnumeration, ls: LevelSets) -> list[RelationCheck]:
    """Exhaustively check the six closure relations for every ``j < j_max``.

    The B-relations are checked class pair by class pair from the index
    sets alone, independently of the stored A masks.
    """
    i = ls.level
    g = tower.groups[i]
    checks: list[RelationCheck] = []
    if i == 0:
        return [RelationCheck(r, j, True) for j in range(ls.j_max) for r in RELATIONS]

    def a_at(j):
        if ls.a is not None:
            return ls.a[j]
        return class_union(enum, i, ls.b_at(j))

    for j in range(ls.j_max):
        a, a_next = a_at(j), a_at(j + 1)
        prod = g.product_set(a, a)
        bad = _first(prod & ~a_next)
        checks.append(RelationCheck("A-product", j, bad is None, None if bad is None else (bad,)))
        bad = _first(g.inverse_set(a) & ~a_next)
        checks.append(RelationCheck("A-inverse", j, bad is None, None if bad is None else (bad,)))
        bad = _first(a & ~a_next)
        checks.append(RelationCheck("A-monotone", j, bad is None, None if bad is None else (bad,)))

        b, b_next = ls.b_at(j), ls.b_at(j + 1)
        target = class_union(enum, i, b_next)
        ks = list(b)
        masks = {k: class_union(enum, i, IndexSet.from_indices(ls.m, [k])) for k in ks}
        union = class_union(enum, i, b)
        witness = None
        if (g.product_set(union, union) & ~target).any():
            witness = next((k, k2) for k in ks for k2 in ks
                           if (g.product_set(masks[k], masks[k2]) & ~target).any())
        checks.append(RelationCheck("B-product", j, witness is None, witness))
        witness = None
        if (g.inverse_set(union) & ~target).any():
            witness = next((k,) for k in ks if (g.inverse_set(masks[k]) & ~target).any())
        checks.append(RelationCheck("B-inverse", j, witness is None, witness))
        missing = next((k for k in ks if k not in b_next), None)
        checks.append(RelationCheck("B-monotone", j, missing is None, None if missing is None else (missing,)))
    return checks


# -- growth bound and thinning --------------------------------------------


def apriori_bound(c: int, j: int) -> int:
    """Bound on ``|A_i^j|`` from ``|G_{i-1}| = c`` alone: ``c``, then ``2 d^2 c``."""
    if c < 1 or j < 0:
        raise ValueError("apriori_bound needs c >= 1 and j >= 0")
    d = c
    for _ in range(j):
        d = 2 * d * d * c
    return d


@dataclass(frozen=True)
class LevelThinning:
    level: int
    index: int
    bound: int
    required: int
    m: int
    b_size: int
    mode: str

    @property
    def holds(self) -> bool:
        return self.b_size * self.level ** 2 <= self.m


@dataclass(frozen=True)
class ThinningReport:
    generator: str
    mode: str
    indices: tuple
    levels: tuple

    @property
    def holds(self) -> bool:
        return all(lv.holds for lv in self.levels)


def _candidate_b_size(generator, prefix: list[int], n: int, i: int, max_order: int) -> int:
    tower = generator.tower(prefix + [n])
    if isinstance(generator, CyclicGenerator):
        return build_level_sets(tower, None, i, i, "classes").b_size(i)
    if tower.groups[-1].order > max_order:
        raise GeneratorExhausted(f"{generator.name}: level {i} needs order above cap {max_order}")
    enum = enumerate_fibers(tower, max_order)
    return build_level_sets(tower, enum, i, i, "elements").b_size(i)


def thin_tower(generator, depth: int, mode: str = "exact", max_order: int = DEFAULT_MAX_ORDER,
               max_index: int = DEFAULT_MAX_INDEX) -> tuple[Tower, ThinningReport]:
    """Pick ``0 = n_0 < n_1 < ...`` so that ``|B_i^i| i^2 <= m_i`` on the subsequence.

    ``apriori`` uses only group orders and the growth bound; ``exact`` takes
    the first candidate whose measured ``|B_i^i|`` already satisfies the
    inequality. Cyclic generators are evaluated with the class route and are
    limited by ``max_index``; other generators are materialised and limited
    by ``max_order``.
    """
    if mode not in ("apriori", "exact"):
        raise ValueError(f"unknown thinning mode {mode!r}")
    cyclic = isinstance(generator, CyclicGenerator)
    indices = [0]
    rows = []
    for i in range(1, depth + 1):
        prev = indices[-1]
        c = generator.order(prev)
        d = apriori_bound(c, i)
        n = prev + 1
        while True:
            if n > max_index:
                raise GeneratorExhausted(f"{generator.name}: no index <= {max_index} for level {i}")
            order = generator.order(n)
            if not cyclic and order > max_order:
                raise GeneratorExhausted(f"{generator.name}: level {i} needs order above cap {max_order}")
            ratio = order // c
            if mode == "apriori":
                if ratio >= d * i * i:
                    break
            elif _candidate_b_size(generator, indices, n, i, max_order) * i * i <= ratio:
                break
            n += 1
        indices.append(n)
        rows.append((i, n, d, ratio))
    tower = generator.tower(indices)
    levels = []
    for i, n, d, ratio in rows:
        if cyclic:
            size = build_level_sets(tower, None, i, i, "classes").b_size(i)
        else:
            size = _candidate_b_size(generator, indices[:i], n, i, max_order)
        levels.append(LevelThinning(i, n, d, d * i * i, ratio, size, mode))
    return tower, ThinningReport(generator.name, mode, tuple(indices), tuple(levels))


__all__ = [
    "LevelSets", "LevelSetsMissing", "RelationCheck", "RELATIONS", "ThinningReport", "LevelThinning",
    "op_F", "op_G", "classes_of", "class_union", "build_level_sets", "build_all_level_sets",
    "verify_level_closure", "apriori_bound", "thin_tower", "TooLarge",
]
