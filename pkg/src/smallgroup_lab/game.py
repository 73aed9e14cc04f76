"""Cylinder-set games on finite product spaces and the non-meagerness demonstration.

Open sets are finite unions of cylinders ``[p] = {s : s extends p}`` over
the alphabets ``{1..M_j}``. Given ``U_1, ..., U_T`` the solver builds
breakpoints ``0 = n_0 < ... < n_T`` and a reference word ``r`` such that for
every stage ``i`` and every word ``p`` of length ``n_i`` the cylinder
``p + r[n_i:n_{i+1}]`` lies in ``U_1 & ... & U_{i+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .groups import Tower
from .levelsets import LevelSets
from .skeleton import UltrafilterSurrogate, WitnessedElement, first_failure

_END = None


class GameError(ValueError):
    pass


class AlphabetMismatch(GameError):
    pass


class NotDense(GameError):
    def __init__(self, index: int, cell: tuple):
        self.index, self.cell = index, cell
        super().__init__(f"set {index} misses the cell {cell}")


class SpaceTooShallow(GameError):
    def __init__(self, stage: int):
        self.stage = stage
        super().__init__(f"the space ends before stage {stage} can be completed")


@dataclass(frozen=True)
class ProductSpace:
    branching: tuple

    def __post_init__(self):
        b = tuple(int(x) for x in self.branching)
        if not b or any(x < 1 for x in b):
            raise GameError(f"branching must be positive: {b}")
        object.__setattr__(self, "branching", b)

    def __len__(self):
        return len(self.branching)

    def words(self, length: int):
        """All words of a given length, in lexicographic order."""
        return product(*(range(1, m + 1) for m in self.branching[:length]))

    def count(self, length: int) -> int:
        return int(np.prod(self.branching[:length], dtype=object))


class CylinderUnion:
    """Union of cylinders, stored as a prefix trie of its minimal prefixes."""

    def __init__(self, prefixes: Iterable[Sequence[int]]):
        kept: list[tuple] = []
        root: dict = {}
        for p in sorted({tuple(int(a) for a in p) for p in prefixes}, key=lambda p: (len(p), p)):
            node, covered = root, False
            for a in p:
                if _END in node:
                    covered = True
                    break
                node = node.setdefault(a, {})
            if covered or _END in node:
                continue
            node.clear()
            node[_END] = True
            kept.append(p)
        self.prefixes = tuple(sorted(kept))
        self.root = root
        self.resolution = max((len(p) for p in kept), default=0)

    def __repr__(self):
        return f"CylinderUnion({len(self.prefixes)} cylinders, resolution {self.resolution})"

    def __eq__(self, other):
        return isinstance(other, CylinderUnion) and self.prefixes == other.prefixes

    def __hash__(self):
        return hash(self.prefixes)

    def _walk(self, p: Sequence[int]):
        node = self.root
        for a in p:
            if _END in node:
                return True
            node = node.get(a)
            if node is None:
                return False
        return True if _END in node else node

    def contains_word(self, word: Sequence[int]) -> bool:
        return self._walk(word) is True

    def meets(self, p: Sequence[int]) -> bool:
        return self._walk(p) is not False

    def contains_cylinder(self, p: Sequence[int], space: ProductSpace) -> bool:
        node = self._walk(p)
        if node is True or node is False:
            return node
        return _full(node, len(p), space.branching)

    def check_alphabet(self, space: ProductSpace) -> None:
        for p in self.prefixes:
            if len(p) > len(space):
                raise AlphabetMismatch(f"cylinder {p} is longer than the space")
            for j, a in enumerate(p):
                if not 1 <= a <= space.branching[j]:
                    raise AlphabetMismatch(f"symbol {a} at coordinate {j} of {p} outside 1..{space.branching[j]}")


def _full(node: dict, depth: int, branching: tuple) -> bool:
    if _END in node:
        return True
    if depth >= len(branching):
        return False
    return all(a in node and _full(node[a], depth + 1, branching) for a in range(1, branching[depth] + 1))


DenseOpenSet = CylinderUnion


class Conjunction:
    """Intersection of cylinder unions, evaluated lazily."""

    def __init__(self, sets: Sequence[CylinderUnion]):
        self.sets = tuple(sets)

    def contains_cylinder(self, p, space) -> bool:
        return all(s.contains_cylinder(p, space) for s in self.sets)

    def meets(self, p) -> bool:
        return all(s.meets(p) for s in self.sets)

    def contains_word(self, word) -> bool:
        return all(s.contains_word(word) for s in self.sets)


def intersect(a: CylinderUnion, b: CylinderUnion) -> CylinderUnion:
    """Explicit intersection: every compatible pair contributes its longer prefix."""
    out = []
    for p in a.prefixes:
        node = b._walk(p)
        if node is True:
            out.append(p)
        elif node is not False:
            out.extend(p + q for q in _leaves(node))
    return CylinderUnion(out)


def _leaves(node: dict, prefix: tuple = ()):
    if _END in node:
        yield prefix
        return
    for a, child in node.items():
        yield from _leaves(child, prefix + (a,))


def validate_dense_open(space: ProductSpace, u: CylinderUnion, index: int = 0) -> bool:
    """Every cell one step above the resolution meets ``u``.

    Raises :class:`AlphabetMismatch` for cylinders outside the space.
    """
    u.check_alphabet(space)
    if not u.prefixes:
        return False
    cell_len = max(u.resolution - 1, 0)
    return all(u.meets(cell) for cell in space.words(cell_len))


def dense_failure(space: ProductSpace, u: CylinderUnion):
    cell_len = max(u.resolution - 1, 0)
    return next((cell for cell in space.words(cell_len) if not u.meets(cell)), None)


# -- solver ----------------------------------------------------------------


@dataclass(frozen=True)
class GameSolution:
    breakpoints: tuple
    reference: tuple

    @property
    def stages(self) -> int:
        return len(self.breakpoints) - 1

    def block(self, stage: int) -> tuple:
        """Reference segment ``r[n_{stage-1}:n_stage]`` for a 1-based stage."""
        return self.reference[self.breakpoints[stage - 1]:self.breakpoints[stage]]


def _extension(u: Conjunction, base: tuple, space: ProductSpace):
    """Shortest, then lexicographically smallest, ``e`` with ``[base + e]`` inside ``u``."""
    room = len(space) - len(base)
    branching = space.branching

    def search(cur: tuple, remaining: int):
        if remaining == 0:
            return () if u.contains_cylinder(cur, space) else None
        for a in range(1, branching[len(cur)] + 1):
            nxt = cur + (a,)
            if u.meets(nxt):
                rest = search(nxt, remaining - 1)
                if rest is not None:
                    return (a,) + rest
        return None

    for length in range(room + 1):
        found = search(base, length)
        if found is not None:
            return found
    return None


def solve_game(space: ProductSpace, sets: Sequence[CylinderUnion], check: bool = True) -> GameSolution:
    for k, u in enumerate(sets, 1):
        if not validate_dense_open(space, u):
            raise NotDense(k, dense_failure(space, u))
    breakpoints = [0]
    reference: list[int] = []
    for stage in range(1, len(sets) + 1):
        u = Conjunction(sets[:stage])
        start = breakpoints[-1]
        segment: tuple = ()
        for prefix in space.words(start):
            ext = _extension(u, tuple(prefix) + segment, space)
            if ext is None:
                raise SpaceTooShallow(stage)
            segment += ext
        if not segment:
            if start >= len(space):
                raise SpaceTooShallow(stage)
            segment = (1,)
        reference.extend(segment)
        breakpoints.append(start + len(segment))
    solution = GameSolution(tuple(breakpoints), tuple(reference))
    if check:
        report = verify_game(space, solution, sets, samples=0)
        if not report.holds:
            raise AssertionError(f"solver produced an invalid solution: {report.failures()}")
    return solution


# -- verification ----------------------------------------------------------


@dataclass(frozen=True)
class StageCheck:
    stage: int
    holds: bool
    prefixes: int
    witness: tuple | None = None


@dataclass(frozen=True)
class SampleCheck:
    samples: int
    failures: int
    witness: tuple | None = None

    @property
    def holds(self) -> bool:
        return self.failures == 0


@dataclass(frozen=True)
class GameReport:
    stages: tuple
    sampling: SampleCheck | None

    @property
    def holds(self) -> bool:
        return all(s.holds for s in self.stages) and (self.sampling is None or self.sampling.holds)

    def failures(self) -> list:
        bad = [s for s in self.stages if not s.holds]
        if self.sampling is not None and not self.sampling.holds:
            bad.append(self.sampling)
        return bad


def verify_game(space: ProductSpace, solution: GameSolution, sets: Sequence[CylinderUnion],
                samples: int = 1000, rng: np.random.Generator | None = None) -> GameReport:
    """Exhaustive stage containment plus random words that copy one reference block."""
    bp, r = solution.breakpoints, solution.reference
    if len(bp) - 1 != len(sets) or bp[-1] != len(r) or bp[-1] > len(space):
        raise GameError("solution does not match the sets or the space")
    stages = []
    for stage in range(1, len(sets) + 1):
        u = Conjunction(sets[:stage])
        block = solution.block(stage)
        witness, count = None, 0
        for prefix in space.words(bp[stage - 1]):
            count += 1
            if not u.contains_cylinder(tuple(prefix) + block, space):
                witness = tuple(prefix)
                break
        stages.append(StageCheck(stage, witness is None, count, witness))
    sampling = None
    if samples and sets:
        rng = rng if rng is not None else np.random.default_rng(0)
        high = np.array(space.branching)
        fails, witness = 0, None
        for _ in range(samples):
            stage = int(rng.integers(1, len(sets) + 1))
            word = rng.integers(1, high + 1)
            word[bp[stage - 1]:bp[stage]] = solution.block(stage)
            word = tuple(int(a) for a in word)
            if not sets[stage - 1].contains_word(word):
                fails += 1
                witness = witness or (stage, word)
        sampling = SampleCheck(samples, fails, witness)
    return GameReport(tuple(stages), sampling)


# -- random dense families -------------------------------------------------


def windowed_set(space: ProductSpace, start: int, hits: dict) -> CylinderUnion:
    """``{s : s_j in hits[j] for some j >= start}`` over the coordinates in ``hits``."""
    prefixes = []
    frontier = [()]
    for j in range(len(space)):
        allowed = hits.get(j) if j >= start else None
        nxt = []
        for p in frontier:
            for a in range(1, space.branching[j] + 1):
                if allowed is not None and a in allowed:
                    prefixes.append(p + (a,))
                else:
                    nxt.append(p + (a,))
        frontier = nxt
        if j >= max(hits, default=-1):
            break
    return CylinderUnion(prefixes)


def random_windowed_sets(rng: np.random.Generator, space: ProductSpace, count: int,
                         max_start: int = 3, min_start: int = 0) -> list:
    """``count`` windowed sets; each hit set covers at least half its alphabet."""
    depth = len(space)
    sets = []
    for _ in range(count):
        start = int(rng.integers(min(min_start, depth - 1), min(max_start, depth - 1) + 1))
        hits = {}
        for j in range(start, depth):
            m = space.branching[j]
            size = int(rng.integers(max(1, (m + 1) // 2), m + 1))
            hits[j] = frozenset(int(a) + 1 for a in rng.choice(m, size=size, replace=False))
        sets.append(windowed_set(space, start, hits))
    return sets


def random_dense_family(rng: np.random.Generator, max_sets: int = 6, max_depth: int = 8,
                        max_branching: int = 4, max_start: int = 3):
    """A random space and up to ``max_sets`` windowed sets that reach its last coordinate.

    The space gets at least two coordinates more than there are sets, so
    the solver rarely runs out of room; callers still have to expect
    :class:`SpaceTooShallow`.
    """
    count = int(rng.integers(1, max_sets + 1))
    depth = int(rng.integers(min(max_depth, count + 2), max_depth + 1))
    space = ProductSpace(tuple(int(x) for x in rng.integers(1, max_branching + 1, size=depth)))
    return space, random_windowed_sets(rng, space, count, max_start)


# -- non-meagerness demonstration -----------------------------------------


@dataclass(frozen=True)
class DemoResult:
    element: WitnessedElement
    surrogate: UltrafilterSurrogate
    solution: GameSolution
    off_stages: tuple
    in_sets: tuple

    @property
    def holds(self) -> bool:
        return all(self.in_sets)


def pad_for_parity(sets: Sequence[CylinderUnion], parity: str) -> list:
    """Repeat the last set so the final stage's block lies off the surrogate."""
    sets = list(sets)
    last_block = len(sets) - 1
    if UltrafilterSurrogate(parity, (0,)).selects_block(last_block):
        sets.append(sets[-1])
    return sets


def demo_nonmeager(tower: Tower, level_sets: Sequence[LevelSets], sets: Sequence[CylinderUnion],
                   parity: str, solution: GameSolution | None = None) -> DemoResult:
    """``s_i = 1`` on the surrogate index set, ``s_i = r_i`` elsewhere.

    Without a precomputed solution the game is solved on the sets padded
    by :func:`pad_for_parity`, so ``s`` lands in every supplied set. Both
    guarantees (membership at level 0 on the surrogate indices, and
    containment in every set whose stage block lies off the surrogate) are
    checked before returning.
    """
    space = ProductSpace(tower.m)
    game_sets = list(sets)
    if solution is None:
        game_sets = pad_for_parity(sets, parity)
        solution = solve_game(space, game_sets)
    surrogate = UltrafilterSurrogate(parity, solution.breakpoints)
    n = tower.depth
    chosen = surrogate.indices(n)
    r = solution.reference
    s = tuple(1 if (i in chosen or i >= len(r)) else r[i] for i in range(n + 1))
    bad = first_failure(level_sets, s, 0, chosen)
    if bad is not None:
        raise AssertionError(f"demo element leaves B_{bad}^0")
    off = tuple(k for k in range(1, solution.stages + 1) if not surrogate.selects_block(k - 1))
    for k in off:
        if not Conjunction(game_sets[:k]).contains_word(s):
            raise AssertionError(f"demo element misses the stage {k} set")
    element = WitnessedElement(s, 0, chosen)
    in_sets = tuple(u.contains_word(s) for u in sets)
    return DemoResult(element, surrogate, solution, off, in_sets)
