from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, strategies as st

from smallgroup_lab.coords import all_coordinate_words, coord_inverse, coord_multiply
from smallgroup_lab.groups import CyclicGenerator, CyclicGroup, cyclic_tower, enumerate_fibers, product_tower
from smallgroup_lab.indexsets import IndexSet
from smallgroup_lab.levelsets import LevelSets, build_all_level_sets, thin_tower
from smallgroup_lab.skeleton import (EVEN, ODD, UltrafilterSurrogate, WitnessViolation, WitnessedElement,
                                     identity_witness, membership_truncated, tail_event_measure,
                                     witness_combine)


@pytest.fixture
def z4_sets(z4):
    tower, enum = z4
    return tower, enum, build_all_level_sets(tower, enum)


def test_membership_examples(z4_sets):
    tower, _, ls = z4_sets
    assert membership_truncated(ls, (1, 1, 1), 0, range(3))
    assert membership_truncated(ls, (1, 2, 2), 1, {2})
    assert not membership_truncated(ls, (1, 2, 2), 1, {1, 2})


def test_witness_square_and_inverse(z4_sets):
    tower, enum, ls = z4_sets
    x = WitnessedElement((1, 2, 2), 1, {2})
    sq = witness_combine(tower, enum, ls, x, x)
    assert (sq.word, sq.level, sq.indices) == ((1, 1, 2), 2, frozenset({2}))
    inv = witness_combine(tower, enum, ls, x, kind="inverse")
    assert (inv.word, inv.level, inv.indices) == ((1, 2, 1), 2, frozenset({2}))


def test_identity_absorbs(z4_sets):
    tower, enum, ls = z4_sets
    e = identity_witness(tower)
    for w in product(*(range(1, m + 1) for m in tower.m)):
        for n in range(3):
            u = frozenset(i for i in range(3) if ls[i].in_b(n, w[i]))
            out = witness_combine(tower, enum, ls, e, WitnessedElement(w, n, u))
            assert out.word == w and out.level == n + 1 and out.indices == u


def test_threshold_drops_low_indices(z4_sets):
    tower, enum, ls = z4_sets
    x = WitnessedElement((1, 1, 2), 0, {0, 1})
    out = witness_combine(tower, enum, ls, x, x, threshold=1)
    assert out.indices == frozenset({1}) and out.dropped == frozenset({0})


def test_false_claim_raises(z4_sets):
    tower, enum, ls = z4_sets
    # (1,2,2) is not in B_1^1, so claiming index 1 at level 0 makes a product claim at level 1 fail
    bogus = WitnessedElement((1, 2, 2), 0, {1})
    with pytest.raises(WitnessViolation) as exc:
        witness_combine(tower, enum, ls, bogus, bogus, kind="inverse")
    assert exc.value.level == 1


def _brute_b(tower, enum):
    """``B_i^j`` by direct iteration with Python sets, for ``j <= depth + 1``."""
    out = []
    for i in range(tower.depth + 1):
        g = tower.groups[i]
        cls = [int(c) for c in enum.psi[i]]
        members = {}
        for x, c in enumerate(cls):
            members.setdefault(c, set()).add(x)
        a = set(members[cls[g.identity]])
        bs = [{cls[x] for x in a}]
        for j in range(tower.depth + 1):
            if j < i:
                h = a | {int(g.inv(x)) for x in a}
                a = set().union(*(members[cls[int(g.mul(x, y))]] for x in h for y in h))
            else:
                a = set(range(g.order))
            bs.append({cls[x] for x in a})
        out.append(bs)
    return out


WITNESS_TOWERS = [
    cyclic_tower([1, 2, 4, 8]),
    cyclic_tower([1, 2, 8, 64]),
    cyclic_tower([1, 4, 16, 64]),
    product_tower(CyclicGroup(2), [0, 1, 3, 6]),
    cyclic_tower([1, 3, 9, 27]),
]


@pytest.mark.parametrize("tower", WITNESS_TOWERS, ids=lambda t: t.label)
def test_witness_calculus_against_brute_force(tower):
    enum = enumerate_fibers(tower)
    ls = build_all_level_sets(tower, enum)
    b = _brute_b(tower, enum)
    words = [tuple(r) for r in all_coordinate_words(tower, enum).tolist()]
    rng = range(tower.depth + 1)
    for x in words[:16]:
        for n1 in rng:
            u1 = frozenset(i for i in rng if x[i] in b[i][n1])
            inv = witness_combine(tower, enum, ls, WitnessedElement(x, n1, u1), kind="inverse")
            assert inv.word == coord_inverse(tower, enum, x)
            assert all(inv.word[i] in b[i][n1 + 1] for i in inv.indices)
            for y in words:
                for n2 in rng:
                    u2 = frozenset(i for i in rng if y[i] in b[i][n2])
                    out = witness_combine(tower, enum, ls, WitnessedElement(x, n1, u1),
                                          WitnessedElement(y, n2, u2))
                    assert out.word == coord_multiply(tower, enum, x, y)
                    assert out.indices == u1 & u2 and out.level == max(n1, n2) + 1
                    assert all(out.word[i] in b[i][out.level] for i in out.indices)


def test_toy_tail_measure():
    tower = cyclic_tower([1, 2, 4])
    ls = [LevelSets(i, 0, m, (IndexSet.from_indices(m, [1]),)) for i, m in enumerate(tower.m)]
    measure, bound = tail_event_measure(tower, ls, 0, 1, 2)
    assert measure == Fraction(3, 4)
    assert bound == 1 + Fraction(1, 4)


def test_tail_empty_range():
    tower = cyclic_tower([1, 2, 4])
    ls = build_all_level_sets(tower, enumerate_fibers(tower))
    assert tail_event_measure(tower, ls, 1, 3) == (0, 0)


def _brute_tail(tower, enum, ls, n, i0):
    words = [tuple(r) for r in all_coordinate_words(tower, enum).tolist()]
    hits = sum(1 for w in words if any(ls[k].in_b(n, w[k]) for k in range(i0, tower.depth + 1)))
    return Fraction(hits, len(words))


@pytest.mark.parametrize("orders", [[1, 2, 4, 8], [1, 2, 64, 1 << 12], [1, 3, 9, 81], [1, 6, 36]], ids=str)
def test_tail_measure_matches_enumeration(orders):
    tower = cyclic_tower(orders)
    enum = enumerate_fibers(tower)
    ls = build_all_level_sets(tower, enum)
    for n in range(tower.depth + 1):
        for i0 in range(tower.depth + 2):
            assert tail_event_measure(tower, ls, n, i0)[0] == _brute_tail(tower, enum, ls, n, i0)


def test_thinned_tail_below_bound():
    tower, _ = thin_tower(CyclicGenerator(2), 4, "exact")
    ls = build_all_level_sets(tower, None, method="classes")
    measure, bound = tail_event_measure(tower, ls, 2, 2, 4)
    assert bound == Fraction(1, 4) + Fraction(1, 9) + Fraction(1, 16)
    assert measure <= bound
    miss = 1
    for k in (2, 3, 4):
        miss *= 1 - Fraction(ls[k].b_size(2), tower.m[k])
    assert measure == 1 - miss


def test_surrogate_blocks():
    s = UltrafilterSurrogate(EVEN, (0, 2, 5))
    assert [s.block_of(i) for i in range(7)] == [0, 0, 1, 1, 1, 2, 2]
    assert s.indices(6) == frozenset({0, 1, 5, 6})
    assert s.flipped().indices(6) == frozenset({2, 3, 4})
    with pytest.raises(ValueError):
        UltrafilterSurrogate("both", (0,))
    with pytest.raises(ValueError):
        UltrafilterSurrogate(ODD, (1, 2))


@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.integers(0, 20))
def test_surrogate_parities_partition(steps, depth):
    bp = [0]
    for s in steps:
        bp.append(bp[-1] + s)
    even = UltrafilterSurrogate(EVEN, tuple(bp))
    odd = even.flipped()
    assert even.indices(depth) | odd.indices(depth) == frozenset(range(depth + 1))
    assert not even.indices(depth) & odd.indices(depth)
