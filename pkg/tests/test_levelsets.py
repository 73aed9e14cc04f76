import numpy as np
import pytest
from hypothesis import given, strategies as st

from smallgroup_lab.groups import (CyclicGenerator, CyclicGroup, GeneratorExhausted, cyclic_tower,
                                   enumerate_fibers, parse_generator, product_tower)
from smallgroup_lab.indexsets import IndexSet
from smallgroup_lab.levelsets import (RELATIONS, _cyclic_step, apriori_bound, build_all_level_sets,
                                      build_level_sets, op_F, op_G, thin_tower, verify_level_closure)


def mask(n, elems):
    out = np.zeros(n, dtype=bool)
    out[list(elems)] = True
    return out


def elems(m):
    return set(np.flatnonzero(m).tolist())


def test_op_F_examples():
    assert elems(op_F(CyclicGroup(2), mask(2, {0}))) == {0}
    assert elems(op_F(CyclicGroup(4), mask(4, {0, 1}))) == {0, 1, 2, 3}
    assert elems(op_F(CyclicGroup(4), mask(4, {0, 2}))) == {0, 2}


def test_op_G_examples(z4):
    _, enum = z4
    assert elems(op_G(enum, 2, mask(4, {0}))) == {0, 1}
    assert elems(op_G(enum, 2, mask(4, {3}))) == {2, 3}
    assert elems(op_G(enum, 2, mask(4, set()))) == set()


def test_level_sets_z2():
    tower = cyclic_tower([1, 2])
    ls = build_level_sets(tower, enumerate_fibers(tower), 1, 1)
    assert [elems(a) for a in ls.a] == [{0}, {0}]
    assert [set(b) for b in ls.b] == [{1}, {1}]


def test_level_sets_z4(z4):
    tower, enum = z4
    ls = build_level_sets(tower, enum, 2, 3)
    assert [elems(a) for a in ls.a] == [{0, 1}, {0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}]
    assert [set(ls.b_at(j)) for j in range(3)] == [{1}, {1, 2}, {1, 2}]


def test_beyond_level_is_everything(z4):
    tower, enum = z4
    for i in range(tower.depth + 1):
        ls = build_level_sets(tower, enum, i, i)
        assert set(ls.b_at(i + 1)) == set(range(1, tower.m[i] + 1))


def test_z4_class_product_passes(z4):
    tower, enum = z4
    ls = build_level_sets(tower, enum, 2, 2)
    c1 = mask(4, enum.cls(2, 1))
    assert elems(tower.groups[2].product_set(c1, c1)) == {0, 1, 2}
    checks = verify_level_closure(tower, enum, ls)
    assert next(c for c in checks if c.relation == "B-product" and c.j == 0).holds


def test_trivial_level_vacuous(z4):
    tower, enum = z4
    checks = verify_level_closure(tower, enum, build_level_sets(tower, enum, 0, 2))
    assert len(checks) == 2 * len(RELATIONS) and all(c.holds for c in checks)


def _brute_level_sets(tower, enum, i, j_max):
    """Independent iteration with Python sets and explicit class lookups."""
    g = tower.groups[i]
    n = g.order
    cls_of = {x: int(enum.psi[i][x]) for x in range(n)}
    members = {}
    for x in range(n):
        members.setdefault(cls_of[x], set()).add(x)

    def cover(h):
        return set().union(*(members[cls_of[x]] for x in h)) if h else set()

    a = [cover({g.identity})]
    for j in range(j_max):
        if j < i:
            h = a[-1] | {int(g.inv(x)) for x in a[-1]}
            a.append(cover({int(g.mul(x, y)) for x in h for y in h}))
        else:
            a.append(set(range(n)))
    return a, [{cls_of[x] for x in aj} for aj in a]


TOWERS = [
    cyclic_tower([1, 2, 4, 8, 16]),
    cyclic_tower([1, 3, 27, 81]),
    cyclic_tower([1, 6, 36, 216]),
    product_tower(CyclicGroup(2), [0, 1, 2, 4]),
    product_tower(CyclicGroup(3), [0, 1, 3]),
]


@pytest.mark.parametrize("tower", TOWERS, ids=lambda t: t.label)
def test_element_route_matches_brute_force(tower):
    enum = enumerate_fibers(tower)
    for i in range(tower.depth + 1):
        ls = build_level_sets(tower, enum, i, i + 1)
        a, b = _brute_level_sets(tower, enum, i, i + 1)
        assert [elems(x) for x in ls.a] == a
        assert [set(ls.b_at(j)) for j in range(i + 2)] == b


def _cyclic_orders():
    out = []
    for p in (2, 3, 5):
        for exps in ([0, 1, 2], [0, 1, 3], [0, 2, 4], [0, 1, 2, 4], [0, 1, 3, 5], [0, 2, 3, 5]):
            if p ** exps[-1] <= 1 << 13:
                out.append([p ** e for e in exps])
    return out


@pytest.mark.parametrize("orders", _cyclic_orders(), ids=str)
def test_class_route_matches_element_route(orders):
    tower = cyclic_tower(orders)
    enum = enumerate_fibers(tower)
    for i in range(tower.depth + 1):
        by_elements = build_level_sets(tower, enum, i, i, "elements")
        by_classes = build_level_sets(tower, None, i, i, "classes")
        assert by_classes.b == by_elements.b


@given(st.sampled_from([2, 3, 5, 6]), st.lists(st.integers(1, 3), min_size=1, max_size=3))
def test_closure_relations_hold_on_cyclic_towers(p, steps):
    exps = [0]
    for s in steps:
        exps.append(exps[-1] + s)
    if p ** exps[-1] > 1 << 12:
        return
    tower = cyclic_tower([p ** e for e in exps])
    enum = enumerate_fibers(tower)
    for ls in build_all_level_sets(tower, enum, tower.depth + 1):
        assert all(c.holds for c in verify_level_closure(tower, enum, ls))


@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_cyclic_step_matches_elements(big_m, m, data):
    # arbitrary class sets, not only the iterates: class k of Z/(M m) is [(k-1)M, kM)
    ks = data.draw(st.sets(st.integers(1, m), min_size=1))
    n = big_m * m
    a = {x for k in ks for x in range((k - 1) * big_m, k * big_m)}
    h = a | {-x % n for x in a}
    f = {(x + y) % n for x in h for y in h}
    expected = {x // big_m + 1 for x in f}
    assert set(_cyclic_step(IndexSet.from_indices(m, ks), big_m, m)) == expected


def test_apriori_bound_examples():
    assert apriori_bound(2, 2) == 1024
    assert apriori_bound(2, 1) == 16
    assert apriori_bound(1, 1) == 2
    with pytest.raises(ValueError):
        apriori_bound(0, 1)


def test_thin_apriori_cyclic2():
    tower, rep = thin_tower(CyclicGenerator(2), 2, "apriori")
    assert rep.indices == (0, 1, 13)
    assert rep.holds
    assert [lv.bound for lv in rep.levels] == [2, 1024]


def test_thin_one_level():
    for mode in ("apriori", "exact"):
        _, rep = thin_tower(CyclicGenerator(2), 1, mode)
        assert rep.indices == (0, 1)


# Frozen from the exact runs; each index is checked for minimality below.
EXACT = {
    ("cyclic:2", 4): (0, 1, 6, 14, 24),
    ("cyclic:3", 3): (0, 1, 5, 10),
    ("cyclic:6", 3): (0, 1, 3, 6),
    ("product:2", 3): (0, 1, 3, 7),
}
APRIORI_CYCLIC2 = (0, 1, 13, 219, 7027)


@pytest.mark.parametrize("key", sorted(EXACT), ids=str)
def test_thin_exact_frozen(key):
    gen = parse_generator(key[0])
    tower, rep = thin_tower(gen, key[1], "exact")
    assert rep.indices == EXACT[key]
    assert rep.holds
    for lv in rep.levels:
        assert lv.b_size * lv.level ** 2 <= lv.m


def test_thin_exact_indices_are_minimal():
    # independent recomputation with the element route on the materialised towers
    for name, depth in [("cyclic:2", 3), ("cyclic:3", 2), ("product:2", 3), ("cyclic:6", 2)]:
        gen = parse_generator(name)
        idx = EXACT[(name, max(d for (n, d) in EXACT if n == name))][:depth + 1]
        for i in range(1, depth + 1):
            for cand in range(idx[i - 1] + 1, idx[i] + 1):
                tower = gen.tower(list(idx[:i]) + [cand])
                enum = enumerate_fibers(tower)
                size = build_level_sets(tower, enum, i, i, "elements").b_size(i)
                ok = size * i * i <= tower.m[i]
                assert ok == (cand == idx[i]), (name, i, cand)


def test_thin_apriori_deep_cyclic2():
    _, rep = thin_tower(CyclicGenerator(2), 4, "apriori")
    assert rep.indices == APRIORI_CYCLIC2
    assert rep.holds


def test_exact_never_exceeds_apriori():
    for name, depth in [("cyclic:2", 3), ("cyclic:3", 2), ("cyclic:6", 2)]:
        gen = parse_generator(name)
        _, ex = thin_tower(gen, depth, "exact")
        _, ap = thin_tower(gen, depth, "apriori")
        assert all(a <= b for a, b in zip(ex.indices, ap.indices))


def test_thin_caps():
    with pytest.raises(GeneratorExhausted):
        thin_tower(parse_generator("product:2"), 3, "apriori", max_order=1 << 10)
    with pytest.raises(GeneratorExhausted):
        thin_tower(CyclicGenerator(2), 3, "apriori", max_index=100)
    with pytest.raises(ValueError):
        thin_tower(CyclicGenerator(2), 2, "greedy")
