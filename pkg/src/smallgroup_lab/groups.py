"""Finite groups as dense index sets, surjections between them, and towers.

Elements of a group of order ``n`` are the integers ``0..n-1``. Explicit
groups carry a multiplication table; cyclic groups and direct products
compute products arithmetically and only build a table on request, so
towers with large levels never allocate ``n * n`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import kernels

DEFAULT_MAX_ORDER = 1 << 20
TABLE_LIMIT = 4096
_PAIR_CHUNK = 1 << 22


class GroupError(ValueError):
    """Base class for rejected group or tower input."""


@dataclass(frozen=True)
class Violation:
    axiom: str
    indices: tuple

    def __str__(self):
        return f"{self.axiom} at {self.indices}"


class InvalidGroup(GroupError):
    """A table failed one or more group axioms.

    ``violations`` lists every axiom that failed, each with the offending
    element indices. The concrete subclass names the first one.
    """

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class NonClosure(InvalidGroup):
    pass


class NoIdentity(InvalidGroup):
    pass


class NoInverse(InvalidGroup):
    pass


class NonAssociative(InvalidGroup):
    pass


class NotHomomorphism(GroupError):
    def __init__(self, x, y):
        self.x, self.y = x, y
        super().__init__(f"map(x*y) != map(x)*map(y) for x={x}, y={y}")


class NotSurjective(GroupError):
    def __init__(self, missing):
        self.missing = missing
        super().__init__(f"target element {missing} has empty preimage")


class UnequalFibers(GroupError):
    def __init__(self, sizes):
        self.sizes = sizes
        super().__init__(f"fiber sizes differ: {sorted(set(sizes))}")


class TowerError(GroupError):
    pass


class TooLarge(GroupError):
    """An element-level array was requested for a group above the cap."""


_AXIOM_CLASS = {
    "NonClosure": NonClosure,
    "NoIdentity": NoIdentity,
    "NoInverse": NoInverse,
    "NonAssociative": NonAssociative,
}


class FiniteGroup:
    """Common interface; subclasses provide ``mul`` and ``inv`` on index arrays."""

    order: int
    identity: int
    label: str

    def mul(self, a, b):
        raise NotImplementedError

    def inv(self, a):
        raise NotImplementedError

    def elements(self, max_order: int = DEFAULT_MAX_ORDER) -> np.ndarray:
        if self.order > max_order:
            raise TooLarge(f"{self.label}: order {self.order} exceeds cap {max_order}")
        return np.arange(self.order, dtype=np.int64)

    @cached_property
    def op_table(self) -> np.ndarray:
        if self.order > TABLE_LIMIT:
            raise TooLarge(f"{self.label}: no multiplication table above order {TABLE_LIMIT}")
        x = np.arange(self.order, dtype=np.int64)
        return self.mul(x[:, None], x[None, :])

    @cached_property
    def inverse_table(self) -> np.ndarray:
        return self.inv(self.elements())

    def product_set(self, a_mask: np.ndarray, b_mask: np.ndarray) -> np.ndarray:
        """Mask of ``{ab : a in A, b in B}``."""
        a = np.flatnonzero(a_mask)
        b = np.flatnonzero(b_mask)
        out = np.zeros(self.order, dtype=bool)
        if len(a) == 0 or len(b) == 0:
            return out
        rows = max(1, _PAIR_CHUNK // len(b))
        for start in range(0, len(a), rows):
            out[self.mul(a[start:start + rows, None], b[None, :]).ravel()] = True
        return out

    def inverse_set(self, mask: np.ndarray) -> np.ndarray:
        out = np.zeros(self.order, dtype=bool)
        out[self.inv(np.flatnonzero(mask))] = True
        return out

    def __repr__(self):
        return f"<{type(self).__name__} {self.label} order={self.order}>"


class TableGroup(FiniteGroup):
    def __init__(self, table: np.ndarray, identity: int, inverse: np.ndarray, label: str = "G"):
        self.order = int(table.shape[0])
        self.identity = int(identity)
        self.label = label
        self.__dict__["op_table"] = table
        self.__dict__["inverse_table"] = inverse

    def mul(self, a, b):
        return self.op_table[a, b]

    def inv(self, a):
        return self.inverse_table[a]

    def product_set(self, a_mask, b_mask):
        return kernels.product_set_table(self.op_table, np.flatnonzero(a_mask), np.flatnonzero(b_mask))


class CyclicGroup(FiniteGroup):
    """Z/n under addition; element k is the residue k."""

    identity = 0

    def __init__(self, n: int):
        if n < 1:
            raise GroupError("cyclic group order must be positive")
        self.order = int(n)
        self.label = f"Z/{n}"

    def mul(self, a, b):
        return (np.asarray(a, dtype=np.int64) + b) % self.order

    def inv(self, a):
        return (-np.asarray(a, dtype=np.int64)) % self.order

    def product_set(self, a_mask, b_mask):
        return kernels.sumset_mod(a_mask, b_mask)


class ProductGroup(FiniteGroup):
    """Direct product ``base x factor``; element ``(g, f)`` has index ``g*|F| + f``."""

    def __init__(self, base: FiniteGroup, factor: FiniteGroup):
        self.base = base
        self.factor = factor
        self.order = base.order * factor.order
        self.identity = base.identity * factor.order + factor.identity
        self.label = f"({base.label} x {factor.label})" if base.order > 1 else factor.label

    def split(self, x):
        return np.divmod(np.asarray(x, dtype=np.int64), self.factor.order)

    def mul(self, a, b):
        ga, fa = self.split(a)
        gb, fb = self.split(b)
        return self.base.mul(ga, gb) * self.factor.order + self.factor.mul(fa, fb)

    def inv(self, a):
        g, f = self.split(a)
        return self.base.inv(g) * self.factor.order + self.factor.inv(f)


def trivial_group() -> TableGroup:
    return TableGroup(np.zeros((1, 1), dtype=np.int64), 0, np.zeros(1, dtype=np.int64), "1")


def validate_group(table, label: str = "G", level: str = "full") -> TableGroup:
    """Check the group axioms on a raw multiplication table.

    Every violated axiom is collected before raising; the exception class is
    that of the first violation (closure, identity, inverse, associativity).
    With ``level="trusted"`` associativity is not checked.
    """
    t = np.asarray(table)
    if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] == 0:
        raise GroupError("multiplication table must be a non-empty square array")
    n = t.shape[0]
    violations: list[Violation] = []

    bad = np.argwhere((t < 0) | (t >= n))
    if len(bad):
        violations.append(Violation("NonClosure", tuple(map(tuple, bad.tolist()))))
        raise NonClosure(violations)
    t = t.astype(np.int64)

    x = np.arange(n)
    ids = [e for e in range(n) if np.array_equal(t[e], x) and np.array_equal(t[:, e], x)]
    if not ids:
        violations.append(Violation("NoIdentity", ()))
        raise NoIdentity(violations)
    e = ids[0]

    inverse = np.full(n, -1, dtype=np.int64)
    missing = []
    for a in range(n):
        cand = np.flatnonzero((t[a] == e) & (t[:, a] == e))
        if len(cand):
            inverse[a] = cand[0]
        else:
            missing.append(a)
    if missing:
        violations.append(Violation("NoInverse", tuple(missing)))

    if level == "full":
        triple = kernels.associativity_violation(t)
        if triple is not None:
            violations.append(Violation("NonAssociative", tuple(int(v) for v in triple)))

    if violations:
        raise _AXIOM_CLASS[violations[0].axiom](violations)
    return TableGroup(t, e, inverse, label)


class SurjHom:
    """A surjective homomorphism, stored as an index map or computed by a rule.

    Generated towers pass ``rule`` (e.g. reduction mod n) so the map array is
    only materialised when element-level work asks for it.
    """

    def __init__(self, source: FiniteGroup, target: FiniteGroup, map=None,
                 rule: Callable[[np.ndarray], np.ndarray] | None = None):
        if map is None and rule is None:
            raise GroupError("SurjHom needs a map array or a rule")
        self.source = source
        self.target = target
        self._rule = rule
        if map is not None:
            self.__dict__["map"] = np.asarray(map, dtype=np.int64)

    @cached_property
    def map(self) -> np.ndarray:
        return self._rule(self.source.elements())

    def __call__(self, x):
        if "map" in self.__dict__ or self._rule is None:
            return self.map[x]
        return self._rule(np.asarray(x, dtype=np.int64))

    @cached_property
    def fibers(self) -> list[np.ndarray]:
        order = np.lexsort((np.arange(self.source.order), self.map))
        return np.split(order, self.target.order)


def validate_surjection(map, source: FiniteGroup, target: FiniteGroup) -> SurjHom:
    m = np.asarray(map, dtype=np.int64)
    if m.shape != (source.order,):
        raise GroupError(f"map length {m.shape} does not match source order {source.order}")
    if ((m < 0) | (m >= target.order)).any():
        raise GroupError("map values outside the target")
    counts = np.bincount(m, minlength=target.order)
    if (counts == 0).any():
        raise NotSurjective(int(np.flatnonzero(counts == 0)[0]))
    if len(set(counts.tolist())) != 1:
        raise UnequalFibers(counts.tolist())
    x = source.elements()
    rows = max(1, _PAIR_CHUNK // source.order)
    for start in range(0, source.order, rows):
        a = x[start:start + rows, None]
        lhs = m[source.mul(a, x[None, :])]
        rhs = target.mul(m[a], m[None, :])
        bad = np.argwhere(lhs != rhs)
        if len(bad):
            i, j = bad[0]
            raise NotHomomorphism(int(start + i), int(j))
    hom = SurjHom(source, target, m)
    hom.fibers  # noqa: B018 - cache now, the value is immutable afterwards
    return hom


@dataclass(frozen=True, eq=False)
class Tower:
    """Finite truncation ``G_0 <- G_1 <- ... <- G_N`` of an inverse system.

    ``bonds[i]`` maps ``G_{i+1}`` onto ``G_i``; ``m[i] = |G_i| / |G_{i-1}|``
    with ``m[0] = 1``. ``moduli`` is set when every level is cyclic and every
    bond is reduction modulo the smaller order.
    """

    groups: tuple
    bonds: tuple
    m: tuple
    moduli: tuple | None = None
    label: str = ""

    @property
    def depth(self) -> int:
        return len(self.groups) - 1

    @property
    def orders(self) -> tuple:
        return tuple(g.order for g in self.groups)

    def composite(self, i: int, k: int) -> np.ndarray:
        """Index map of ``phi_{i,k}: G_k -> G_i`` as an array."""
        if not 0 <= i <= k <= self.depth:
            raise TowerError(f"no bond from level {k} to level {i}")
        x = self.groups[k].elements()
        for level in range(k - 1, i - 1, -1):
            x = self.bonds[level](x)
        return x

    def project(self, i: int, k: int, x):
        for level in range(k - 1, i - 1, -1):
            x = self.bonds[level](x)
        return x

    def truncate(self, depth: int) -> "Tower":
        return Tower(self.groups[:depth + 1], self.bonds[:depth], self.m[:depth + 1],
                     None if self.moduli is None else self.moduli[:depth + 1], self.label)


def make_tower(groups: Sequence[FiniteGroup], bonds: Sequence[SurjHom], label: str = "",
               moduli=None) -> Tower:
    if not groups or groups[0].order != 1:
        raise TowerError("G_0 must be the trivial group")
    if len(bonds) != len(groups) - 1:
        raise TowerError("need exactly one bond per consecutive pair of levels")
    m = [1]
    for i, (lo, hi) in enumerate(zip(groups, groups[1:])):
        bond = bonds[i]
        if bond.source is not hi or bond.target is not lo:
            raise TowerError(f"bond {i} does not map G_{i + 1} onto G_{i}")
        q, r = divmod(hi.order, lo.order)
        if r or q <= 1:
            raise TowerError(f"|G_{i + 1}|/|G_{i}| must be an integer > 1, got {hi.order}/{lo.order}")
        m.append(q)
    return Tower(tuple(groups), tuple(bonds), tuple(m), None if moduli is None else tuple(moduli), label)


def _mod_rule(n: int):
    return lambda x: np.asarray(x, dtype=np.int64) % n if n < (1 << 62) else np.asarray(
        [int(v) % n for v in np.ravel(x)], dtype=object)


def cyclic_tower(orders: Sequence[int], label: str = "") -> Tower:
    """Tower ``Z/orders[0] <- Z/orders[1] <- ...`` with reduction maps.

    Levels above int64 range are allowed; they only support the class-index
    level-set calculus, not element arrays.
    """
    orders = [int(n) for n in orders]
    if orders[0] != 1:
        raise TowerError("cyclic towers start at the trivial group Z/1")
    groups = [trivial_group()] + [CyclicGroup(n) for n in orders[1:]]
    bonds = [SurjHom(hi, lo, rule=_mod_rule(lo.order)) for lo, hi in zip(groups, groups[1:])]
    return make_tower(groups, bonds, label or "cyclic" + ",".join(map(str, orders)), moduli=orders)


def product_tower(factor: FiniteGroup, counts: Sequence[int], label: str = "") -> Tower:
    """Tower of powers ``F^{counts[i]}`` with projection onto leading coordinates."""
    counts = [int(c) for c in counts]
    if counts[0] != 0 or any(b <= a for a, b in zip(counts, counts[1:])):
        raise TowerError("product tower exponents must start at 0 and strictly increase")
    groups: list[FiniteGroup] = [trivial_group()]
    g: FiniteGroup = groups[0]
    built = 0
    for c in counts[1:]:
        while built < c:
            g = ProductGroup(g, factor)
            built += 1
        groups.append(g)
    f = factor.order
    bonds = []
    for i in range(len(counts) - 1):
        drop = f ** (counts[i + 1] - counts[i])
        bonds.append(SurjHom(groups[i + 1], groups[i], rule=lambda x, d=drop: np.asarray(x, dtype=np.int64) // d))
    return make_tower(groups, bonds, label or f"{factor.label}^" + ",".join(map(str, counts)))


# -- generators ------------------------------------------------------------


class GeneratorExhausted(GroupError):
    pass


@dataclass(frozen=True)
class CyclicGenerator:
    """``H_n = Z/base^n`` with reduction maps."""

    base: int

    @property
    def name(self):
        return f"cyclic:{self.base}"

    def order(self, n: int) -> int:
        return self.base ** n

    def tower(self, indices: Sequence[int]) -> Tower:
        return cyclic_tower([self.base ** n for n in indices], f"{self.name}@" + ",".join(map(str, indices)))


@dataclass(frozen=True)
class ProductGenerator:
    """``H_n = F^n`` with projection onto the first coordinates."""

    factor: FiniteGroup
    name: str = "product"

    def order(self, n: int) -> int:
        return self.factor.order ** n

    def tower(self, indices: Sequence[int]) -> Tower:
        return product_tower(self.factor, indices, f"{self.name}@" + ",".join(map(str, indices)))


@dataclass(frozen=True)
class ExplicitGenerator:
    """A fixed finite tower used as a generator; runs out after its last level."""

    base_tower: Tower
    name: str = "explicit"

    def order(self, n: int) -> int:
        if n > self.base_tower.depth:
            raise GeneratorExhausted(f"explicit tower has only {self.base_tower.depth} levels")
        return self.base_tower.groups[n].order

    def tower(self, indices: Sequence[int]) -> Tower:
        t = self.base_tower
        groups = [t.groups[n] for n in indices]
        bonds = []
        for a, b in zip(indices, indices[1:]):
            bonds.append(SurjHom(t.groups[b], t.groups[a], map=t.composite(a, b)))
        return make_tower(groups, bonds, f"{t.label}@" + ",".join(map(str, indices)))


def parse_generator(text: str):
    """``cyclic:p`` or ``product:k`` (powers of Z/k)."""
    kind, _, arg = text.partition(":")
    if kind == "cyclic" and arg.isdigit() and int(arg) >= 2:
        return CyclicGenerator(int(arg))
    if kind == "product" and arg.isdigit() and int(arg) >= 2:
        return ProductGenerator(CyclicGroup(int(arg)), name=text)
    raise GroupError(f"unknown generator {text!r}; expected cyclic:<p> or product:<k>")


# -- fiber enumeration -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiberEnumeration:
    """Ordered fibers of each bond and the coordinate maps they induce.

    ``fibers[i][g, k-1]`` is the element ``g^{(k)}`` of ``G_i`` above
    ``g in G_{i-1}``; ``psi[i][x]`` is the 1-based class index of ``x``.
    Level 0 is the trivial group with ``psi[0] = [1]``.
    """

    tower: Tower
    fibers: tuple
    psi: tuple = field(repr=False)

    def cls(self, i: int, j: int) -> np.ndarray:
        """Elements of the partition class ``G_i^{(j)}`` (1-based ``j``)."""
        if i == 0:
            return np.array([0]) if j == 1 else np.array([], dtype=np.int64)
        return np.sort(self.fibers[i][:, j - 1])

    def lift(self, i: int, g_prev, k):
        return self.fibers[i][g_prev, np.asarray(k) - 1]


def enumerate_fibers(tower: Tower, max_order: int = DEFAULT_MAX_ORDER) -> FiberEnumeration:
    """Fibers sorted by element index, with the identity moved to the front.

    Deterministic for a fixed tower; requires every level to fit under
    ``max_order``.
    """
    fibers = [np.zeros((1, 1), dtype=np.int64)]
    psi = [np.ones(1, dtype=np.int64)]
    for i in range(1, tower.depth + 1):
        g, prev = tower.groups[i], tower.groups[i - 1]
        x = g.elements(max_order)
        image = tower.bonds[i - 1](x)
        order = np.lexsort((x, image))
        table = order.reshape(prev.order, tower.m[i]).copy()
        row = table[prev.identity]
        pos = int(np.flatnonzero(row == g.identity)[0])
        if pos:
            table[prev.identity] = np.concatenate(([g.identity], np.delete(row, pos)))
        p = np.empty(g.order, dtype=np.int64)
        p[table] = np.arange(1, tower.m[i] + 1)[None, :]
        table.setflags(write=False)
        p.setflags(write=False)
        fibers.append(table)
        psi.append(p)
    return FiberEnumeration(tower, tuple(fibers), tuple(psi))


# -- JSON input ------------------------------------------------------------


def tower_from_json(doc: dict, validation: str = "full", max_order: int = DEFAULT_MAX_ORDER) -> Tower:
    """Build a tower from an explicit or generator document.

    Explicit: ``{"levels": [{"order": n, "table": [[...]]}, ...], "bonds": [[...], ...]}``
    where ``bonds[i]`` maps level ``i+1`` onto level ``i``.
    Generators: ``{"generator": "cyclic", "base": p, "exponents": [0, ...]}`` or
    ``{"generator": "product", "factor": <level or "cyclic:k">, "exponents": [0, ...]}``.
    """
    if "generator" in doc:
        kind = doc["generator"]
        exps = doc.get("exponents")
        if not isinstance(exps, list) or not exps or exps[0] != 0:
            raise TowerError("generator towers need exponents starting at 0")
        if kind == "cyclic":
            base = int(doc.get("base", 0))
            if base < 2:
                raise TowerError("cyclic generator needs base >= 2")
            tower = cyclic_tower([base ** e for e in exps])
        elif kind == "product":
            factor = doc.get("factor", "cyclic:2")
            if isinstance(factor, str):
                f = parse_generator(factor)
                if not isinstance(f, CyclicGenerator):
                    raise TowerError("product factor must be cyclic:<k> or an explicit level")
                fg: FiniteGroup = CyclicGroup(f.base)
            else:
                fg = validate_group(factor["table"], "F", validation)
            tower = product_tower(fg, exps)
        else:
            raise TowerError(f"unknown generator {kind!r}")
        if tower.groups[-1].order > max_order:
            raise TooLarge(f"top level order {tower.groups[-1].order} exceeds cap {max_order}")
        return tower
    levels = doc.get("levels")
    if not isinstance(levels, list) or not levels:
        raise TowerError("explicit towers need a non-empty 'levels' list")
    groups = []
    for i, lvl in enumerate(levels):
        g = validate_group(lvl["table"], f"G_{i}", validation)
        if "order" in lvl and lvl["order"] != g.order:
            raise TowerError(f"level {i}: declared order {lvl['order']} != table size {g.order}")
        groups.append(g)
    raw = doc.get("bonds", [])
    if len(raw) != len(groups) - 1:
        raise TowerError("need one bond per consecutive pair of levels")
    bonds = [validate_surjection(b, groups[i + 1], groups[i]) for i, b in enumerate(raw)]
    return make_tower(groups, bonds, doc.get("label", "explicit"))
