"""Dyadic cube families on the torus ``T^d = R^d / Z^d``, in exact integer arithmetic.

Charts are boxes ``Q_t = c_t + [0, L_t]`` (per axis, read mod 1) with the
affine coordinate map ``phi_t(x) = ((x - c_t) mod 1) / L_t`` onto ``[0,1]^d``.
Finite point sets are integer arrays over one common denominator. Unions of
dyadic cubes are sorted arrays of linear cube indices at a fixed resolution
``k`` (edge ``2^-k``).

For every construction level ``i >= 1`` the builder seeds ``A_0`` from the
``2^-m_{i-1}`` grid through ``x_0 = phi_0(0)``, iterates
``A_{j+1} = U_t phi_t[F(B_j)]`` with ``B_j = U_t phi_t^{-1}(A_j)`` and
``F(H) = (H u -H) + (H u -H)``, covers ``A_i`` finely enough for the measure
bound, then walks back to ``j = 0`` choosing for each ``j`` the coarsest
resolution at which the product and inverse inclusions into the next family
hold. Those inclusions are decided exactly: Minkowski sums of boxes, cut by
chart domains, compared cell by cell against the target family.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import gcd, lcm
from typing import Sequence

import numpy as np

DEFAULT_MAX_RESOLUTION = 16
_DENSE_CELLS = 1 << 26
_PAIR_CHUNK = 1 << 21


class AtlasInvalid(ValueError):
    pass


class ResolutionCapExceeded(RuntimeError):
    def __init__(self, level: int, stage: int, inclusion: str, resolution: int):
        self.level, self.stage, self.inclusion, self.resolution = level, stage, inclusion, resolution
        super().__init__(f"level {level}, stage {stage}: {inclusion} needs resolution above {resolution}")


class NonIncreasingResolutions(ValueError):
    pass


# -- atlas -----------------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    corner: tuple
    length: tuple

    def volume(self) -> Fraction:
        v = Fraction(1)
        for L in self.length:
            v *= L
        return v


@dataclass(frozen=True)
class ChartAtlas:
    dim: int
    charts: tuple
    scale: int = field(init=False)

    def __post_init__(self):
        charts = tuple(
            Chart(tuple(Fraction(c) % 1 for c in ch.corner), tuple(Fraction(x) for x in ch.length))
            for ch in self.charts)
        object.__setattr__(self, "charts", charts)
        dens = [x.denominator for ch in charts for x in ch.corner + ch.length]
        object.__setattr__(self, "scale", lcm(*dens) if dens else 1)

    def used(self, i: int) -> int:
        """Number of charts taking part at construction level ``i``."""
        return min(i, len(self.charts) - 1) + 1

    def x0(self) -> tuple:
        ch = self.charts[0]
        return tuple(((-c) % 1) / L for c, L in zip(ch.corner, ch.length))

    def to_json(self) -> dict:
        return {"dim": self.dim, "charts": [
            {"corner": [str(c) for c in ch.corner], "length": [str(L) for L in ch.length]}
            for ch in self.charts]}


def _circle_critical_points(values) -> list:
    pts = sorted({Fraction(v) % 1 for v in values})
    mids = [(a + b) / 2 for a, b in zip(pts, pts[1:] + [pts[0] + 1])]
    return sorted(set(pts) | {m % 1 for m in mids})


def validate_atlas(atlas: ChartAtlas) -> ChartAtlas:
    """Check box shapes, the identity condition and that chart interiors cover ``T^d``.

    Open boxes are unions of cells of the arrangement cut out by all chart
    edges, so testing one point per cell (edges and midpoints) is exact.
    """
    if atlas.dim < 1 or not atlas.charts:
        raise AtlasInvalid("an atlas needs a positive dimension and at least one chart")
    for t, ch in enumerate(atlas.charts):
        if len(ch.corner) != atlas.dim or len(ch.length) != atlas.dim:
            raise AtlasInvalid(f"chart {t} does not have dimension {atlas.dim}")
        if not all(0 < L < 1 for L in ch.length):
            raise AtlasInvalid(f"chart {t}: edge lengths must lie strictly between 0 and 1")
    if not all(0 < v < 1 for v in atlas.x0()):
        raise AtlasInvalid("the identity is not interior to chart 0")
    axes = []
    for a in range(atlas.dim):
        edges = [ch.corner[a] for ch in atlas.charts] + [ch.corner[a] + ch.length[a] for ch in atlas.charts]
        axes.append(_circle_critical_points(edges))
    for pt in product(*axes):
        if not any(all(0 < (x - c) % 1 < L for x, c, L in zip(pt, ch.corner, ch.length))
                   for ch in atlas.charts):
            raise AtlasInvalid(f"chart interiors miss the point {tuple(str(x) for x in pt)}")
    return atlas


def two_arc_atlas(dim: int = 1) -> ChartAtlas:
    """Two overlapping arcs of length 2/3 per axis; products of them for ``dim > 1``.

    Arc 0 is ``[2/3, 4/3]`` (so ``x_0 = 1/2``), arc 1 is ``[1/6, 5/6]``.
    Chart 0 is arc 0 on every axis; the others follow in binary order.
    With length 2/3 the chart maps scale by 3/2, which keeps the iterated
    point sets on lattices whose points stay well away from fine dyadic
    grid lines.
    """
    arcs = [(Fraction(2, 3), Fraction(2, 3)), (Fraction(1, 6), Fraction(2, 3))]
    charts = []
    for pick in product(range(2), repeat=dim):
        pick = pick[::-1]
        charts.append(Chart(tuple(arcs[p][0] for p in pick), tuple(arcs[p][1] for p in pick)))
    return validate_atlas(ChartAtlas(dim, tuple(charts)))


BUILTIN_ATLASES = {"two-arcs": two_arc_atlas}


def atlas_from_json(doc: dict) -> ChartAtlas:
    try:
        dim = int(doc["dim"])
        charts = tuple(Chart(tuple(Fraction(c) for c in ch["corner"]),
                             tuple(Fraction(x) for x in ch["length"])) for ch in doc["charts"])
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise AtlasInvalid(f"malformed atlas document: {exc}") from exc
    return validate_atlas(ChartAtlas(dim, charts))


def load_atlas(spec: str, dim: int = 1) -> ChartAtlas:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_ATLASES:
            raise AtlasInvalid(f"unknown builtin atlas {name!r}")
        return BUILTIN_ATLASES[name](dim)
    with open(spec) as fh:
        return atlas_from_json(json.load(fh))


# -- exact point sets ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointSet:
    """Rows of ``num / den``; ``num`` has shape ``(n, d)``, rows unique and sorted."""

    num: np.ndarray
    den: int

    @classmethod
    def make(cls, num, den: int) -> "PointSet":
        num = np.asarray(num, dtype=np.int64).reshape(-1, np.shape(num)[-1] if np.ndim(num) > 1 else 1)
        if len(num):
            num = np.unique(num, axis=0)
        g = int(np.gcd.reduce(num.ravel())) if num.size else 0
        g = gcd(g, den)
        if g > 1:
            num, den = num // g, den // g
        if den >= 1 << 40:
            raise OverflowError(f"denominator {den} too large for exact int64 arithmetic")
        num.setflags(write=False)
        return cls(num, den)

    def __len__(self):
        return len(self.num)

    def rescaled(self, den: int) -> np.ndarray:
        if den % self.den:
            raise ValueError("target denominator is not a multiple")
        return self.num * (den // self.den)

    def fractions(self) -> list:
        return [tuple(Fraction(int(v), self.den) for v in row) for row in self.num]

    def contains(self, point: Sequence[Fraction]) -> bool:
        row = [Fraction(p) * self.den for p in point]
        if any(v.denominator != 1 for v in row):
            return False
        return bool((self.num == np.array([int(v) for v in row])).all(axis=1).any())

    def issubset(self, other: "PointSet") -> bool:
        den = lcm(self.den, other.den)
        a, b = self.rescaled(den), other.rescaled(den)
        return _rows_in(a, b).all()


def _rows_in(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not len(a):
        return np.ones(0, dtype=bool)
    if not len(b):
        return np.zeros(len(a), dtype=bool)
    both = np.concatenate([b, a])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.ravel()
    return np.isin(inv[len(b):], inv[:len(b)])


def union_points(sets: Sequence[PointSet], dim: int) -> PointSet:
    sets = [s for s in sets if len(s)]
    if not sets:
        return PointSet(np.zeros((0, dim), dtype=np.int64), 1)
    den = lcm(*(s.den for s in sets))
    return PointSet.make(np.concatenate([s.rescaled(den) for s in sets]), den)


def _chart_ints(atlas: ChartAtlas, t: int, den: int):
    """Corner and length of chart ``t`` as integer vectors over ``den``."""
    ch = atlas.charts[t]
    c = np.array([int(x * den) for x in ch.corner], dtype=np.int64)
    L = np.array([int(x * den) for x in ch.length], dtype=np.int64)
    return c, L


def to_group(atlas: ChartAtlas, t: int, a: PointSet) -> PointSet:
    """``phi_t^{-1}`` of chart points, as points of ``T^d`` in ``[0,1)^d``."""
    den = a.den * atlas.scale
    c, L = _chart_ints(atlas, t, atlas.scale)
    return PointSet.make((c * a.den + L * a.num) % den, den)


def to_chart(atlas: ChartAtlas, t: int, x: PointSet) -> PointSet:
    """``phi_t[X]``: the points of ``X`` inside chart ``t``, in chart coordinates."""
    den = x.den * atlas.scale
    c, L = _chart_ints(atlas, t, den)
    y = (x.num * atlas.scale - c) % den
    inside = (y <= L).all(axis=1)
    y = y[inside]
    lens = [int(v) for v in L]
    common = lcm(*lens)
    return PointSet.make(y * np.array([common // v for v in lens], dtype=np.int64), common)


def symmetric(x: PointSet) -> PointSet:
    return PointSet.make(np.concatenate([x.num, (-x.num) % x.den]), x.den)


def sumset(x: PointSet, y: PointSet) -> PointSet:
    """``X + Y`` on the torus."""
    den = lcm(x.den, y.den)
    a, b = x.rescaled(den), y.rescaled(den)
    if a.shape[1] == 1 and den <= 1 << 24 and len(a) * len(b) > 4 * den:
        return _sumset_fft(a[:, 0], b[:, 0], den)
    parts = []
    step = max(1, _PAIR_CHUNK // max(len(b), 1))
    for k in range(0, len(a), step):
        s = (a[k:k + step, None, :] + b[None, :, :]) % den
        parts.append(np.unique(s.reshape(-1, a.shape[1]), axis=0))
    return PointSet.make(np.concatenate(parts) if parts else np.zeros((0, a.shape[1]), np.int64), den)


def _sumset_fft(a, b, den):
    fa = np.zeros(den)
    fb = np.zeros(den)
    fa[a] = 1
    fb[b] = 1
    conv = np.fft.irfft(np.fft.rfft(fa) * np.fft.rfft(fb), n=den)
    return PointSet.make(np.flatnonzero(conv > 0.5)[:, None], den)


def op_F(x: PointSet) -> PointSet:
    s = symmetric(x)
    return sumset(s, s)


# -- dyadic cubes ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CubeSet:
    """Cubes of the ``2^-res`` subdivision of ``[0,1]^d``, as sorted linear indices."""

    res: int
    dim: int
    keys: np.ndarray

    @classmethod
    def make(cls, res: int, dim: int, idx: np.ndarray) -> "CubeSet":
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, dim)
        keys = np.unique(_linear(idx, res))
        keys.setflags(write=False)
        return cls(res, dim, keys)

    @classmethod
    def full(cls, res: int, dim: int) -> "CubeSet":
        return cls(res, dim, np.arange(1 << (res * dim), dtype=np.int64))

    def __len__(self):
        return len(self.keys)

    def indices(self) -> np.ndarray:
        return _unlinear(self.keys, self.res, self.dim)

    def volume(self) -> Fraction:
        return Fraction(len(self), 1 << (self.res * self.dim))

    def contains_keys(self, keys: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, max(len(self.keys) - 1, 0))
        return (self.keys[pos] == keys) if len(self.keys) else np.zeros(len(keys), dtype=bool)

    def contains_cube(self, idx: Sequence[int]) -> bool:
        """Is the cube with index vector ``idx`` (at this resolution) in the set?"""
        return bool(self.contains_keys(_linear(np.asarray(idx, dtype=np.int64)[None, :], self.res))[0])

    def refine(self, res: int) -> "CubeSet":
        """Same union, subdivided to a finer resolution."""
        if res < self.res:
            raise ValueError("can only refine to a finer resolution")
        step = res - self.res
        idx = self.indices()
        offs = np.array(list(product(range(1 << step), repeat=self.dim)), dtype=np.int64)
        fine = (idx[:, None, :] << step) + offs[None, :, :]
        return CubeSet.make(res, self.dim, fine.reshape(-1, self.dim))

    def coarsen(self, res: int) -> "CubeSet":
        """Cubes of resolution ``res`` that contain some cube of this set."""
        return CubeSet.make(res, self.dim, self.indices() >> (self.res - res))

    def issubset(self, other: "CubeSet") -> bool:
        if self.res < other.res:
            return self.refine(other.res).issubset(other)
        parents = _linear(self.indices() >> (self.res - other.res), other.res)
        return bool(other.contains_keys(parents).all())

    def contains_point(self, point: Sequence[Fraction]) -> bool:
        opts = []
        for v in point:
            s = Fraction(v) * (1 << self.res)
            q = s.numerator // s.denominator
            cand = {q, q - 1} if s.denominator == 1 else {q}
            opts.append([c for c in cand if 0 <= c < (1 << self.res)])
        keys = np.array([_linear(np.array([o]), self.res)[0] for o in product(*opts)], dtype=np.int64)
        return bool(len(keys) and self.contains_keys(keys).any())


def _linear(idx: np.ndarray, res: int) -> np.ndarray:
    key = np.zeros(len(idx), dtype=np.int64)
    for a in range(idx.shape[1]):
        key = (key << res) | idx[:, a]
    return key


def _unlinear(keys: np.ndarray, res: int, dim: int) -> np.ndarray:
    out = np.empty((len(keys), dim), dtype=np.int64)
    mask = (1 << res) - 1
    k = keys.copy()
    for a in range(dim - 1, -1, -1):
        out[:, a] = k & mask
        k >>= res
    return out


def cover(points: PointSet, res: int, dim: int) -> CubeSet:
    """All closed cubes of the ``2^-res`` grid meeting the (chart-coordinate) points."""
    top = (1 << res) - 1
    scaled = points.num << res
    q, r = np.divmod(scaled, points.den)
    idx, rem = q, r
    for a in range(dim):
        on_line = rem[:, a] == 0
        if on_line.any():
            extra = idx[on_line].copy()
            extra[:, a] -= 1
            idx = np.concatenate([idx, extra])
            rem = np.concatenate([rem, rem[on_line]])
    idx = idx[((idx >= 0) & (idx <= top)).all(axis=1)]
    return CubeSet.make(res, dim, idx)


def chart_measure(atlas: ChartAtlas, t: int, cubes: CubeSet) -> Fraction:
    """Haar measure of ``phi_t^{-1}`` of the union of cubes."""
    return cubes.volume() * atlas.charts[t].volume()


# -- exact inclusion of Minkowski images -----------------------------------


class _Target:
    """Fast "is every cell of this box in the family" queries."""

    def __init__(self, cubes: CubeSet):
        self.cubes = cubes
        self.res, self.dim = cubes.res, cubes.dim
        n = 1 << self.res
        self.dense = n ** self.dim <= _DENSE_CELLS
        if self.dense:
            grid = np.zeros((n,) * self.dim, dtype=np.int32)
            if len(cubes):
                grid[tuple(cubes.indices().T)] = 1
            sat = grid
            for a in range(self.dim):
                sat = sat.cumsum(axis=a)
            self.sat = np.pad(sat, [(1, 0)] * self.dim)

    def count(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Number of family cells with ``lo <= idx < hi`` (per axis), rowwise."""
        if self.dense:
            total = np.zeros(len(lo), dtype=np.int64)
            for corner in product((0, 1), repeat=self.dim):
                sel = tuple(np.where(np.array(corner)[None, :] == 1, hi, lo).T)
                sign = (-1) ** (self.dim - sum(corner))
                total += sign * self.sat[sel]
            return total
        out = np.empty(len(lo), dtype=np.int64)
        for k in range(len(lo)):
            rng = [np.arange(l, h) for l, h in zip(lo[k], hi[k])]
            cells = np.array(list(product(*rng)), dtype=np.int64).reshape(-1, self.dim)
            out[k] = int(self.cubes.contains_keys(_linear(cells, self.res)).sum()) if len(cells) else 0
        return out

    def has_any(self, cells: list) -> bool:
        cells = [c for c in cells if all(0 <= v < (1 << self.res) for v in c)]
        if not cells:
            return False
        return bool(self.cubes.contains_keys(_linear(np.array(cells, dtype=np.int64), self.res)).any())


@dataclass(frozen=True)
class InclusionFailure:
    kind: str
    charts: tuple
    box: tuple

    def describe(self) -> dict:
        return {"kind": self.kind, "charts": list(self.charts),
                "box": [[str(lo), str(hi)] for lo, hi in self.box]}


def _group_boxes(atlas: ChartAtlas, t: int, cubes: CubeSet, den: int):
    """Boxes ``phi_t^{-1}(C)`` as (lower, width) integer rows over ``den = scale * 2^res``.

    Runs of consecutive cubes along the last axis are merged.
    """
    idx = cubes.indices()
    if not len(idx):
        z = np.zeros((0, cubes.dim), np.int64)
        return z, z
    head = idx[:, :-1]
    last = idx[:, -1]
    brk = np.ones(len(idx), dtype=bool)
    brk[1:] = (last[1:] != last[:-1] + 1) | (head[1:] != head[:-1]).any(axis=1)
    starts = np.flatnonzero(brk)
    lens = np.diff(np.append(starts, len(idx)))
    lo_idx = idx[starts]
    ext = np.ones_like(lo_idx)
    ext[:, -1] = lens
    c, L = _chart_ints(atlas, t, atlas.scale)
    lower = (c * (1 << cubes.res) + L * lo_idx) % den
    width = L * ext
    return lower, width


def _unique_boxes(lower, width):
    if not len(lower):
        return lower, width
    both = np.unique(np.concatenate([lower, width], axis=1), axis=0)
    d = lower.shape[1]
    return both[:, :d], both[:, d:]


def _check_boxes(atlas: ChartAtlas, t: int, lower, width, den: int, target: _Target):
    """Index of the first box whose part inside chart ``t`` is not covered, or ``None``."""
    d = lower.shape[1]
    c, L = _chart_ints(atlas, t, den)
    y = (lower - c) % den
    full = width >= den
    # per axis: piece A = [y, min(y+w, L)] if y <= L; piece B = [0, min(y+w-den, L)] if wrap
    pieces = []
    for a in range(d):
        ya, wa, La = y[:, a], width[:, a], L[a]
        a_ok = (ya <= La) & ~full[:, a]
        a_lo, a_hi = ya, np.minimum(ya + wa, La)
        b_ok = ((ya + wa) >= den) & ~full[:, a]
        b_lo, b_hi = np.zeros_like(ya), np.minimum(ya + wa - den, La)
        f_lo, f_hi = np.zeros_like(ya), np.full_like(ya, La)
        pieces.append([(a_ok, a_lo, a_hi), (b_ok, b_lo, b_hi), (full[:, a], f_lo, f_hi)])
    n = 1 << target.res
    for combo in product(range(3), repeat=d):
        ok = np.ones(len(lower), dtype=bool)
        for a, p in enumerate(combo):
            ok &= pieces[a][p][0]
        if not ok.any():
            continue
        rows = np.flatnonzero(ok)
        lo_c = np.empty((len(rows), d), np.int64)
        hi_c = np.empty((len(rows), d), np.int64)
        degenerate = np.zeros((len(rows), d), dtype=bool)
        exact_lo = np.zeros((len(rows), d), dtype=bool)
        for a, p in enumerate(combo):
            _, plo, phi = pieces[a][p]
            u, v = plo[rows], phi[rows]
            La = int(L[a])
            # chart coordinate u / La; cells with interior meeting (u, v): floor(u n / La) .. ceil(v n / La) - 1
            lo_c[:, a] = (u * n) // La
            hi_c[:, a] = -((-v * n) // La)
            degenerate[:, a] = u == v
            exact_lo[:, a] = (u * n) % La == 0
        plain = ~degenerate.any(axis=1)
        if plain.any():
            lo_p, hi_p = lo_c[plain], hi_c[plain]
            need = np.prod(hi_p - lo_p, axis=1)
            bad = np.flatnonzero(target.count(lo_p, hi_p) != need)
            if len(bad):
                return rows[np.flatnonzero(plain)[bad[0]]], combo
        for k in np.flatnonzero(~plain):
            ranges, deg_opts = [], []
            for a in range(d):
                if degenerate[k, a]:
                    q = int(lo_c[k, a])
                    opts = [q - 1, q] if exact_lo[k, a] else [q]
                    ranges.append(None)
                    deg_opts.append((a, [o for o in opts if 0 <= o < n]))
                else:
                    ranges.append(range(int(lo_c[k, a]), int(hi_c[k, a])))
            free = [r if r is not None else [None] for r in ranges]
            for base in product(*free):
                choices = product(*(opts for _, opts in deg_opts))
                cells = []
                for ch in choices:
                    cell = list(base)
                    for (a, _), v in zip(deg_opts, ch):
                        cell[a] = v
                    cells.append(tuple(cell))
                if not target.has_any(cells):
                    return rows[k], combo
    return None


def _box_fractions(lower, width, den):
    return tuple((Fraction(int(l), den), Fraction(int(l + w), den)) for l, w in zip(lower, width))


def check_inclusions(atlas: ChartAtlas, charts: int, cubes: CubeSet, target: CubeSet,
                     kinds=("product", "inverse")) -> InclusionFailure | None:
    """First violated inclusion of ``phi_t[X_r X_s]`` or ``phi_t[X_r^{-1}]`` in ``target``.

    ``X_r = phi_r^{-1}(U cubes)``; all chart triples below ``charts`` are
    checked.
    """
    den = atlas.scale << cubes.res
    tgt = _Target(target)
    boxes = [_group_boxes(atlas, r, cubes, den) for r in range(charts)]
    if "inverse" in kinds:
        for r in range(charts):
            lower, width = boxes[r]
            inv_lower = (-(lower + width)) % den
            for t in range(charts):
                hit = _check_boxes(atlas, t, inv_lower, width, den, tgt)
                if hit is not None:
                    k, _ = hit
                    return InclusionFailure("inverse", (r, t), _box_fractions(inv_lower[k], width[k], den))
    if "product" in kinds:
        for r in range(charts):
            for s in range(r, charts):
                lr, wr = boxes[r]
                ls, ws = boxes[s]
                step = max(1, _PAIR_CHUNK // max(len(ls), 1))
                for k0 in range(0, len(lr), step):
                    lo = ((lr[k0:k0 + step, None, :] + ls[None, :, :]) % den).reshape(-1, cubes.dim)
                    wd = (wr[k0:k0 + step, None, :] + ws[None, :, :]).reshape(-1, cubes.dim)
                    lo, wd = _unique_boxes(lo, wd)
                    for t in range(charts):
                        hit = _check_boxes(atlas, t, lo, wd, den, tgt)
                        if hit is not None:
                            k, _ = hit
                            return InclusionFailure("product", (r, s, t), _box_fractions(lo[k], wd[k], den))
    return None


# -- construction ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevelFamily:
    """Everything built for one construction level ``i``."""

    level: int
    m: int
    charts: int
    A: tuple
    B: tuple
    E: tuple
    l: tuple
    k: tuple
    D: tuple

    def family(self, j: int) -> CubeSet:
        if j > self.level:
            return CubeSet.full(self.m, self.D[0].dim)
        return self.D[j]


@dataclass(frozen=True, eq=False)
class CubeFamilySet:
    atlas: ChartAtlas
    levels: tuple

    @property
    def m(self) -> tuple:
        return tuple(lv.m for lv in self.levels)

    @property
    def dim(self) -> int:
        return self.atlas.dim


def grid_seed(atlas: ChartAtlas, prev: int) -> PointSet:
    """``x_0`` translated by the ``2^-prev`` grid, kept inside ``[0,1]^d``."""
    step = 1 << prev
    axes = []
    den = 1
    x0 = atlas.x0()
    for v in x0:
        den = lcm(den, v.denominator * step)
    for v in x0:
        base = int(v * den)
        unit = den // step
        lo = -(base // unit)
        hi = (den - base) // unit
        axes.append(base + unit * np.arange(lo, hi + 1, dtype=np.int64))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, atlas.dim)
    return PointSet.make(mesh, den)


def _measure_resolution(atlas: ChartAtlas, charts: int, a: PointSet, i: int, cap: int) -> tuple:
    bound = Fraction(1, i * i)
    ks = []
    for r in range(charts):
        for k in range(cap + 1):
            if chart_measure(atlas, r, cover(a, k, atlas.dim)) <= bound:
                ks.append(k)
                break
        else:
            raise ResolutionCapExceeded(i, i, f"measure bound for chart {r}", cap)
    return tuple(ks)


def _backward_resolution(atlas: ChartAtlas, charts: int, a: PointSet, target: CubeSet,
                         i: int, j: int, cap: int) -> tuple:
    """Coarsest ``p >= target.res`` whose cover of ``a`` maps into ``target``.

    The inclusions only get easier as ``p`` grows (finer covers are
    subsets), so a binary search over ``[target.res, cap]`` is exact.
    """
    def ok(p):
        e = cover(a, p, atlas.dim)
        if not e.issubset(target):
            return e, InclusionFailure("nesting", (), ())
        return e, check_inclusions(atlas, charts, e, target)

    lo, hi = target.res, cap
    if lo > cap:
        raise ResolutionCapExceeded(i, j, "start resolution", cap)
    e_hi, fail = ok(hi)
    if fail is not None:
        raise ResolutionCapExceeded(i, j, f"{fail.kind} inclusion {fail.charts}", cap)
    best = (hi, e_hi)
    while lo < hi:
        mid = (lo + hi) // 2
        e_mid, fail = ok(mid)
        if fail is None:
            hi, best = mid, (mid, e_mid)
        else:
            lo = mid + 1
    return best


def build_level(atlas: ChartAtlas, i: int, prev_m: int, max_resolution: int = DEFAULT_MAX_RESOLUTION) -> LevelFamily:
    d = atlas.dim
    charts = atlas.used(i)
    a_sets = [grid_seed(atlas, prev_m)]
    b_sets = []
    for _ in range(i):
        b = union_points([to_group(atlas, t, a_sets[-1]) for t in range(charts)], d)
        b_sets.append(b)
        f = op_F(b)
        a_sets.append(union_points([to_chart(atlas, t, f) for t in range(charts)], d))
    b_sets.append(union_points([to_group(atlas, t, a_sets[-1]) for t in range(charts)], d))
    ks = _measure_resolution(atlas, charts, a_sets[i], i, max_resolution)
    l_top = max(prev_m + 1, *ks)
    if l_top > max_resolution:
        raise ResolutionCapExceeded(i, i, "measure bound", max_resolution)
    e_sets = [None] * (i + 1)
    ls = [0] * (i + 1)
    e_sets[i], ls[i] = cover(a_sets[i], l_top, d), l_top
    for j in range(i - 1, -1, -1):
        ls[j], e_sets[j] = _backward_resolution(atlas, charts, a_sets[j], e_sets[j + 1], i, j, max_resolution)
    m = ls[0]
    ds = tuple(e.refine(m) for e in e_sets)
    return LevelFamily(i, m, charts, tuple(a_sets), tuple(b_sets), tuple(e_sets), tuple(ls), ks, ds)


def build_cube_families(atlas: ChartAtlas, depth: int,
                        max_resolution: int = DEFAULT_MAX_RESOLUTION) -> CubeFamilySet:
    """Levels ``0..depth``; level 0 is the single cube ``[0,1]^d`` with ``m_0 = 0``."""
    validate_atlas(atlas)
    d = atlas.dim
    full0 = CubeSet.full(0, d)
    seed = grid_seed(atlas, 0)
    levels = [LevelFamily(0, 0, 1, (seed,), (to_group(atlas, 0, seed),), (full0,), (0,), (0,), (full0,))]
    for i in range(1, depth + 1):
        levels.append(build_level(atlas, i, levels[-1].m, max_resolution))
    return CubeFamilySet(atlas, tuple(levels))


# -- verification ----------------------------------------------------------


@dataclass(frozen=True)
class ConditionCheck:
    condition: str
    level: int
    stage: int | None
    holds: bool
    witness: dict | None = None
    value: Fraction | None = None
    bound: Fraction | None = None


CONDITIONS = ("monotone", "identity", "dense-seed", "product", "inverse", "measure")


def verify_cube_families(fam: CubeFamilySet, kinds: Sequence[str] = CONDITIONS) -> list[ConditionCheck]:
    """Check the six conditions on every level from the stored families alone."""
    atlas = fam.atlas
    out: list[ConditionCheck] = []
    x0 = atlas.x0()
    for lv in fam.levels:
        i = lv.level
        fams = [lv.family(j) for j in range(i + 2)]
        if "monotone" in kinds:
            for j in range(i + 1):
                ok = fams[j].issubset(fams[j + 1])
                out.append(ConditionCheck("monotone", i, j, ok))
        if "identity" in kinds:
            out.append(ConditionCheck("identity", i, 0, fams[0].contains_point(x0),
                                      None if fams[0].contains_point(x0) else {"point": [str(v) for v in x0]}))
        if "dense-seed" in kinds and i >= 1:
            prev = fam.levels[i - 1].m
            parents = fams[0].coarsen(prev)
            ok = len(parents) == 1 << (prev * atlas.dim)
            witness = None
            if not ok:
                missing = np.setdiff1d(np.arange(1 << (prev * atlas.dim)), parents.keys)
                witness = {"cube": _unlinear(missing[:1], prev, atlas.dim)[0].tolist(), "resolution": prev}
            out.append(ConditionCheck("dense-seed", i, 0, ok, witness))
        for j in range(i):
            for kind in ("product", "inverse"):
                if kind in kinds:
                    fail = check_inclusions(atlas, lv.charts, fams[j], fams[j + 1], kinds=(kind,))
                    out.append(ConditionCheck(kind, i, j, fail is None, None if fail is None else fail.describe()))
        if "measure" in kinds and i >= 1:
            bound = Fraction(1, i * i)
            for r in range(lv.charts):
                v = chart_measure(atlas, r, fams[i])
                out.append(ConditionCheck("measure", i, r, v <= bound, None, v, bound))
    return out


# -- game space over cube labels -------------------------------------------


@dataclass(frozen=True)
class CubeGameSpace:
    m: tuple
    dim: int
    branching: tuple

    def cube(self, word: Sequence[int]) -> np.ndarray:
        """Index vector, at resolution ``m[len(word) - 1]``, of the cube labelled by ``word``."""
        idx = np.zeros(self.dim, dtype=np.int64)
        for lvl in range(1, len(word)):
            step = self.m[lvl] - self.m[lvl - 1]
            label = word[lvl] - 1
            digits = [(label >> (step * a)) & ((1 << step) - 1) for a in range(self.dim)]
            idx = (idx << step) + np.array(digits[::-1], dtype=np.int64)
        return idx

    def word(self, idx: Sequence[int], level: int) -> tuple:
        idx = [int(v) for v in idx]
        out = []
        for lvl in range(level, 0, -1):
            step = self.m[lvl] - self.m[lvl - 1]
            mask = (1 << step) - 1
            digits = [v & mask for v in idx]
            label = 0
            for a, dgt in enumerate(digits[::-1]):
                label |= dgt << (step * a)
            out.append(label + 1)
            idx = [v >> step for v in idx]
        return (1,) + tuple(reversed(out))

    def cube_box(self, word: Sequence[int]) -> tuple:
        res = self.m[len(word) - 1]
        return tuple((Fraction(int(v), 1 << res), Fraction(int(v) + 1, 1 << res)) for v in self.cube(word))


def cube_game_space(fam: CubeFamilySet | Sequence[int], dim: int | None = None) -> CubeGameSpace:
    """Branching ``M_0 = 1``, ``M_{i+1} = 2^{(m_{i+1} - m_i) d}`` and the cube labelling."""
    if isinstance(fam, CubeFamilySet):
        m, d = fam.m, fam.dim
    else:
        m, d = tuple(int(v) for v in fam), int(dim or 1)
    if any(b <= a for a, b in zip(m, m[1:])):
        raise NonIncreasingResolutions(f"resolutions must increase strictly: {m}")
    branching = (1,) + tuple(1 << ((b - a) * d) for a, b in zip(m, m[1:]))
    return CubeGameSpace(m, d, branching)


def check_tiling(space: CubeGameSpace, level: int) -> ConditionCheck:
    """Children of every labelled cube up to ``level`` are nested in it and tile it."""
    from .game import ProductSpace

    ps = ProductSpace(space.branching)
    for w in ps.words(level + 1):
        parent = space.cube_box(w)
        vol = Fraction(1)
        for lo, hi in parent:
            vol *= hi - lo
        if level + 1 >= len(space.branching):
            break
        total, seen = Fraction(0), set()
        for k in range(1, space.branching[level + 1] + 1):
            child = space.cube_box(tuple(w) + (k,))
            if any(c_lo < p_lo or c_hi > p_hi for (c_lo, c_hi), (p_lo, p_hi) in zip(child, parent)):
                return ConditionCheck("nesting", level, None, False, {"word": list(w), "child": k})
            seen.add(child)
            cv = Fraction(1)
            for lo, hi in child:
                cv *= hi - lo
            total += cv
        if total != vol or len(seen) != space.branching[level + 1]:
            return ConditionCheck("tiling", level, None, False, {"word": list(w)})
    return ConditionCheck("tiling", level, None, True)


def torus_demo_word(fam: CubeFamilySet, space: CubeGameSpace, reference: Sequence[int],
                    chosen: frozenset) -> tuple:
    """``t_i`` off ``chosen`` copies the reference; on ``chosen`` it picks a child in ``D^i_0``."""
    word = [1]
    for i in range(1, len(space.branching)):
        if i not in chosen and i < len(reference):
            word.append(int(reference[i]))
            continue
        d0 = fam.levels[i].family(0)
        pick = None
        for k in range(1, space.branching[i] + 1):
            if d0.contains_cube(space.cube(tuple(word) + (k,))):
                pick = k
                break
        if pick is None:
            raise AssertionError(f"no child of {tuple(word)} in D^{i}_0")
        word.append(pick)
    return tuple(word)
