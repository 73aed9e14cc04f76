"""Scenario runner: validate a config, run the module pipeline, assemble a report."""
from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from itertools import combinations, product
from math import prod

import jsonschema
import numpy as np

from . import coords as co
from .game import (AlphabetMismatch, Conjunction, CylinderUnion, GameError, ProductSpace, SpaceTooShallow,
                   dense_failure, pad_for_parity, random_dense_family, random_windowed_sets, solve_game,
                   validate_dense_open, verify_game, demo_nonmeager)
from .groups import (DEFAULT_MAX_ORDER, GroupError, enumerate_fibers, parse_generator, tower_from_json)
from .levelsets import (DEFAULT_MAX_INDEX, build_all_level_sets, thin_tower, verify_level_closure)
from .report import ReportBuilder, load_schema
from .skeleton import (EVEN, ODD, UltrafilterSurrogate, WitnessViolation, WitnessedElement, first_failure,
                       tail_event_measure, witness_combine)
from .torus import (CONDITIONS, DEFAULT_MAX_RESOLUTION, AtlasInvalid, NonIncreasingResolutions,
                    ResolutionCapExceeded, atlas_from_json, build_cube_families, check_tiling,
                    cube_game_space, load_atlas, torus_demo_word, verify_cube_families)

THREADS_ENV = "SMALLGROUP_LAB_THREADS"
EXHAUSTIVE_PAIRS = 1 << 16
EXHAUSTIVE_SUBSETS = 10
# Demo sets start at coordinate 1: coordinate 0 is trivial and later stages need room.
DEMO_START = 1

_DEFAULTS = {
    "levelsets": {"method": "auto"},
    "thin": {"mode": "exact"},
    "coords": {"samples": 2000},
    "skeleton": {"samples": 2000, "threshold": 0},
    "game": {"samples": 1000},
    "demo": {"random_sets": 1, "parity": "both"},
    "torus": {"atlas": "builtin:two-arcs", "dim": 1, "depth": 2},
    "full-profinite-pipeline": {"mode": "exact", "parity": "both", "random_sets": 1, "samples": 1000},
    "full-torus-pipeline": {"atlas": "builtin:two-arcs", "dim": 1, "depth": 2, "parity": "both",
                            "random_sets": 1, "samples": 1000},
}
_TOWER_DEFAULTS = {"mode": "exact"}

_RELATION_TAGS = {
    "A-product": "set-product", "A-inverse": "set-inverse", "A-monotone": "set-monotone",
    "B-product": "class-product", "B-inverse": "class-inverse", "B-monotone": "class-monotone",
}
_CONDITION_TAGS = {
    "monotone": "family-monotone", "identity": "identity-cover", "dense-seed": "dense-seed",
    "product": "family-product", "inverse": "family-inverse", "measure": "chart-measure",
}

# Errors raised by the modules that mean the input cannot be run as given.
_INPUT_ERRORS = (GroupError, GameError, AtlasInvalid, ResolutionCapExceeded, NonIncreasingResolutions,
                 co.IncompatibleWord, co.InvalidCoordinates)


class ConfigError(ValueError):
    """Invalid or unrunnable scenario; the CLI exits with status 2."""


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg} (char {exc.pos})") from None
    return validate_config(doc)


def validate_config(doc) -> dict:
    """Schema check, then fill defaults; the filled config is what reports echo."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {err.message}")
    cfg = dict(_DEFAULTS[doc["kind"]])
    if doc["kind"] in ("levelsets", "coords", "skeleton", "demo") and "generator" in doc:
        cfg.update(_TOWER_DEFAULTS)
    cfg.update(doc)
    cfg.setdefault("seed", 0)
    return cfg


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, not {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, not {raw!r}")
    return n


# -- inputs ----------------------------------------------------------------


_TOWER_RE = re.compile(r"^(cyclic|product):(\d+)@([\d,]+)$")


def parse_tower(spec, max_order: int = DEFAULT_MAX_ORDER):
    """``cyclic:p@0,e1,...``, ``product:k@0,c1,...`` or a tower JSON document."""
    if isinstance(spec, dict):
        return tower_from_json(spec, max_order=max_order)
    match = _TOWER_RE.match(spec)
    if not match:
        raise ConfigError(f"cannot parse tower {spec!r}")
    kind, base, exps = match.groups()
    exps = [int(e) for e in exps.split(",")]
    if any(a >= b for a, b in zip(exps, exps[1:])):
        raise ConfigError(f"tower exponents must increase: {exps}")
    if kind == "cyclic":
        doc = {"generator": "cyclic", "base": int(base), "exponents": exps}
    else:
        doc = {"generator": "product", "factor": f"cyclic:{base}", "exponents": exps}
    return tower_from_json(doc, max_order=max_order)


def _rng(cfg):
    return np.random.Generator(np.random.PCG64(cfg["seed"]))


def _caps(cfg):
    return (cfg.get("max_order", DEFAULT_MAX_ORDER), cfg.get("max_index", DEFAULT_MAX_INDEX),
            cfg.get("max_resolution", DEFAULT_MAX_RESOLUTION))


def _tower(cfg, rb: ReportBuilder):
    max_order, max_index, _ = _caps(cfg)
    if "tower" in cfg:
        tower = parse_tower(cfg["tower"], max_order)
    else:
        tower = _thin(cfg, rb)
    if tower.groups[-1].order > max_order:
        raise ConfigError(f"top level order {tower.groups[-1].order} exceeds --max-order {max_order}; "
                          "element-level checks need a materialised tower")
    rb.results["tower"] = {"label": tower.label, "orders": list(tower.orders), "m": list(tower.m)}
    return tower


# -- parts -----------------------------------------------------------------


def _thin(cfg, rb: ReportBuilder):
    max_order, max_index, _ = _caps(cfg)
    gen = parse_generator(cfg["generator"])
    tower, rep = thin_tower(gen, cfg["depth"], cfg["mode"], max_order, max_index)
    for lv in rep.levels:
        rb.check(f"growth i={lv.level}", "thinning-growth", lv.holds,
                 None if lv.holds else {"level": lv.level},
                 level=lv.level, index=lv.index, b_size=lv.b_size, m=lv.m,
                 apriori_bound=lv.bound, apriori_required=lv.required)
    rb.results["thinning"] = {"generator": rep.generator, "mode": rep.mode, "indices": list(rep.indices),
                              "m": [1] + [lv.m for lv in rep.levels],
                              "b_sizes": [1] + [lv.b_size for lv in rep.levels]}
    return tower


def _levelsets(cfg, rb: ReportBuilder, tower, enum):
    j_max = cfg.get("j_max", tower.depth)
    method = cfg.get("method", "auto")
    if method == "classes" and tower.moduli is None:
        raise ConfigError("method 'classes' needs a cyclic tower")
    ls = build_all_level_sets(tower, enum, j_max, method)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        verdicts = list(pool.map(lambda lv: verify_level_closure(tower, enum, lv), ls))
    for lv, checks in zip(ls, verdicts):
        for c in checks:
            rb.check(f"{c.relation} i={lv.level} j={c.j}", _RELATION_TAGS[c.relation], c.holds,
                     None if c.witness is None else list(c.witness), level=lv.level, j=c.j)
    rb.results["level_sets"] = [
        {"level": lv.level, "m": lv.m, "method": lv.method,
         "b_sizes": [lv.b_size(j) for j in range(lv.j_max + 1)],
         "a_sizes": None if lv.a is None else [int(a.sum()) for a in lv.a]}
        for lv in ls]
    return ls


def _coords(cfg, rb: ReportBuilder, tower, enum, rng):
    n = tower.depth
    words = co.all_coordinate_words(tower, enum)
    top = tower.groups[-1].order
    distinct = len({tuple(r) for r in words.tolist()})
    in_range = bool(np.all((words >= 1) & (words <= np.array(tower.m))))
    round_trip = next((x for x in range(top)
                       if co.psi_decode(tower, enum, words[x].tolist()) != co.element_word(tower, x)), None)
    rb.check("psi bijection", "coordinate-bijection",
             distinct == top == prod(tower.m) and in_range and round_trip is None,
             None if round_trip is None else {"element": round_trip},
             elements=top, distinct_words=distinct, coordinate_space=prod(tower.m))

    for length in range(1, n + 2):
        counts = {}
        for row in words[:, :length].tolist():
            counts[tuple(row)] = counts.get(tuple(row), 0) + 1
        expected = Fraction(1, tower.groups[length - 1].order)
        bad = next((p for p in product(*(range(1, m + 1) for m in tower.m[:length]))
                    if co.cylinder_measure(tower, p) != expected
                    or Fraction(counts.get(p, 0), top) != expected), None)
        rb.check(f"cylinders depth={length - 1}", "cylinder-measure", bad is None,
                 None if bad is None else list(bad), depth=length - 1, measure=expected,
                 cylinders=prod(tower.m[:length]))

    if top * top <= EXHAUSTIVE_PAIRS:
        pairs = list(product(range(top), repeat=2))
        singles = list(range(top))
    else:
        pairs = [tuple(int(v) for v in p) for p in rng.integers(0, top, size=(cfg["samples"], 2))]
        singles = [int(v) for v in rng.integers(0, top, size=cfg["samples"])]
    g = tower.groups[-1]
    bad = next(((x, y) for x, y in pairs
                if co.coord_multiply(tower, enum, words[x].tolist(), words[y].tolist())
                != tuple(words[int(g.mul(x, y))].tolist())), None)
    rb.check("psi(xy) = psi(x) psi(y)", "coordinate-product", bad is None,
             None if bad is None else list(bad), pairs=len(pairs), exhaustive=top * top <= EXHAUSTIVE_PAIRS)
    bad = next((x for x in singles
                if co.coord_inverse(tower, enum, words[x].tolist()) != tuple(words[int(g.inv(x))].tolist())),
               None)
    rb.check("psi(x^-1) = psi(x)^-1", "coordinate-inverse", bad is None, bad, elements=len(singles))

    for i, j in combinations(range(n + 1), 2):
        order = tower.groups[i].order
        if order <= EXHAUSTIVE_SUBSETS:
            subsets = (np.array([(s >> b) & 1 for b in range(order)], dtype=bool) for s in range(1 << order))
            total = 1 << order
        else:
            subsets = (rng.random(order) < 0.5 for _ in range(cfg["samples"] // 10 or 1))
            total = cfg["samples"] // 10 or 1
        bad = next((np.flatnonzero(x).tolist() for x in subsets if not co.pushforward_check(tower, i, j, x)),
                   None)
        rb.check(f"pushforward {j}->{i}", "pushforward", bad is None, bad, source=j, target=i,
                 subsets=total, exhaustive=order <= EXHAUSTIVE_SUBSETS)

    enc = [list(co.psi_encode(tower, enum, w)) for w in cfg.get("encode", [])]
    dec = [list(co.psi_decode(tower, enum, w)) for w in cfg.get("decode", [])]
    if enc or dec:
        rb.results["coordinates"] = {"encoded": enc, "decoded": dec}


def _witnessed(level_sets, word, n):
    return WitnessedElement(word, n, frozenset(i for i in range(len(word)) if level_sets[i].in_b(n, word[i])))


def _skeleton(cfg, rb: ReportBuilder, tower, enum, level_sets, rng):
    depth = tower.depth
    words = [tuple(r) for r in co.all_coordinate_words(tower, enum).tolist()]
    levels = range(depth + 1)
    total = len(words) ** 2 * (depth + 1) ** 2
    if total <= EXHAUSTIVE_PAIRS:
        pairs = ((x, y, a, b) for x in words for y in words for a in levels for b in levels)
        singles = [(x, a) for x in words for a in levels]
        exhaustive = True
    else:
        k = cfg["samples"]
        pairs = [(words[int(rng.integers(len(words)))], words[int(rng.integers(len(words)))],
                  int(rng.integers(depth + 1)), int(rng.integers(depth + 1))) for _ in range(k)]
        singles = [(words[int(rng.integers(len(words)))], int(rng.integers(depth + 1))) for _ in range(k)]
        total, exhaustive = k, False
    threshold = cfg.get("threshold", 0)

    def run(kind, items):
        count, witness = 0, None
        for item in items:
            count += 1
            try:
                if kind == "product":
                    x, y, a, b = item
                    witness_combine(tower, enum, level_sets, _witnessed(level_sets, x, a),
                                    _witnessed(level_sets, y, b), "product", threshold)
                else:
                    x, a = item
                    witness_combine(tower, enum, level_sets, _witnessed(level_sets, x, a), None, "inverse",
                                    threshold)
            except WitnessViolation as exc:
                witness = {"item": [list(v) if isinstance(v, tuple) else v for v in item], "level": exc.level}
                break
        return count, witness

    count, witness = run("product", pairs)
    rb.check("witnessed products", "witness-product", witness is None, witness, claims=count,
             exhaustive=exhaustive, threshold=threshold)
    count, witness = run("inverse", singles)
    rb.check("witnessed inverses", "witness-inverse", witness is None, witness, claims=count,
             exhaustive=exhaustive, threshold=threshold)

    for n in range(depth + 1):
        for i0 in range(n, depth + 1):
            measure, bound = tail_event_measure(tower, level_sets, n, i0)
            rb.check(f"tail n={n} i0={i0}", "tail-measure", measure <= bound, None,
                     n=n, i0=i0, measure=measure, bound=bound)


def _prefix_sets(space: ProductSpace, raw):
    sets = [CylinderUnion(prefixes) for prefixes in raw]
    for u in sets:
        try:
            u.check_alphabet(space)
        except AlphabetMismatch as exc:
            raise ConfigError(str(exc)) from None
    return sets


def _dense_checks(rb, space, sets, prefix=""):
    ok = True
    for k, u in enumerate(sets, 1):
        dense = validate_dense_open(space, u)
        cell = None if dense else dense_failure(space, u)
        ok &= rb.check(f"{prefix}U_{k} dense open", "dense-open", dense,
                       None if cell is None else list(cell), cylinders=len(u.prefixes), resolution=u.resolution)
    return ok


def _game_checks(rb, space, sets, rng, samples, prefix=""):
    try:
        solution = solve_game(space, sets)
    except SpaceTooShallow as exc:
        rb.check(f"{prefix}solve", "game-solved", False, {"stage": exc.stage}, sets=len(sets))
        return None
    rb.check(f"{prefix}solve", "game-solved", True, None, sets=len(sets), stages=solution.stages)
    report = verify_game(space, solution, sets, samples=samples, rng=rng)
    for st in report.stages:
        rb.check(f"{prefix}stage {st.stage}", "stage-containment", st.holds,
                 None if st.witness is None else list(st.witness), stage=st.stage, prefixes=st.prefixes)
    if report.sampling is not None:
        s = report.sampling
        rb.check(f"{prefix}block samples", "block-sampling", s.holds,
                 None if s.witness is None else [s.witness[0], list(s.witness[1])],
                 samples=s.samples, failures=s.failures)
    return solution


def _game(cfg, rb: ReportBuilder, rng):
    if "random" in cfg:
        opts = cfg["random"]
        wanted, solved, drawn = opts["families"], [], 0
        while len(solved) < wanted and drawn < 4 * wanted + 10:
            drawn += 1
            space, sets = random_dense_family(rng, opts.get("max_sets", 6), opts.get("max_depth", 8),
                                              opts.get("max_branching", 4))
            try:
                solution = solve_game(space, sets)
            except SpaceTooShallow:
                continue
            report = verify_game(space, solution, sets, samples=cfg["samples"], rng=rng)
            f = len(solved) + 1
            stage_bad = next((s for s in report.stages if not s.holds), None)
            rb.check(f"family {f} stages", "stage-containment", stage_bad is None,
                     None if stage_bad is None else {"stage": stage_bad.stage, "prefix": list(stage_bad.witness)},
                     stages=len(report.stages), space=list(space.branching))
            s = report.sampling
            rb.check(f"family {f} block samples", "block-sampling", s.holds,
                     None if s.witness is None else [s.witness[0], list(s.witness[1])],
                     samples=s.samples, failures=s.failures)
            solved.append({"space": list(space.branching), "sets": len(sets),
                           "breakpoints": list(solution.breakpoints), "reference": list(solution.reference)})
        rb.check("random families solved", "game-solved", len(solved) == wanted, None,
                 solved=len(solved), drawn=drawn, rejected=drawn - len(solved))
        rb.results["game"] = {"families": solved, "drawn": drawn}
        return
    space = ProductSpace(tuple(cfg["space"]))
    sets = _prefix_sets(space, cfg["dense"])
    if not _dense_checks(rb, space, sets):
        return
    solution = _game_checks(rb, space, sets, rng, cfg["samples"])
    if solution is not None:
        rb.results["game"] = {"breakpoints": list(solution.breakpoints), "reference": list(solution.reference)}


def _parities(cfg):
    return (EVEN, ODD) if cfg["parity"] == "both" else (cfg["parity"],)


def _demo(cfg, rb: ReportBuilder, tower, level_sets, rng):
    space = ProductSpace(tower.m)
    if "dense" in cfg:
        sets = _prefix_sets(space, cfg["dense"])
    else:
        sets = random_windowed_sets(rng, space, cfg["random_sets"], DEMO_START, DEMO_START)
    if not _dense_checks(rb, space, sets, "demo "):
        return
    out = {}
    for parity in _parities(cfg):
        try:
            res = demo_nonmeager(tower, level_sets, sets, parity)
        except SpaceTooShallow as exc:
            rb.check(f"demo {parity} solve", "game-solved", False, {"stage": exc.stage}, parity=parity)
            continue
        el = res.element
        bad = first_failure(level_sets, el.word, 0, el.indices)
        rb.check(f"demo {parity} membership", "demo-membership",
                 bad is None and el.indices == res.surrogate.indices(tower.depth),
                 None if bad is None else {"index": bad}, parity=parity, indices=el.indices)
        missed = [k + 1 for k, ok in enumerate(res.in_sets) if not ok]
        rb.check(f"demo {parity} in sets", "demo-in-sets", not missed, missed or None, parity=parity,
                 sets=len(sets))
        out[parity] = {"element": list(el.word), "indices": sorted(el.indices),
                       "breakpoints": list(res.solution.breakpoints), "reference": list(res.solution.reference)}
    rb.results["demo"] = out


def _load_atlas(cfg):
    spec = cfg["atlas"]
    if isinstance(spec, dict):
        atlas = atlas_from_json(spec)
        if atlas.dim != cfg["dim"]:
            raise ConfigError(f"atlas dimension {atlas.dim} != dim {cfg['dim']}")
        return atlas
    try:
        return load_atlas(spec, cfg["dim"])
    except OSError as exc:
        raise ConfigError(f"cannot read atlas {spec!r}: {exc.strerror}") from None


def _torus(cfg, rb: ReportBuilder):
    atlas = _load_atlas(cfg)
    rb.check("atlas covers the torus", "atlas-cover", True, None, charts=len(atlas.charts), dim=atlas.dim)
    fam = build_cube_families(atlas, cfg["depth"], _caps(cfg)[2])
    for c in verify_cube_families(fam, CONDITIONS):
        name = f"{c.condition} i={c.level}" + ("" if c.stage is None else f" stage={c.stage}")
        values = {"level": c.level}
        if c.value is not None:
            values.update(value=c.value, bound=c.bound)
        rb.check(name, _CONDITION_TAGS[c.condition], c.holds, c.witness, **values)
    space = cube_game_space(fam)
    for level in range(min(cfg.get("tiling_levels", cfg["depth"] - 1), cfg["depth"] - 1) + 1):
        c = check_tiling(space, level)
        rb.check(f"tiling level={level}", "cube-tiling", c.holds, c.witness, level=level)
    rb.results["torus"] = {
        "atlas": atlas.to_json(),
        "m": list(fam.m),
        "levels": [{"level": lv.level, "m": lv.m, "charts": lv.charts, "l": list(lv.l), "k": list(lv.k),
                    "cubes": [len(d) for d in lv.D]} for lv in fam.levels],
        "branching": list(space.branching),
    }
    return fam, space


def _torus_demo(cfg, rb: ReportBuilder, fam, space, rng):
    ps = ProductSpace(space.branching)
    sets = random_windowed_sets(rng, ps, cfg["random_sets"], DEMO_START, DEMO_START)
    if not _dense_checks(rb, ps, sets, "cube game "):
        return
    out = {}
    depth = len(space.branching) - 1
    for parity in _parities(cfg):
        game_sets = pad_for_parity(sets, parity)
        solution = _game_checks(rb, ps, game_sets, rng, cfg["samples"], f"cube game {parity} ")
        if solution is None:
            continue
        surrogate = UltrafilterSurrogate(parity, solution.breakpoints)
        chosen = surrogate.indices(depth)
        word = torus_demo_word(fam, space, solution.reference, chosen)
        bad = next((i for i in sorted(chosen)
                    if i and not fam.levels[i].family(0).contains_cube(space.cube(word[:i + 1]))), None)
        rb.check(f"torus demo {parity} membership", "demo-membership", bad is None,
                 None if bad is None else {"index": bad}, parity=parity, indices=chosen)
        off = [k for k in range(1, solution.stages + 1) if not surrogate.selects_block(k - 1)]
        stage_ok = all(Conjunction(game_sets[:k]).contains_word(word) for k in off)
        missed = [k + 1 for k, u in enumerate(sets) if not u.contains_word(word)]
        rb.check(f"torus demo {parity} in sets", "demo-in-sets", stage_ok and not missed, missed or None,
                 parity=parity, sets=len(sets))
        out[parity] = {"word": list(word), "indices": sorted(chosen), "breakpoints": list(solution.breakpoints),
                       "cube": [[lo, hi] for lo, hi in space.cube_box(word)]}
    rb.results["torus_demo"] = out


# -- entry point -----------------------------------------------------------


def _execute(cfg: dict, rb: ReportBuilder) -> None:
    kind = cfg["kind"]
    rng = _rng(cfg)
    max_order = _caps(cfg)[0]
    if kind == "thin":
        _thin(cfg, rb)
    elif kind == "game":
        _game(cfg, rb, rng)
    elif kind == "torus":
        _torus(cfg, rb)
    elif kind == "full-torus-pipeline":
        fam, space = _torus(cfg, rb)
        _torus_demo(cfg, rb, fam, space, rng)
    else:
        tower = _tower(cfg, rb)
        enum = enumerate_fibers(tower, max_order)
        if kind == "levelsets":
            _levelsets(cfg, rb, tower, enum)
        elif kind == "coords":
            _coords(cfg, rb, tower, enum, rng)
        elif kind == "skeleton":
            _skeleton(cfg, rb, tower, enum, build_all_level_sets(tower, enum), rng)
        elif kind == "demo":
            _demo(cfg, rb, tower, build_all_level_sets(tower, enum), rng)
        else:
            level_sets = _levelsets(cfg, rb, tower, enum)
            _coords(cfg, rb, tower, enum, rng)
            _skeleton(cfg, rb, tower, enum, level_sets, rng)
            _demo(cfg, rb, tower, level_sets, rng)


def run_scenario(config: dict) -> dict:
    """Validate ``config``, run it and return the report document.

    Raises :class:`ConfigError` when the config is invalid or the
    requested objects cannot be built within the caps.
    """
    cfg = validate_config(config)
    thread_count()
    rb = ReportBuilder(cfg, cfg["seed"])
    try:
        _execute(cfg, rb)
    except _INPUT_ERRORS as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    return rb.build()
