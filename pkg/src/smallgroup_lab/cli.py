"""Command-line entry point: ``smallgroup-lab <verb> [options]``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for
configuration errors, 3 for internal errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback

from .report import load_schema, render_json, render_table
from .scenarios import ConfigError, parse_config, run_scenario

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

VERB_KINDS = {
    "levelsets": ("levelsets",),
    "thin": ("thin",),
    "coords": ("coords",),
    "skeleton": ("skeleton",),
    "game": ("game",),
    "demo": ("demo",),
    "torus": ("torus",),
    "pipeline": ("full-profinite-pipeline", "full-torus-pipeline"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, not {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", metavar="FILE", help="scenario JSON; flags below override its fields")
    g.add_argument("--out", metavar="FILE", help="write the report here instead of stdout")
    g.add_argument("--format", choices=("json", "table"), default="json")
    g.add_argument("--seed", type=int, metavar="N")
    g.add_argument("--max-order", type=int, metavar="N", help="largest group order to materialise")
    g.add_argument("--max-resolution", type=int, metavar="N", help="finest dyadic generation for the torus")

    tower = argparse.ArgumentParser(add_help=False)
    t = tower.add_argument_group("tower")
    t.add_argument("--tower", help="cyclic:P@0,E1,... | product:K@0,C1,... | path to a tower JSON file")
    t.add_argument("--generator", help="thin this generator instead: cyclic:P or product:K")
    t.add_argument("--depth", type=int)
    t.add_argument("--mode", choices=("exact", "apriori"))
    t.add_argument("--max-index", type=int, metavar="N")

    parser = _Parser(prog="smallgroup-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("levelsets", parents=[common, tower], help="level sets and their closure relations")
    p.add_argument("--j-max", type=int)
    p.add_argument("--method", choices=("auto", "elements", "classes"))

    p = sub.add_parser("thin", parents=[common], help="thin a generator so the growth bound holds")
    p.add_argument("--generator")
    p.add_argument("--depth", type=int)
    p.add_argument("--mode", choices=("exact", "apriori"))
    p.add_argument("--max-index", type=int, metavar="N")

    p = sub.add_parser("coords", parents=[common, tower], help="coordinate map, cylinders and pushforwards")
    p.add_argument("--samples", type=int)
    p.add_argument("--encode", type=_int_list, action="append", metavar="G0,G1,...")
    p.add_argument("--decode", type=_int_list, action="append", metavar="K0,K1,...")

    p = sub.add_parser("skeleton", parents=[common, tower], help="witness calculus and tail measures")
    p.add_argument("--samples", type=int)
    p.add_argument("--threshold", type=int)

    p = sub.add_parser("game", parents=[common], help="solve a game on dense open cylinder sets")
    p.add_argument("--space", type=_int_list, metavar="M0,M1,...")
    p.add_argument("--dense", type=_json_arg, metavar="JSON", help="list of sets, each a list of prefixes")
    p.add_argument("--random", type=int, metavar="FAMILIES", help="solve this many random families")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("demo", parents=[common, tower], help="non-meagerness demonstration on a tower")
    p.add_argument("--dense", type=_json_arg, metavar="JSON")
    p.add_argument("--random-sets", type=int)
    p.add_argument("--parity", choices=("even", "odd", "both"))

    p = sub.add_parser("torus", parents=[common], help="dyadic cube families on the torus")
    p.add_argument("--atlas", help="builtin:two-arcs or a path to an atlas JSON file")
    p.add_argument("--dim", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--tiling-levels", type=int)

    p = sub.add_parser("pipeline", parents=[common], help="end-to-end profinite or torus pipeline")
    p.add_argument("target", nargs="?", choices=("profinite", "torus"))
    p.add_argument("--generator")
    p.add_argument("--depth", type=int)
    p.add_argument("--mode", choices=("exact", "apriori"))
    p.add_argument("--max-index", type=int, metavar="N")
    p.add_argument("--atlas")
    p.add_argument("--dim", type=int)
    p.add_argument("--parity", choices=("even", "odd", "both"))
    p.add_argument("--random-sets", type=int)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("schema", help="print the report or config JSON schema")
    p.add_argument("which", nargs="?", choices=("report", "config"), default="report")
    p.add_argument("--out", metavar="FILE", help="write the schema here instead of stdout")
    return parser


_GLOBAL = {"config", "out", "format", "verb", "target", "random", "tower"}


def _load_tower(spec):
    if spec is None or spec.startswith(("cyclic:", "product:")):
        return spec
    try:
        with open(spec) as fh:
            return parse_config_doc(fh.read(), spec)
    except OSError as exc:
        raise ConfigError(f"cannot read tower file {spec!r}: {exc.strerror}") from None


def parse_config_doc(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def config_from_args(args) -> dict:
    """Merge ``--config`` with the verb's flags; flags win."""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc.strerror}") from None
        cfg = dict(parse_config(text, args.config))
        allowed = VERB_KINDS[args.verb]
        if cfg["kind"] not in allowed:
            raise ConfigError(f"config kind {cfg['kind']!r} does not match verb {args.verb!r}")
        if args.verb == "pipeline" and args.target and cfg["kind"] != f"full-{args.target}-pipeline":
            raise ConfigError(f"config kind {cfg['kind']!r} does not match pipeline target {args.target!r}")
    else:
        kind = VERB_KINDS[args.verb][0]
        if args.verb == "pipeline":
            kind = f"full-{args.target or 'profinite'}-pipeline"
        cfg = {"kind": kind}
    for key, value in vars(args).items():
        if key in _GLOBAL or value is None:
            continue
        cfg[key] = value
    if getattr(args, "tower", None) is not None:
        cfg["tower"] = _load_tower(args.tower)
    if getattr(args, "random", None) is not None:
        cfg["random"] = {"families": args.random}
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "schema":
            _emit(json.dumps(load_schema(args.which), indent=2, sort_keys=True) + "\n", args.out)
            return EXIT_OK
        report = run_scenario(config_from_args(args))
        _emit(render_table(report) if args.format == "table" else render_json(report), args.out)
    except ConfigError as exc:
        print(f"smallgroup-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001 - last-resort guard, mapped to the internal-error status
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK if report["summary"]["status"] == "pass" else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
