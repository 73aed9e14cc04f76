"""Report assembly and serialisation.

Reports are plain JSON documents. Rationals become ``{"num": "...", "den": "..."}``
with decimal strings, so nothing is lost in languages without big integers.
Keys are sorted and no clocks or host details are recorded, which makes
reruns with the same scenario byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from . import __version__

TOOL_NAME = "smallgroup-lab"
RNG_ALGORITHM = "PCG64"
SCHEMA_VERSION = 1

# Every check record carries one of these tags.
TAGS = {
    "set-product": "A_i^j A_i^j is contained in A_i^{j+1}",
    "set-inverse": "(A_i^j)^{-1} is contained in A_i^{j+1}",
    "set-monotone": "A_i^j is contained in A_i^{j+1}",
    "class-product": "products of classes indexed by B_i^j fall in classes indexed by B_i^{j+1}",
    "class-inverse": "inverses of classes indexed by B_i^j fall in classes indexed by B_i^{j+1}",
    "class-monotone": "B_i^j is contained in B_i^{j+1}",
    "thinning-growth": "|B_i^i| i^2 <= m_i on the thinned tower",
    "coordinate-bijection": "psi is a bijection between compatible words and coordinate words",
    "cylinder-measure": "every depth-L cylinder has measure 1/|G_L|",
    "pushforward": "|phi^{-1}(X)| / |G_j| = |X| / |G_i|",
    "coordinate-product": "coordinate multiplication commutes with psi",
    "coordinate-inverse": "coordinate inversion commutes with psi",
    "witness-product": "the product of witnessed elements is witnessed one level higher",
    "witness-inverse": "the inverse of a witnessed element is witnessed one level higher",
    "tail-measure": "the tail event has measure at most the sum of 1/k^2",
    "dense-open": "the supplied set is dense open in the coordinate space",
    "game-solved": "the solver found breakpoints within the available depth",
    "stage-containment": "every word agreeing with block k lies in U_1 through U_k",
    "block-sampling": "sampled words agreeing with a block lie in that stage's set",
    "demo-membership": "the demo element passes truncated membership at level 0",
    "demo-in-sets": "the demo element lies in every supplied dense open set",
    "atlas-cover": "the chart boxes cover the torus",
    "family-monotone": "D^i_j is contained in D^i_{j+1}",
    "identity-cover": "D^i_0 contains the identity in chart coordinates",
    "dense-seed": "D^i_0 meets every cube of the previous generation",
    "family-product": "chart products of D^i_j land in D^i_{j+1}",
    "family-inverse": "chart inverses of D^i_j land in D^i_{j+1}",
    "chart-measure": "D^i_i has measure at most 1/i^2 in every chart",
    "cube-tiling": "labelled children are nested in and tile their parent cube",
}


def jsonable(obj):
    """Convert to JSON-ready values: rationals to num/den strings, containers to lists."""
    if isinstance(obj, Fraction):
        return {"num": str(obj.numerator), "den": str(obj.denominator)}
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float):
        return obj
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (frozenset, set)):
        return [jsonable(v) for v in sorted(obj)]
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in obj]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def fraction_from_json(doc: dict) -> Fraction:
    return Fraction(int(doc["num"]), int(doc["den"]))


@dataclass
class Check:
    name: str
    tag: str
    holds: bool
    witness: object = None
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"undocumented check tag {self.tag!r}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "tag": self.tag,
            "status": "pass" if self.holds else "fail",
            "witness": jsonable(self.witness),
            "values": jsonable(self.values),
        }


class ReportBuilder:
    """Collects checks and results in order; assembly happens on one thread."""

    def __init__(self, scenario: dict, seed: int):
        self.scenario = scenario
        self.seed = seed
        self.checks: list[Check] = []
        self.results: dict = {}

    def check(self, name: str, tag: str, holds: bool, witness=None, **values) -> bool:
        self.checks.append(Check(name, tag, bool(holds), witness, values))
        return bool(holds)

    def extend(self, checks) -> None:
        self.checks.extend(checks)

    @property
    def passed(self) -> bool:
        return all(c.holds for c in self.checks)

    def build(self) -> dict:
        passed = sum(c.holds for c in self.checks)
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": TOOL_NAME, "version": __version__},
            "scenario": jsonable(self.scenario),
            "rng": {"algorithm": RNG_ALGORITHM, "seed": self.seed},
            "results": jsonable(self.results),
            "checks": [c.to_json() for c in self.checks],
            "summary": {
                "checks": len(self.checks),
                "passed": passed,
                "failed": len(self.checks) - passed,
                "status": "pass" if passed == len(self.checks) else "fail",
            },
        }


def render_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _short(value, width: int = 48) -> str:
    text = "" if value is None else json.dumps(value, sort_keys=True, separators=(",", ":"))
    return text if len(text) <= width else text[:width - 3] + "..."


def render_table(report: dict) -> str:
    rows = [(c["status"].upper(), c["tag"], c["name"], _short(c["witness"])) for c in report["checks"]]
    head = ("STATUS", "TAG", "CHECK", "WITNESS")
    widths = [max(len(r[k]) for r in rows + [head]) for k in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(head, widths)).rstrip()]
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    s = report["summary"]
    lines.append(f"{report['scenario'].get('kind', '?')}: {s['passed']}/{s['checks']} checks passed ({s['status']})")
    return "\n".join(lines) + "\n"


def load_schema(name: str = "report") -> dict:
    text = resources.files("smallgroup_lab").joinpath("data", f"{name}.schema.json").read_text()
    return json.loads(text)
