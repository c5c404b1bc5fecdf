"""IN/OUT verdicts from 2D image geometry.

Court lines are annotated once per camera setup as directed segments in
image coordinates; no calibration or 3D reconstruction. Distances are
measured from each painted line's outer edge, so a ball touching any part
of the line counts IN.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .bounce import BouncePrediction
from .errors import DegenerateLineError


@dataclass(frozen=True)
class CourtLine:
    """A directed painted line; in_side says which side of p0->p1 is in-bounds."""

    name: str
    p0: tuple[float, float]
    p1: tuple[float, float]
    thickness: float = 0.0
    in_side: int = 1  # +1: positive cross-product side of p0->p1, -1: other

    def __post_init__(self):
        if self.p0 == self.p1:
            raise DegenerateLineError(f"line {self.name!r} has p0 == p1")
        if self.thickness < 0:
            raise ValueError("thickness must be >= 0")
        if self.in_side not in (1, -1):
            raise ValueError("in_side must be +1 or -1")


@dataclass(frozen=True)
class CourtLineSpec:
    lines: tuple[CourtLine, ...]
    delta: float = 0.0  # positive biases calls toward IN

    def __post_init__(self):
        if not self.lines:
            raise ValueError("court spec needs at least one line")


@dataclass(frozen=True)
class Verdict:
    call: str  # "IN" or "OUT"
    decisive_line: str
    margin: float  # signed px from the decisive line's outer edge, + = inside
    per_line: tuple[tuple[str, float], ...]
    confident: bool

    def to_dict(self) -> dict:
        return {
            "call": self.call,
            "decisive_line": self.decisive_line,
            "margin": self.margin,
            "per_line": [[name, d] for name, d in self.per_line],
            "confident": self.confident,
        }


def signed_distance(p: tuple[float, float], line: CourtLine) -> float:
    """Signed distance from the line's outer edge, positive on the in side.

    The raw perpendicular distance to the infinite line through p0, p1 is
    signed by the in_side convention and offset by half the painted
    thickness: any point on the paint yields >= 0 and therefore counts IN.
    """
    dx = line.p1[0] - line.p0[0]
    dy = line.p1[1] - line.p0[1]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise DegenerateLineError(f"line {line.name!r} has p0 == p1")
    cross = dx * (p[1] - line.p0[1]) - dy * (p[0] - line.p0[0])
    return line.in_side * cross / norm + line.thickness / 2.0


def call(bounce: BouncePrediction, court: CourtLineSpec,
         delta: float = 0.0) -> Verdict:
    """Rule on a predicted bounce point against the annotated court lines.

    The decisive line is the one with the smallest signed distance (ties
    break on the line name so the verdict is independent of annotation
    order); the call is OUT iff that margin is below -delta. A
    non-confident bounce keeps the same rule but is flagged on the record.
    """
    return call_point(bounce.point, court, delta, confident=bounce.confident)


def call_point(point: tuple[float, float], court: CourtLineSpec,
               delta: float = 0.0, confident: bool = True) -> Verdict:
    """Same rule as `call` for a bare point (used for ground-truth calls)."""
    per_line = tuple((ln.name, signed_distance(point, ln))
                     for ln in court.lines)
    name, margin = min(per_line, key=lambda t: (t[1], t[0]))
    verdict = "OUT" if margin < -delta else "IN"
    return Verdict(verdict, name, margin, per_line, confident)


# -- court spec file ----------------------------------------------------------

def court_to_dict(court: CourtLineSpec) -> dict:
    return {
        "lines": [
            {
                "name": ln.name,
                "p0": [ln.p0[0], ln.p0[1]],
                "p1": [ln.p1[0], ln.p1[1]],
                "thickness": ln.thickness,
                "in_side": ln.in_side,
            }
            for ln in court.lines
        ],
        "delta": court.delta,
    }


def court_from_dict(data: dict) -> CourtLineSpec:
    lines = tuple(
        CourtLine(
            name=str(item["name"]),
            p0=(float(item["p0"][0]), float(item["p0"][1])),
            p1=(float(item["p1"][0]), float(item["p1"][1])),
            thickness=float(item.get("thickness", 0.0)),
            in_side=int(item.get("in_side", 1)),
        )
        for item in data["lines"]
    )
    return CourtLineSpec(lines, float(data.get("delta", 0.0)))


def load_court(path: str) -> CourtLineSpec:
    with open(path, encoding="utf-8") as f:
        return court_from_dict(json.load(f))


def save_court(court: CourtLineSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(court_to_dict(court), f, indent=2, sort_keys=True)
        f.write("\n")
