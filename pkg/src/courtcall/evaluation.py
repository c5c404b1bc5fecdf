"""Accuracy protocol: per-sample correctness and stratified success ratios.

Two judgments are supported: call matching (the predicted IN/OUT equals the
annotated one) and bounce distance (the predicted point lies strictly
within a pixel tolerance of the annotated bounce). Samples carry a
"normal" or "confusing" tag -- a bounce near a line is confusing -- and
success ratios are reported per tag and overall.
"""

from __future__ import annotations

import csv
import enum
import json
import os
from dataclasses import dataclass, field

import math

from .errors import EmptyInputError, MissingGroundTruthError


class JudgeMode(enum.Enum):
    CALL_MATCH = "call_match"
    DISTANCE = "distance"


@dataclass(frozen=True)
class EvalConfig:
    tolerance_px: float = 5.0
    mode: JudgeMode = JudgeMode.CALL_MATCH

    def __post_init__(self):
        if self.tolerance_px <= 0:
            raise ValueError("tolerance_px must be > 0")


@dataclass(frozen=True)
class SampleAnnotation:
    """One annotated sample: where its data lives and what the truth is."""

    id: str
    source: str  # frames directory or detections JSON file
    court: str   # path to the court spec
    gt_call: str
    gt_bounce: tuple[float, float] | None = None
    tag: str = "normal"

    def __post_init__(self):
        if self.gt_call not in ("IN", "OUT"):
            raise ValueError("gt_call must be IN or OUT")
        if self.tag not in ("normal", "confusing"):
            raise ValueError("tag must be normal or confusing")


@dataclass(frozen=True)
class SampleRecord:
    """Judged outcome of one sample."""

    id: str
    tag: str
    correct: int  # 1 or 0
    call: str | None
    gt_call: str
    margin: float | None
    bounce_err: float | None
    error: str | None = None  # pipeline failure reason, counts as incorrect


@dataclass(frozen=True)
class TagStats:
    count: int
    successes: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.count if self.count else 0.0

    @property
    def percent(self) -> str:
        """Success rate as a one-decimal percentage string."""
        return f"{self.success_rate * 100:.1f}%"


@dataclass(frozen=True)
class EvalReport:
    records: tuple[SampleRecord, ...]
    per_tag: dict[str, TagStats]
    total: TagStats
    mode: JudgeMode = JudgeMode.CALL_MATCH
    tolerance_px: float = 5.0
    distance: TagStats | None = field(default=None)  # side-by-side, when
    # every judged sample also carries an annotated bounce point

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode.value,
            "tolerance_px": self.tolerance_px,
            "per_tag": {
                tag: {"count": s.count, "successes": s.successes,
                      "success_rate": s.success_rate, "percent": s.percent}
                for tag, s in sorted(self.per_tag.items())
            },
            "total": {"count": self.total.count,
                      "successes": self.total.successes,
                      "success_rate": self.total.success_rate,
                      "percent": self.total.percent},
            "records": [
                {"id": r.id, "tag": r.tag, "correct": r.correct,
                 "call": r.call, "gt_call": r.gt_call, "margin": r.margin,
                 "bounce_err": r.bounce_err, "error": r.error}
                for r in self.records
            ],
        }
        if self.distance is not None:
            out["distance"] = {
                "count": self.distance.count,
                "successes": self.distance.successes,
                "success_rate": self.distance.success_rate,
                "percent": self.distance.percent,
            }
        return out


def judge_sample(
    predicted_call: str,
    predicted_point: tuple[float, float],
    annotation: SampleAnnotation,
    cfg: EvalConfig,
) -> int:
    """Return 1 for a correct sample, 0 otherwise.

    CALL_MATCH: the predicted call equals the annotated one. DISTANCE: the
    Euclidean distance to the annotated bounce is strictly below the
    tolerance (a distance exactly equal to it fails).
    """
    if cfg.mode is JudgeMode.CALL_MATCH:
        return int(predicted_call == annotation.gt_call)
    if annotation.gt_bounce is None:
        raise MissingGroundTruthError(
            f"sample {annotation.id!r} has no annotated bounce point")
    d = math.dist(predicted_point, annotation.gt_bounce)
    return int(d < cfg.tolerance_px)


def aggregate(
    records: list[SampleRecord],
    mode: JudgeMode = JudgeMode.CALL_MATCH,
    tolerance_px: float = 5.0,
) -> EvalReport:
    """Fold judged records into per-tag and total success ratios."""
    if not records:
        raise EmptyInputError("no records to aggregate")
    ordered = tuple(sorted(records, key=lambda r: r.id))
    per_tag: dict[str, TagStats] = {}
    for tag in sorted({r.tag for r in ordered}):
        sub = [r for r in ordered if r.tag == tag]
        per_tag[tag] = TagStats(len(sub), sum(r.correct for r in sub))
    total = TagStats(len(ordered), sum(r.correct for r in ordered))

    distance = None
    with_bounce = [r for r in ordered if r.bounce_err is not None]
    if with_bounce:
        distance = TagStats(
            len(with_bounce),
            sum(1 for r in with_bounce if r.bounce_err < tolerance_px))
    return EvalReport(ordered, per_tag, total, mode, tolerance_px, distance)


# -- manifest and report files -------------------------------------------

def annotation_from_dict(data: dict, base_dir: str = "") -> SampleAnnotation:
    gt_bounce = None
    if data.get("gt_bounce") is not None:
        gt_bounce = (float(data["gt_bounce"][0]), float(data["gt_bounce"][1]))
    return SampleAnnotation(
        id=str(data["id"]),
        source=os.path.join(base_dir, data["source"]),
        court=os.path.join(base_dir, data["court"]),
        gt_call=str(data["gt_call"]),
        gt_bounce=gt_bounce,
        tag=str(data.get("tag", "normal")),
    )


def load_manifest(path: str) -> list[SampleAnnotation]:
    """Read a JSON manifest; relative sources resolve against its directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as f:
        entries = json.load(f)
    return [annotation_from_dict(e, base) for e in entries]


def write_report_json(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_report_csv(report: EvalReport, path: str) -> None:
    """Flat per-sample table for spreadsheet inspection."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "tag", "correct", "call", "gt_call",
                         "margin_px", "bounce_err_px"])
        for r in report.records:
            writer.writerow([
                r.id, r.tag, r.correct,
                r.call if r.call is not None else "",
                r.gt_call,
                repr(r.margin) if r.margin is not None else "",
                repr(r.bounce_err) if r.bounce_err is not None else "",
            ])
