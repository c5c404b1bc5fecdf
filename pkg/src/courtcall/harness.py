"""Pipeline composition: configuration, end-to-end runs, overlay rendering.

One structured config file drives every stage so evaluation runs are
reproducible; unknown keys are rejected to catch typos. The pipeline is
deterministic: identical inputs and config produce identical results.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import cv2
import numpy as np

from .bounce import BounceConfig, BouncePrediction, FitAxis, predict_bounce
from .detector import (
    BackgroundParams,
    BallDetection,
    DetectorConfig,
    detect_sequence,
    detections_from_dict,
    detections_to_dict,
)
from .errors import ConfigError, DetectorFailedError
from .evaluation import (
    EvalConfig,
    EvalReport,
    JudgeMode,
    SampleAnnotation,
    SampleRecord,
    aggregate,
    judge_sample,
)
from .imaging import DEFAULT_FRAME_PATTERN, FrameImage, load_frame_sequence, save_image
from .linecall import CourtLineSpec, Verdict, call, load_court
from .tracker import Trajectory, TrackerConfig, assemble, select_analysis_window

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    fps: float = 240.0
    frame_pattern: str = DEFAULT_FRAME_PATTERN
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    bounce: BounceConfig = field(default_factory=BounceConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    court: str | None = None  # path to the court spec file

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be > 0")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one end-to-end run, with per-stage wall times."""

    sample_id: str
    n_detections: int
    track_len: int
    prediction: BouncePrediction
    verdict: Verdict
    timings_ms: dict[str, float]
    window: Trajectory | None = None  # analysis window, kept for overlays

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "detections": self.n_detections,
            "trajectory_len": self.track_len,
            "prediction": self.prediction.to_dict(),
            "verdict": self.verdict.to_dict(),
            "timings_ms": self.timings_ms,
        }


# -- configuration loading -----------------------------------------------

def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown config key(s) {sorted(unknown)} in {where}")


def _pair(value, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{where} must be a [lo, hi] pair")
    return float(value[0]), float(value[1])


def _background_from_dict(data: dict) -> BackgroundParams:
    _check_keys(data, {"max_modes", "learning_rate", "background_ratio",
                       "match_sigmas", "var_init", "var_min"},
                "detector.background")
    base = BackgroundParams()
    return BackgroundParams(
        max_modes=int(data.get("max_modes", base.max_modes)),
        learning_rate=float(data.get("learning_rate", base.learning_rate)),
        background_ratio=float(data.get("background_ratio",
                                        base.background_ratio)),
        match_sigmas=float(data.get("match_sigmas", base.match_sigmas)),
        var_init=float(data.get("var_init", base.var_init)),
        var_min=float(data.get("var_min", base.var_min)),
    )


def _detector_from_dict(data: dict) -> DetectorConfig:
    _check_keys(data, {"hue_range", "sat_min", "val_min", "area_range",
                       "morph_radius", "gate_radius", "warmup_frames",
                       "background"}, "detector")
    base = DetectorConfig()
    return DetectorConfig(
        hue_range=_pair(data["hue_range"], "detector.hue_range")
        if "hue_range" in data else base.hue_range,
        sat_min=float(data.get("sat_min", base.sat_min)),
        val_min=float(data.get("val_min", base.val_min)),
        area_range=_pair(data["area_range"], "detector.area_range")
        if "area_range" in data else base.area_range,
        morph_radius=int(data.get("morph_radius", base.morph_radius)),
        gate_radius=float(data.get("gate_radius", base.gate_radius)),
        warmup_frames=int(data.get("warmup_frames", base.warmup_frames)),
        background=_background_from_dict(data.get("background", {})),
    )


def _tracker_from_dict(data: dict) -> TrackerConfig:
    _check_keys(data, {"max_gap", "min_track_len", "window_before",
                       "window_after"}, "tracker")
    base = TrackerConfig()
    return TrackerConfig(
        max_gap=int(data.get("max_gap", base.max_gap)),
        min_track_len=int(data.get("min_track_len", base.min_track_len)),
        window_before=int(data.get("window_before", base.window_before)),
        window_after=int(data.get("window_after", base.window_after)),
    )


def _bounce_from_dict(data: dict) -> BounceConfig:
    _check_keys(data, {"velocity_threshold", "anchor_window",
                       "max_uncertain", "search"}, "bounce")
    base = BounceConfig()
    return BounceConfig(
        velocity_threshold=float(data.get("velocity_threshold",
                                          base.velocity_threshold)),
        anchor_window=int(data.get("anchor_window", base.anchor_window)),
        max_uncertain=int(data.get("max_uncertain", base.max_uncertain)),
        search=str(data.get("search", base.search)),
    )


def _eval_from_dict(data: dict) -> EvalConfig:
    _check_keys(data, {"tolerance_px", "mode"}, "eval")
    base = EvalConfig()
    mode = data.get("mode", base.mode.value)
    try:
        mode = JudgeMode(mode)
    except ValueError as e:
        raise ConfigError(f"eval.mode must be one of "
                          f"{[m.value for m in JudgeMode]}") from e
    return EvalConfig(
        tolerance_px=float(data.get("tolerance_px", base.tolerance_px)),
        mode=mode,
    )


def config_from_dict(data: dict) -> PipelineConfig:
    _check_keys(data, {"fps", "frame_pattern", "detector", "tracker",
                       "bounce", "eval", "court"}, "config root")
    base = PipelineConfig()
    try:
        return PipelineConfig(
            fps=float(data.get("fps", base.fps)),
            frame_pattern=str(data.get("frame_pattern", base.frame_pattern)),
            detector=_detector_from_dict(data.get("detector", {})),
            tracker=_tracker_from_dict(data.get("tracker", {})),
            bounce=_bounce_from_dict(data.get("bounce", {})),
            eval=_eval_from_dict(data.get("eval", {})),
            court=data.get("court"),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid config value: {e}") from e


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values parse as JSON, else string."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a scalar")
        node[parts[-1]] = value
    return data


def load_config(path: str | None, overrides: list[str] | None = None,
                ) -> PipelineConfig:
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


# -- pipeline ------------------------------------------------------------

def _pick_track(tracks: list[Trajectory]) -> Trajectory:
    return max(tracks, key=len)  # ties keep the earliest track


def _predict_from_detections(
    detections: list[BallDetection | None],
    fps: float,
    frame_size: tuple[int, int] | None,
    cfg: PipelineConfig,
) -> tuple[BouncePrediction, Trajectory, int]:
    tracks = assemble(detections, cfg.tracker, fps)
    if not tracks:
        raise DetectorFailedError("no track assembled from detections")
    track = _pick_track(tracks)
    window = select_analysis_window(track, cfg.tracker)
    prediction = predict_bounce(window, cfg.bounce, frame_size)
    return prediction, window, len(track)


def run_pipeline(
    frames_dir: str,
    cfg: PipelineConfig,
    court: CourtLineSpec | None = None,
    sample_id: str = "",
) -> RunResult:
    """Frames in, verdict out: detect, track, window, predict, call.

    The court spec comes from `court` or, when absent, from the path in the
    config. Per-stage wall time is recorded in milliseconds.
    """
    if court is None:
        if cfg.court is None:
            raise ConfigError("no court spec: pass one or set config.court")
        court = load_court(cfg.court)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    frames = load_frame_sequence(frames_dir, cfg.frame_pattern, cfg.fps)
    timings["load"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    detections = detect_sequence(frames, cfg.detector)
    timings["detect"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    frame_size = (frames[0].width, frames[0].height)
    prediction, window, track_len = _predict_from_detections(
        detections, cfg.fps, frame_size, cfg)
    timings["predict"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    verdict = call(prediction, court, court.delta)
    timings["call"] = (time.perf_counter() - t0) * 1e3

    n_hits = sum(1 for d in detections if d is not None)
    logger.debug("%s: %d detections, track %d, %s margin %.2f",
                 sample_id or frames_dir, n_hits, track_len, verdict.call,
                 verdict.margin)
    return RunResult(sample_id or os.path.basename(frames_dir.rstrip("/")),
                     n_hits, track_len, prediction, verdict, timings, window)


def detect_to_file(frames_dir: str, cfg: PipelineConfig, out_path: str) -> int:
    """Run stage one + two only and write the detection record stream."""
    frames = load_frame_sequence(frames_dir, cfg.frame_pattern, cfg.fps)
    detections = detect_sequence(frames, cfg.detector)
    data = detections_to_dict(
        detections, [f.frame_index for f in frames], cfg.fps,
        frames[0].width, frames[0].height)
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return sum(1 for d in detections if d is not None)


def analyze_detections(
    data: dict,
    cfg: PipelineConfig,
    court: CourtLineSpec,
) -> tuple[BouncePrediction, Verdict, Trajectory]:
    """Bounce analysis + verdict from a saved detection record stream."""
    detections = detections_from_dict(data)
    fps = float(data.get("fps", cfg.fps))
    frame_size = None
    if "width" in data and "height" in data:
        frame_size = (int(data["width"]), int(data["height"]))
    prediction, window, _ = _predict_from_detections(
        detections, fps, frame_size, cfg)
    verdict = call(prediction, court, court.delta)
    return prediction, verdict, window


# -- manifest evaluation ---------------------------------------------------

def evaluate_sample(
    annotation: SampleAnnotation, cfg: PipelineConfig,
) -> SampleRecord:
    """Run one annotated sample end to end and judge it.

    A pipeline failure (no track, starved phases, ...) is recorded as an
    incorrect sample with the failure reason, not raised: the harness must
    produce a number for every sample.
    """
    from .errors import CourtCallError, MissingDirectoryError

    court = load_court(annotation.court)
    try:
        if os.path.isdir(annotation.source):
            result = run_pipeline(annotation.source, cfg, court,
                                  sample_id=annotation.id)
            prediction, verdict = result.prediction, result.verdict
        elif os.path.isfile(annotation.source):
            with open(annotation.source, encoding="utf-8") as f:
                data = json.load(f)
            prediction, verdict, _ = analyze_detections(data, cfg, court)
        else:
            raise MissingDirectoryError(
                f"sample source {annotation.source!r} does not exist")
    except CourtCallError as e:
        return SampleRecord(annotation.id, annotation.tag, 0, None,
                            annotation.gt_call, None, None,
                            error=f"{type(e).__name__}: {e}")
    correct = judge_sample(verdict.call, prediction.point, annotation,
                           cfg.eval)
    bounce_err = None
    if annotation.gt_bounce is not None:
        bounce_err = math.dist(prediction.point, annotation.gt_bounce)
    return SampleRecord(annotation.id, annotation.tag, correct, verdict.call,
                        annotation.gt_call, verdict.margin, bounce_err)


def evaluate_manifest(
    annotations: list[SampleAnnotation], cfg: PipelineConfig,
) -> EvalReport:
    """Judge every annotated sample and aggregate, ordered by sample id."""
    records = [evaluate_sample(ann, cfg)
               for ann in sorted(annotations, key=lambda a: a.id)]
    return aggregate(records, cfg.eval.mode, cfg.eval.tolerance_px)


# -- overlay rendering -----------------------------------------------------

_YELLOW = (255, 255, 0)
_RED = (255, 0, 0)
_BLUE = (0, 0, 255)
_WHITE = (255, 255, 255)


def _curve_points(fit, u_lo: float, u_hi: float, axis: FitAxis,
                  x_of_u: tuple[float, float] | None) -> np.ndarray:
    u = np.arange(u_lo, u_hi + 1.0, 1.0)
    y = fit.evaluate(u)
    x = u if axis is FitAxis.IMAGE_X else x_of_u[0] * u + x_of_u[1]
    pts = np.stack([x, y], axis=1)
    pts = np.clip(pts, -30000, 30000)
    return np.round(pts).astype(np.int32).reshape(-1, 1, 2)


def render_overlay(
    frame: FrameImage,
    window: Trajectory,
    prediction: BouncePrediction,
    verdict: Verdict,
    path: str | None = None,
) -> np.ndarray:
    """Draw detections, both fitted curves, the bounce point and the call.

    Detections are yellow dots, the two fits red polylines sampled at 1
    abscissa-unit steps across the window, the predicted bounce a blue
    cross, and the verdict plus margin is stamped in the top-left corner.
    Output dimensions equal the input frame.
    """
    img = frame.pixels.copy()
    if prediction.fits is not None:
        u_lo = float(np.min(window.xs() if prediction.axis is FitAxis.IMAGE_X
                            else window.frame_indices()))
        u_hi = float(np.max(window.xs() if prediction.axis is FitAxis.IMAGE_X
                            else window.frame_indices()))
        for fit in prediction.fits:
            pts = _curve_points(fit, u_lo, u_hi, prediction.axis,
                                prediction.x_of_u)
            cv2.polylines(img, [pts], False, _RED, 1, cv2.LINE_8)
    for det in window.points:
        cx, cy = int(round(det.centroid[0])), int(round(det.centroid[1]))
        cv2.circle(img, (cx, cy), 2, _YELLOW, -1, cv2.LINE_8)
    bx, by = (int(round(prediction.point[0])), int(round(prediction.point[1])))
    cv2.line(img, (bx - 5, by), (bx + 5, by), _BLUE, 1, cv2.LINE_8)
    cv2.line(img, (bx, by - 5), (bx, by + 5), _BLUE, 1, cv2.LINE_8)
    tag = "" if prediction.confident else " (fallback)"
    cv2.putText(img, f"{verdict.call} margin {verdict.margin:+.1f}px{tag}",
                (6, 16), cv2.FONT_HERSHEY_SIMPLEX, 0.4, _WHITE, 1,
                cv2.LINE_8)
    if path is not None:
        save_image(path, img)
    return img
