"""Two-stage ball locator.

Stage one separates moving foreground from a per-pixel Gaussian-mixture
background model updated online. Stage two filters the foreground blobs by
mean color (HSV gates) and by area, which removes large movers such as
players, then a gating step picks the single blob that continues the track.

The mixture update is a sequential fold over frames: frame order is
semantically significant. Within one frame every pixel is independent, so
the kernel is free to process pixels in any order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .errors import DimensionMismatchError
from .imaging import (
    BinaryMask,
    Blob,
    FrameImage,
    _labeled_components,
    morph_open_dilate,
    rgb_to_hsv_array,
)

logger = logging.getLogger(__name__)

# Frames a track prediction stays usable after the last accepted detection.
COAST_FRAMES = 8


@dataclass(frozen=True)
class BackgroundParams:
    """Gaussian-mixture model parameters (standard adaptive-MOG settings)."""

    max_modes: int = 5
    learning_rate: float = 0.005
    background_ratio: float = 0.7  # cumulative weight that counts as background
    match_sigmas: float = 2.5      # match distance in standard deviations
    var_init: float = 225.0        # variance given to a newly spawned mode
    var_min: float = 4.0

    def __post_init__(self):
        if self.max_modes < 1:
            raise ValueError("max_modes must be >= 1")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError("learning_rate must be in (0, 1)")
        if not 0.0 < self.background_ratio < 1.0:
            raise ValueError("background_ratio must be in (0, 1)")
        if self.var_min <= 0 or self.var_init < self.var_min:
            raise ValueError("need 0 < var_min <= var_init")


@dataclass(frozen=True)
class DetectorConfig:
    """Color, area, morphology and gating settings for the two-stage filter.

    Area bounds are fractions of the frame area so one config scales across
    resolutions; the ball occupies a tiny image fraction at court distance.
    """

    hue_range: tuple[float, float] = (25.0, 95.0)  # degrees, optic yellow
    sat_min: float = 0.25
    val_min: float = 0.25
    area_range: tuple[float, float] = (5e-6, 5e-4)  # fractions of frame area
    morph_radius: int = 1
    gate_radius: float = 25.0  # px, search radius around the track prediction
    warmup_frames: int = 30
    background: BackgroundParams = field(default_factory=BackgroundParams)

    def __post_init__(self):
        if not self.hue_range[0] < self.hue_range[1]:
            raise ValueError("hue_range must be increasing")
        if not self.area_range[0] < self.area_range[1]:
            raise ValueError("area_range must be increasing")
        if self.warmup_frames < 1:
            raise ValueError("warmup_frames must be >= 1")
        if self.morph_radius < 0:
            raise ValueError("morph_radius must be >= 0")
        if self.gate_radius <= 0:
            raise ValueError("gate_radius must be > 0")


@dataclass(frozen=True)
class BallDetection:
    """One per-frame ball fix: sub-pixel centroid plus a selection score."""

    frame_index: int
    centroid: tuple[float, float]
    area: int
    score: float


class BackgroundModel:
    """Per-pixel mixture state: up to K (weight, RGB mean, shared variance) modes.

    Modes are stored sorted by weight / sqrt(variance) descending; unused
    slots carry weight 0 and sink to the end. Weights are renormalized to
    sum to 1 after every update.
    """

    def __init__(self, width: int, height: int,
                 params: BackgroundParams | None = None):
        self.params = params or BackgroundParams()
        k = self.params.max_modes
        self.width = width
        self.height = height
        self.weights = np.zeros((height, width, k), np.float32)
        self.means = np.zeros((height, width, k, 3), np.float32)
        self.variances = np.full((height, width, k), self.params.var_init,
                                 np.float32)
        self.frames_seen = 0


@njit(cache=True, inline="always")
def _swap_modes(weights, means, variances, row, col, i, j):  # pragma: no cover
    weights[row, col, i], weights[row, col, j] = (
        weights[row, col, j], weights[row, col, i])
    variances[row, col, i], variances[row, col, j] = (
        variances[row, col, j], variances[row, col, i])
    for c in range(3):
        means[row, col, i, c], means[row, col, j, c] = (
            means[row, col, j, c], means[row, col, i, c])


@njit(cache=True, parallel=True)
def _mog_step(frame, weights, means, variances, alpha, match2, bg_ratio,
              var_init, var_min, fg):  # pragma: no cover - jitted
    height, width, k_modes = weights.shape
    decay = np.float32(1.0) - alpha
    for row in prange(height):
        for col in range(width):
            r = np.float32(frame[row, col, 0])
            g = np.float32(frame[row, col, 1])
            b = np.float32(frame[row, col, 2])

            # first mode (in fitness order) within match2 * variance
            matched = -1
            d2m = np.float32(0.0)
            for k in range(k_modes):
                if weights[row, col, k] <= np.float32(0.0):
                    continue
                dr = r - means[row, col, k, 0]
                dg = g - means[row, col, k, 1]
                db = b - means[row, col, k, 2]
                d2 = dr * dr + dg * dg + db * db
                if d2 < match2 * variances[row, col, k]:
                    matched = k
                    d2m = d2
                    break

            if matched >= 0:
                changed = matched
                means[row, col, changed, 0] += alpha * (r - means[row, col, changed, 0])
                means[row, col, changed, 1] += alpha * (g - means[row, col, changed, 1])
                means[row, col, changed, 2] += alpha * (b - means[row, col, changed, 2])
                v = decay * variances[row, col, changed] + alpha * d2m
                if v < var_min:
                    v = var_min
                variances[row, col, changed] = v
            else:
                changed = 0
                for k in range(1, k_modes):
                    if weights[row, col, k] < weights[row, col, changed]:
                        changed = k
                weights[row, col, changed] = np.float32(0.0)  # alpha added below
                means[row, col, changed, 0] = r
                means[row, col, changed, 1] = g
                means[row, col, changed, 2] = b
                variances[row, col, changed] = var_init

            # decay unmatched weights, lift the changed mode by alpha
            # (w*(1-a) + a == w + a*(1-w)), renormalize; single pass
            tot = np.float32(0.0)
            for k in range(k_modes):
                w = weights[row, col, k] * decay
                if k == changed:
                    w += alpha
                weights[row, col, k] = w
                tot += w
            inv = np.float32(1.0) / tot
            for k in range(k_modes):
                weights[row, col, k] *= inv

            # modes stay sorted by weight / sqrt(variance) descending; the
            # uniform decay cannot reorder unchanged modes, so reinserting
            # the changed slot restores the invariant. Comparisons use
            # w_i^2 * v_j vs w_j^2 * v_i to avoid divisions; strict
            # inequalities keep ties stable.
            pos = changed
            while pos > 0:
                wa = weights[row, col, pos]
                wb = weights[row, col, pos - 1]
                if (wa * wa * variances[row, col, pos - 1]
                        <= wb * wb * variances[row, col, pos]):
                    break
                _swap_modes(weights, means, variances, row, col, pos, pos - 1)
                pos -= 1
            while pos < k_modes - 1:
                wa = weights[row, col, pos]
                wb = weights[row, col, pos + 1]
                if (wa * wa * variances[row, col, pos + 1]
                        >= wb * wb * variances[row, col, pos]):
                    break
                _swap_modes(weights, means, variances, row, col, pos, pos + 1)
                pos += 1

            # background set: smallest prefix with cumulative weight > ratio
            n_bg = k_modes
            cum = np.float32(0.0)
            for k in range(k_modes):
                cum += weights[row, col, k]
                if cum > bg_ratio:
                    n_bg = k + 1
                    break

            if matched < 0 or pos >= n_bg:
                fg[row, col] = 1
            else:
                fg[row, col] = 0


def bg_update_and_classify(
    model: BackgroundModel, frame: FrameImage,
) -> tuple[BackgroundModel, BinaryMask]:
    """Fold one frame into the background model and classify its pixels.

    Per pixel: the first stored mode whose squared RGB distance to the
    sample is below match_sigmas^2 * variance absorbs the sample (weight
    raised by learning_rate * (1 - w), mean and variance moved toward the
    sample at the learning rate); with no match the lowest-weight mode is
    replaced by a fresh (learning_rate, sample, var_init) mode. Unmatched
    weights decay by (1 - learning_rate), weights are renormalized, and
    modes re-sorted by weight / sqrt(variance). A pixel is foreground iff
    no mode matched or the matched mode fell outside the smallest prefix
    whose cumulative weight exceeds background_ratio. The model updates
    regardless of the classification; `model` is mutated and returned.
    """
    if (frame.height, frame.width) != (model.height, model.width):
        raise DimensionMismatchError(
            f"frame {frame.width}x{frame.height} vs model "
            f"{model.width}x{model.height}")
    p = model.params
    fg = np.empty((model.height, model.width), np.uint8)
    _mog_step(
        frame.pixels, model.weights, model.means, model.variances,
        np.float32(p.learning_rate),
        np.float32(p.match_sigmas * p.match_sigmas),
        np.float32(p.background_ratio),
        np.float32(p.var_init), np.float32(p.var_min), fg)
    model.frames_seen += 1
    return model, BinaryMask(fg.astype(bool))


def color_area_filter(
    frame: FrameImage, mask: BinaryMask, cfg: DetectorConfig,
) -> list[Blob]:
    """Stage two: keep cleaned foreground blobs that look like a ball.

    The mask is opened and dilated first, then a component survives iff its
    mean HSV over member pixels falls inside the hue/saturation/value gates
    and its area lies inside area_range * frame area. The area gate is what
    discards players and other large movers.
    """
    if not mask.bits.any():
        return []
    cleaned = morph_open_dilate(mask, cfg.morph_radius)
    labels, blobs = _labeled_components(cleaned)
    frame_area = frame.width * frame.height
    a_lo = cfg.area_range[0] * frame_area
    a_hi = cfg.area_range[1] * frame_area
    kept: list[Blob] = []
    for lbl, blob in enumerate(blobs, start=1):
        if not a_lo <= blob.area <= a_hi:
            continue
        x0, y0, x1, y1 = blob.bbox
        window = labels[y0:y1 + 1, x0:x1 + 1] == lbl
        member_rgb = frame.pixels[y0:y1 + 1, x0:x1 + 1][window]
        h, s, v = rgb_to_hsv_array(member_rgb).mean(axis=0)
        if (cfg.hue_range[0] <= h <= cfg.hue_range[1]
                and s >= cfg.sat_min and v >= cfg.val_min):
            kept.append(blob)
    return kept


def select_ball(
    blobs: list[Blob],
    predicted: tuple[float, float] | None,
    cfg: DetectorConfig,
    *,
    frame_index: int,
    frame_area: int,
) -> BallDetection | None:
    """Pick at most one surviving blob as the ball for this frame.

    With a track prediction the nearest blob within gate_radius wins and is
    scored 1 - distance / gate_radius; with no prediction the blob whose
    area is closest to the midpoint of the configured area range wins with
    score 0.5. Returns None when no candidate qualifies.
    """
    if not blobs:
        return None
    if predicted is not None:
        px, py = predicted
        best: tuple[float, Blob] | None = None
        for blob in blobs:
            d = float(np.hypot(blob.centroid[0] - px, blob.centroid[1] - py))
            if d <= cfg.gate_radius and (best is None or d < best[0]):
                best = (d, blob)
        if best is None:
            return None
        d, blob = best
        return BallDetection(frame_index, blob.centroid, blob.area,
                             1.0 - d / cfg.gate_radius)
    mid = 0.5 * (cfg.area_range[0] + cfg.area_range[1]) * frame_area
    blob = min(blobs, key=lambda b: abs(b.area - mid))
    return BallDetection(frame_index, blob.centroid, blob.area, 0.5)


def detect_sequence(
    frames: list[FrameImage], cfg: DetectorConfig,
) -> list[BallDetection | None]:
    """Run the full two-stage detector over a frame sequence.

    The first warmup_frames frames only feed the background model; their
    detections are suppressed (None). Afterwards each frame yields either a
    BallDetection or None. A short constant-velocity extrapolation of the
    last two accepted detections supplies the gate prediction.
    """
    if not frames:
        return []
    model = BackgroundModel(frames[0].width, frames[0].height, cfg.background)
    frame_area = frames[0].width * frames[0].height
    out: list[BallDetection | None] = []
    prev: BallDetection | None = None
    last: BallDetection | None = None
    for pos, frame in enumerate(frames):
        model, mask = bg_update_and_classify(model, frame)
        if pos < cfg.warmup_frames:
            out.append(None)
            continue
        blobs = color_area_filter(frame, mask, cfg)
        predicted = _predict_position(prev, last, frame.frame_index)
        det = select_ball(blobs, predicted, cfg,
                          frame_index=frame.frame_index,
                          frame_area=frame_area)
        out.append(det)
        if det is not None:
            prev, last = last, det
    n_hits = sum(1 for d in out if d is not None)
    logger.debug("detector: %d hits over %d frames", n_hits, len(frames))
    return out


def _predict_position(
    prev: BallDetection | None, last: BallDetection | None, frame_index: int,
) -> tuple[float, float] | None:
    if last is None or frame_index - last.frame_index > COAST_FRAMES:
        return None
    if prev is None or last.frame_index - prev.frame_index > COAST_FRAMES:
        return last.centroid
    dt = last.frame_index - prev.frame_index
    vx = (last.centroid[0] - prev.centroid[0]) / dt
    vy = (last.centroid[1] - prev.centroid[1]) / dt
    ahead = frame_index - last.frame_index
    return (last.centroid[0] + vx * ahead, last.centroid[1] + vy * ahead)


# -- detection record stream ---------------------------------------------

def detections_to_dict(
    detections: list[BallDetection | None],
    frame_indices: list[int],
    fps: float,
    width: int,
    height: int,
) -> dict:
    """Serialize per-frame detections (misses explicit) for the analyze path."""
    if len(detections) != len(frame_indices):
        raise ValueError("detections and frame_indices length mismatch")
    records = []
    for fi, det in zip(frame_indices, detections):
        if det is None:
            records.append({"frame_index": fi, "miss": True})
        else:
            records.append({
                "frame_index": det.frame_index,
                "x": det.centroid[0],
                "y": det.centroid[1],
                "area": det.area,
                "score": det.score,
            })
    return {"fps": fps, "width": width, "height": height, "frames": records}


def detections_from_dict(data: dict) -> list[BallDetection | None]:
    """Inverse of detections_to_dict; returns one entry per recorded frame."""
    out: list[BallDetection | None] = []
    for rec in data["frames"]:
        if rec.get("miss"):
            out.append(None)
        else:
            out.append(BallDetection(
                int(rec["frame_index"]),
                (float(rec["x"]), float(rec["y"])),
                int(rec["area"]),
                float(rec["score"]),
            ))
    return out
