"""Synthetic rally generator with closed-form bounce ground truth.

Image-space projectile kinematics (y down, gravity positive) with one
ground contact: at the closed-form landing time the vertical speed flips
scaled by the restitution and the horizontal speed is scaled by the
friction factor. The generator is the independent oracle for the bounce
predictor and, through the frame renderer, the end-to-end test bed for the
detector. Everything is a pure function of (params, seed); no wall-clock
entropy anywhere.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .detector import BallDetection
from .errors import NeverLandsError
from .imaging import DEFAULT_FRAME_PATTERN, save_image
from .linecall import CourtLine, CourtLineSpec, call_point

OPTIC_YELLOW = (223, 255, 79)
COURT_GREEN = (70, 96, 58)


@dataclass(frozen=True)
class SynthParams:
    start: tuple[float, float]        # px, image coordinates
    velocity: tuple[float, float]     # px/s, vy > 0 means moving down
    gravity: float                    # px/s^2, positive (image y grows down)
    restitution: float                # vertical speed kept across the bounce
    friction: float                   # horizontal speed kept across the bounce
    ground_y: float                   # px
    n_frames: int
    fps: float = 240.0
    noise_sigma: float = 0.0          # px, per-axis observation noise
    dropout_p: float = 0.0            # chance a frame's observation is missing
    ball_radius: float = 4.0          # px, rendered disc radius
    seed: int = 0
    lead_in_frames: int = 0           # ball-free frames rendered before the rally

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be > 0")
        if not 0.0 < self.restitution <= 1.0:
            raise ValueError("restitution must be in (0, 1]")
        if not 0.0 < self.friction <= 1.0:
            raise ValueError("friction must be in (0, 1]")
        if self.gravity <= 0:
            raise ValueError("gravity must be > 0")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must be in [0, 1]")
        if self.noise_sigma < 0 or self.ball_radius <= 0:
            raise ValueError("noise_sigma >= 0 and ball_radius > 0 required")
        if self.lead_in_frames < 0:
            raise ValueError("lead_in_frames must be >= 0")
        if self.start[1] > self.ground_y:
            raise ValueError("start must be on or above the ground line")


@dataclass(frozen=True)
class GroundTruth:
    bounce_point: tuple[float, float]  # y is exactly ground_y
    bounce_time: float                 # seconds from the first rally frame
    true_call: str | None = None       # set when a court spec is supplied
    margin: float | None = None        # signed px to the decisive line

    def to_dict(self) -> dict:
        return {
            "bounce_point": [self.bounce_point[0], self.bounce_point[1]],
            "bounce_time": self.bounce_time,
            "true_call": self.true_call,
            "margin": self.margin,
        }


def bounce_time(params: SynthParams) -> float:
    """Closed-form first ground contact: root of y0 + vy t + g t^2 / 2 = ground."""
    vy = params.velocity[1]
    drop = params.ground_y - params.start[1]
    disc = vy * vy + 2.0 * params.gravity * drop
    t_b = (-vy + math.sqrt(disc)) / params.gravity
    if t_b > (params.n_frames - 1) / params.fps:
        raise NeverLandsError(
            f"first contact at {t_b:.4f}s is past the last frame")
    return t_b


def generate_trajectory(
    params: SynthParams, court: CourtLineSpec | None = None,
) -> tuple[np.ndarray, list[tuple[float, float] | None], GroundTruth]:
    """Sample the ideal and observed ball path at the frame times.

    Returns (ideal, observed, truth): ideal is an (n_frames, 2) array of
    exact positions at t = k / fps; observed adds per-axis Gaussian noise
    and drops each frame independently with dropout_p, driven entirely by
    the seeded generator. Ground truth never depends on the noise stream.
    """
    t_b = bounce_time(params)
    x0, y0 = params.start
    vx, vy = params.velocity
    g = params.gravity
    x_b = x0 + vx * t_b
    vy_impact = vy + g * t_b
    vx_post = params.friction * vx
    vy_post = -params.restitution * vy_impact

    t = np.arange(params.n_frames) / params.fps
    pre = t < t_b
    dt = t - t_b
    x = np.where(pre, x0 + vx * t, x_b + vx_post * dt)
    y = np.where(pre, y0 + vy * t + 0.5 * g * t * t,
                 params.ground_y + vy_post * dt + 0.5 * g * dt * dt)
    ideal = np.stack([x, y], axis=1)

    rng = np.random.default_rng(params.seed)
    noise = rng.normal(0.0, params.noise_sigma, ideal.shape)
    dropped = rng.random(params.n_frames) < params.dropout_p
    observed: list[tuple[float, float] | None] = []
    noisy = ideal + noise
    for k in range(params.n_frames):
        observed.append(None if dropped[k]
                        else (float(noisy[k, 0]), float(noisy[k, 1])))

    true_call = margin = None
    if court is not None:
        verdict = call_point((x_b, params.ground_y), court, court.delta)
        true_call = verdict.call
        margin = verdict.margin
    truth = GroundTruth((x_b, params.ground_y), t_b, true_call, margin)
    return ideal, observed, truth


def observed_to_detections(
    observed: list[tuple[float, float] | None], params: SynthParams,
) -> list[BallDetection | None]:
    """Wrap observed points as detections for driving the tracker directly."""
    area = int(round(math.pi * params.ball_radius ** 2))
    out: list[BallDetection | None] = []
    for k, obs in enumerate(observed):
        if obs is None:
            out.append(None)
        else:
            out.append(BallDetection(params.lead_in_frames + k, obs, area, 1.0))
    return out


def _draw_disc(img: np.ndarray, center: tuple[float, float], radius: float,
               color: tuple[int, int, int]) -> None:
    """Blend an anti-aliased disc into the image (analytic pixel coverage)."""
    h, w = img.shape[:2]
    cx, cy = center
    x0 = max(0, int(math.floor(cx - radius - 2)))
    x1 = min(w - 1, int(math.ceil(cx + radius + 2)))
    y0 = max(0, int(math.floor(cy - radius - 2)))
    y1 = min(h - 1, int(math.ceil(cy + radius + 2)))
    if x0 > x1 or y0 > y1:
        return
    xs = np.arange(x0, x1 + 1, dtype=float)
    ys = np.arange(y0, y1 + 1, dtype=float)
    dist = np.hypot(xs[None, :] - cx, ys[:, None] - cy)
    cov = np.clip(radius + 0.5 - dist, 0.0, 1.0)[..., None]
    region = img[y0:y1 + 1, x0:x1 + 1].astype(float)
    tint = np.asarray(color, float)
    img[y0:y1 + 1, x0:x1 + 1] = np.round(
        region * (1.0 - cov) + tint * cov).astype(np.uint8)


def render_frames(
    params: SynthParams,
    background: tuple[int, int, int],
    out_dir: str,
    *,
    width: int = 320,
    height: int = 240,
    court: CourtLineSpec | None = None,
    image_format: str = "png",
    pattern: str = DEFAULT_FRAME_PATTERN,
) -> GroundTruth:
    """Render the rally to numbered frame files plus a ground-truth file.

    Each observed point becomes an anti-aliased optic-yellow disc on the
    solid background; dropped frames and the lead-in contain background
    only. Output is byte-identical for identical (params, seed).
    """
    if image_format not in ("png", "ppm"):
        raise ValueError("image_format must be 'png' or 'ppm'")
    _, observed, truth = generate_trajectory(params, court)
    os.makedirs(out_dir, exist_ok=True)
    stem = pattern.rsplit(".", 1)[0]
    name_fmt = f"{stem}.{image_format}"
    blank = np.empty((height, width, 3), np.uint8)
    blank[:, :] = background
    for k in range(params.lead_in_frames + params.n_frames):
        img = blank.copy()
        j = k - params.lead_in_frames
        if j >= 0 and observed[j] is not None:
            _draw_disc(img, observed[j], params.ball_radius, OPTIC_YELLOW)
        save_image(os.path.join(out_dir, name_fmt % k), img)
    with open(os.path.join(out_dir, "ground_truth.json"), "w",
              encoding="utf-8") as f:
        json.dump(truth.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return truth


def load_ground_truth(path: str) -> GroundTruth:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    return GroundTruth(
        (float(data["bounce_point"][0]), float(data["bounce_point"][1])),
        float(data["bounce_time"]),
        data.get("true_call"),
        data.get("margin"),
    )


# -- randomized rally construction --------------------------------------------

@dataclass(frozen=True)
class RallySample:
    """One generated rally: kinematics, a court line placed at a known margin,
    the resulting tag, and the closed-form ground truth."""

    params: SynthParams
    court: CourtLineSpec
    tag: str  # "confusing" when |margin| <= 3 px, else "normal"
    truth: GroundTruth


CONFUSING_MARGIN_PX = 3.0


def random_rally(
    seed: int,
    *,
    width: int = 320,
    height: int = 240,
    noise_sigma: float = 1.0,
    dropout_p: float = 0.05,
    confusing_rate: float = 0.05,
    lead_in_frames: int = 30,
    ball_radius: float = 4.0,
) -> RallySample:
    """Draw one bounded, fully in-frame rally with a line at a known margin.

    Kinematic draws are rejected (deterministically, from the same stream)
    until the ball spends at least 14 frames in flight before the bounce, so
    the analysis window always has a full descending side. The court line is
    a vertical segment placed so the true bounce margin equals the drawn
    value: a confusing_rate fraction of seeds draws |margin| <= 3 px, the
    rest draws |margin| in [5, 60] px with random side and direction.
    """
    rng = np.random.default_rng([seed, 1])
    edge = ball_radius + 10.0
    fps = 240.0
    frames_after = 16

    for _ in range(200):
        ground_y = rng.uniform(150.0, min(200.0, height - ball_radius - 4))
        drop = rng.uniform(60.0, min(110.0, ground_y - edge))
        vy0 = rng.uniform(500.0, 1200.0)
        gravity = rng.uniform(1800.0, 3600.0)
        t_b = (-vy0 + math.sqrt(vy0 * vy0 + 2 * gravity * drop)) / gravity
        if 14 <= t_b * fps <= 45:
            break
    else:  # pragma: no cover - parameter ranges make this unreachable
        raise RuntimeError("could not draw rally kinematics")

    restitution = rng.uniform(0.55, 0.85)
    friction = rng.uniform(0.75, 0.95)
    n_frames = int(math.ceil(t_b * fps)) + frames_after

    speed = rng.uniform(520.0, 800.0)
    direction = 1.0 if rng.random() < 0.5 else -1.0
    vx = direction * speed
    total_t = (n_frames - 1) / fps
    span = speed * (t_b + friction * (total_t - t_b))
    if direction > 0:
        x0 = rng.uniform(edge, width - edge - span)
    else:
        x0 = rng.uniform(edge + span, width - edge)

    if rng.random() < confusing_rate:
        margin = rng.uniform(-CONFUSING_MARGIN_PX, CONFUSING_MARGIN_PX)
    else:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        margin = sign * rng.uniform(5.0, 60.0)
    tag = "confusing" if abs(margin) <= CONFUSING_MARGIN_PX else "normal"

    params = SynthParams(
        start=(x0, ground_y - drop),
        velocity=(vx, vy0),
        gravity=gravity,
        restitution=restitution,
        friction=friction,
        ground_y=ground_y,
        n_frames=n_frames,
        fps=fps,
        noise_sigma=noise_sigma,
        dropout_p=dropout_p,
        ball_radius=ball_radius,
        seed=seed,
        lead_in_frames=lead_in_frames,
    )

    x_b = x0 + vx * t_b
    thickness = 4.0
    in_side_left = rng.random() < 0.5
    if in_side_left:
        # in-bounds is the smaller-x side of a downward-directed line
        line_x = x_b + margin - thickness / 2.0
        in_side = 1
    else:
        line_x = x_b - margin + thickness / 2.0
        in_side = -1
    line = CourtLine("sideline", (line_x, ground_y - 50.0),
                     (line_x, ground_y + 30.0), thickness, in_side)
    court = CourtLineSpec((line,), delta=0.0)

    _, _, truth = generate_trajectory(params, court)
    return RallySample(params, court, tag, truth)
