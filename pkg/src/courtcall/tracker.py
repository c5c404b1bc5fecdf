"""Assemble per-frame detections into trajectories and pick the bounce window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import BallDetection
from .errors import TooShortError


@dataclass(frozen=True)
class TrackerConfig:
    max_gap: int = 5          # missing frames tolerated inside one track
    min_track_len: int = 8    # shorter tracks are treated as spurious
    window_before: int = 10   # points kept before the bounce anchor
    window_after: int = 10    # points kept after it

    def __post_init__(self):
        for name in ("max_gap", "min_track_len", "window_before", "window_after"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered ball detections from one continuous track."""

    points: tuple[BallDetection, ...]
    fps: float

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("trajectory needs at least one point")
        indices = [p.frame_index for p in self.points]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.points)

    def xs(self) -> np.ndarray:
        return np.array([p.centroid[0] for p in self.points], float)

    def ys(self) -> np.ndarray:
        return np.array([p.centroid[1] for p in self.points], float)

    def frame_indices(self) -> np.ndarray:
        return np.array([p.frame_index for p in self.points], float)


def assemble(
    detections: list[BallDetection | None],
    cfg: TrackerConfig,
    fps: float = 240.0,
) -> list[Trajectory]:
    """Link frame-ordered detections into trajectories.

    Consecutive detections join the same trajectory unless more than
    max_gap frames are missing between them; trajectories shorter than
    min_track_len points are discarded (insects, shoe flashes and other
    spurious blobs produce short tracks, the ball produces long ones).
    """
    hits = [d for d in detections if d is not None]
    tracks: list[Trajectory] = []
    run: list[BallDetection] = []
    for det in hits:
        if run and det.frame_index - run[-1].frame_index - 1 > cfg.max_gap:
            if len(run) >= cfg.min_track_len:
                tracks.append(Trajectory(tuple(run), fps))
            run = []
        run.append(det)
    if len(run) >= cfg.min_track_len:
        tracks.append(Trajectory(tuple(run), fps))
    return tracks


def select_analysis_window(traj: Trajectory, cfg: TrackerConfig) -> Trajectory:
    """Cut the sub-track around the candidate bounce.

    Image y grows downward, so the bounce vicinity is the global y-maximum
    of the track; that point anchors a window of up to window_before points
    before it and window_after after it (inclusive, clipped at the track
    ends). Anchoring on the y-max is robust to noisy per-frame velocities
    near the bounce.
    """
    if len(traj) < cfg.min_track_len:
        raise TooShortError(
            f"track of {len(traj)} points, need {cfg.min_track_len}")
    anchor = int(np.argmax(traj.ys()))
    lo = max(0, anchor - cfg.window_before)
    hi = min(len(traj), anchor + cfg.window_after + 1)
    return Trajectory(traj.points[lo:hi], traj.fps)
