"""Raster primitives: frame loading, color conversion, morphology, blobs.

Everything here is a pure function of its inputs; frames and masks are thin
wrappers around numpy arrays so the rest of the pipeline can stay explicit
about dimensions and coordinate conventions. Pixel coordinates are (x, y)
with x = column index and y = row index, y growing downward.
"""

from __future__ import annotations

import colorsys
import os
import re
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import (
    FrameDecodeError,
    MissingDirectoryError,
    MissingFramesError,
    MixedDimensionsError,
)

MIN_FRAME_SIDE = 16


@dataclass(frozen=True)
class FrameImage:
    """One video frame: row-major 8-bit RGB plus its position in the clip."""

    pixels: np.ndarray  # (height, width, 3) uint8
    frame_index: int
    timestamp: float  # seconds, frame_index / fps

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError("pixels must be a (h, w, 3) uint8 array")
        if p.shape[0] < MIN_FRAME_SIDE or p.shape[1] < MIN_FRAME_SIDE:
            raise ValueError(f"frame smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel foreground mask with the dimensions of its source frame."""

    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise ValueError("bits must be a (h, w) bool array")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class Blob:
    """A connected foreground region."""

    area: int
    centroid: tuple[float, float]  # (x, y), arithmetic mean of member pixels
    bbox: tuple[int, int, int, int]  # (min_x, min_y, max_x, max_y), inclusive


DEFAULT_FRAME_PATTERN = "frame_%06d.png"

_PERCENT_D = re.compile(r"%(0?)(\d*)d")


def _pattern_to_regex(pattern: str) -> re.Pattern:
    """Turn a printf-style filename template into a regex capturing the index."""
    m = _PERCENT_D.search(pattern)
    if m is None:
        raise ValueError(f"filename template {pattern!r} has no %d field")
    head = re.escape(pattern[: m.start()])
    tail = re.escape(pattern[m.end():])
    return re.compile(f"^{head}(\\d+){tail}$")


def load_image(path: str) -> np.ndarray:
    """Read a raster file as (h, w, 3) uint8 RGB; alpha channels are dropped."""
    bgr = cv2.imread(path, cv2.IMREAD_COLOR)
    if bgr is None:
        raise FrameDecodeError(os.path.basename(path))
    return np.ascontiguousarray(bgr[:, :, ::-1])


def save_image(path: str, rgb: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 RGB array as PNG or binary PPM (P6)."""
    if path.lower().endswith((".ppm", ".pnm")):
        h, w = rgb.shape[:2]
        with open(path, "wb") as f:
            f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            f.write(np.ascontiguousarray(rgb).tobytes())
        return
    ok = cv2.imwrite(path, np.ascontiguousarray(rgb[:, :, ::-1]),
                     [cv2.IMWRITE_PNG_COMPRESSION, 1])
    if not ok:
        raise OSError(f"cannot write image {path!r}")


def load_frame_sequence(
    directory: str,
    pattern: str = DEFAULT_FRAME_PATTERN,
    fps: float = 240.0,
) -> list[FrameImage]:
    """Load every frame matching a numbered filename template.

    Frames are sorted by the index embedded in the filename and keep that
    index, so numbering gaps stay visible to the tracker. Timestamps are
    frame_index / fps.

    Args:
        directory: Directory holding the frame files.
        pattern: printf-style template, e.g. ``frame_%06d.png``. PNG and
            binary PPM files are accepted.
        fps: Capture rate used to assign timestamps.

    Raises:
        MissingDirectoryError: directory does not exist.
        MissingFramesError: no file matches the template.
        MixedDimensionsError: frames differ in size.
        FrameDecodeError: a matching file cannot be decoded.
    """
    if not os.path.isdir(directory):
        raise MissingDirectoryError(f"no such directory: {directory!r}")
    rx = _pattern_to_regex(pattern)
    indexed: list[tuple[int, str]] = []
    for name in os.listdir(directory):
        m = rx.match(name)
        if m:
            indexed.append((int(m.group(1)), name))
    if not indexed:
        raise MissingFramesError(
            f"no files matching {pattern!r} in {directory!r}")
    indexed.sort()

    frames: list[FrameImage] = []
    shape: tuple[int, int] | None = None
    for index, name in indexed:
        rgb = load_image(os.path.join(directory, name))
        if shape is None:
            shape = rgb.shape[:2]
        elif rgb.shape[:2] != shape:
            raise MixedDimensionsError(
                f"{name}: {rgb.shape[1]}x{rgb.shape[0]} differs from "
                f"{shape[1]}x{shape[0]}")
        frames.append(FrameImage(rgb, index, index / fps))
    return frames


def rgb_to_hsv(r: float, g: float, b: float) -> tuple[float, float, float]:
    """Convert one 0..255 RGB triple to (hue degrees [0, 360), sat, val in [0, 1]).

    Hue is 0 by convention when saturation is 0.
    """
    h, s, v = colorsys.rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0)
    return h * 360.0, s, v


def rgb_to_hsv_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorized hexcone conversion of (..., 3) uint8 RGB to (h_deg, s, v)."""
    arr = rgb.astype(np.float64) / 255.0
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    mx = arr.max(axis=-1)
    mn = arr.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.zeros_like(mx)
    rmax = (mx == r) & (delta > 0)
    gmax = (mx == g) & (delta > 0) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    h[rmax] = np.mod((g - b)[rmax] / safe[rmax], 6.0)
    h[gmax] = (b - r)[gmax] / safe[gmax] + 2.0
    h[bmax] = (r - g)[bmax] / safe[bmax] + 4.0
    h *= 60.0
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=-1)


def _square_kernel(radius: int) -> np.ndarray:
    side = 2 * radius + 1
    return np.ones((side, side), np.uint8)


def morph_open_dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Morphological opening followed by one extra dilation, square element.

    Pixels outside the image are treated as background. Radius 0 is the
    identity. The opening removes speckle smaller than the (2r+1)^2 element;
    the trailing dilation restores blob extent lost to the erosion so the
    color filter sees whole blobs.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return BinaryMask(mask.bits.copy())
    kernel = _square_kernel(radius)
    u8 = mask.bits.astype(np.uint8)
    opened = cv2.dilate(
        cv2.erode(u8, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0),
        kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0)
    grown = cv2.dilate(opened, kernel,
                       borderType=cv2.BORDER_CONSTANT, borderValue=0)
    return BinaryMask(grown.astype(bool))


def _labeled_components(mask: BinaryMask) -> tuple[np.ndarray, list[Blob]]:
    """8-connected labeling; returns the label map and blobs sorted by bbox."""
    n, labels, stats, centroids = cv2.connectedComponentsWithStats(
        mask.bits.astype(np.uint8), connectivity=8)
    blobs: list[tuple[tuple[int, int], int, Blob]] = []
    for lbl in range(1, n):
        left = int(stats[lbl, cv2.CC_STAT_LEFT])
        top = int(stats[lbl, cv2.CC_STAT_TOP])
        w = int(stats[lbl, cv2.CC_STAT_WIDTH])
        h = int(stats[lbl, cv2.CC_STAT_HEIGHT])
        blob = Blob(
            area=int(stats[lbl, cv2.CC_STAT_AREA]),
            centroid=(float(centroids[lbl, 0]), float(centroids[lbl, 1])),
            bbox=(left, top, left + w - 1, top + h - 1),
        )
        blobs.append(((top, left), lbl, blob))
    blobs.sort(key=lambda t: t[0])
    # relabel so the returned map matches the returned order (1-based)
    remap = np.zeros(n, np.int32)
    for new_lbl, (_, old_lbl, _) in enumerate(blobs, start=1):
        remap[old_lbl] = new_lbl
    return remap[labels], [b for _, _, b in blobs]


def connected_components(mask: BinaryMask) -> list[Blob]:
    """8-connected foreground blobs with arithmetic-mean centroids.

    Every foreground pixel belongs to exactly one blob; diagonal contact
    joins blobs (a fast ball at high frame rates leaves thin diagonal
    streaks that must stay whole). Blobs are ordered by bounding-box
    (min_y, min_x) for determinism.
    """
    return _labeled_components(mask)[1]
