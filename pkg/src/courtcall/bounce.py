"""Bounce-point prediction by minimum fitting loss over uncertain points.

The analysis window is split into a descending phase (before ground
contact) and an ascending phase (after it). Points whose phase cannot be
decided from local vertical velocity are marked uncertain; every feasible
way of assigning them to the two phases is scored by the pooled mean
squared error of two least-squares quadratics, and the assignment with the
smallest error wins. The bounce point is the in-bracket intersection of
the two winning curves.

Image y grows downward, so "descending" means y increasing over time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    AnalysisFailedError,
    DegenerateFitError,
    IdenticalCurvesError,
    NoFeasibleAssignmentError,
    NoIntersectionError,
    PhaseStarvedError,
    TooShortError,
)
from .tracker import Trajectory

MIN_WINDOW_POINTS = 7
MIN_PHASE_POINTS = 3
INTERSECT_MARGIN = 2.0  # abscissa units added on both sides of the bracket
# x-span per point above which y is fitted against image x instead of time
X_MODE_SPAN_PER_POINT = 1.5


class Phase(enum.Enum):
    DESCENDING = "descending"
    ASCENDING = "ascending"
    UNCERTAIN = "uncertain"


class FitAxis(enum.Enum):
    """Abscissa the quadratics are fitted against."""

    IMAGE_X = "x"
    TIME = "t"  # frame index


@dataclass(frozen=True)
class BounceConfig:
    velocity_threshold: float = 1.5  # px/frame below which a point is uncertain
    anchor_window: int = 3           # frames around the anchor ruled by position
    max_uncertain: int = 10          # cap on uncertain points (2^k search)
    search: str = "exhaustive"       # or "monotone_split"

    def __post_init__(self):
        if self.velocity_threshold < 0:
            raise ValueError("velocity_threshold must be >= 0")
        if self.anchor_window < 1:
            raise ValueError("anchor_window must be >= 1")
        if not 0 <= self.max_uncertain <= 20:
            raise ValueError("max_uncertain out of range")
        if self.search not in ("exhaustive", "monotone_split"):
            raise ValueError(f"unknown search mode {self.search!r}")


@dataclass(frozen=True)
class PhaseLabeling:
    """Per-point phase labels plus the fitting coordinates of the window."""

    labels: tuple[Phase, ...]
    axis: FitAxis
    u: np.ndarray  # abscissa per point (image x or frame index)
    y: np.ndarray
    x: np.ndarray
    frame_indices: np.ndarray
    anchor: int  # index of the window's y-maximum

    @property
    def uncertain_indices(self) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.labels)
                     if l is Phase.UNCERTAIN)

    def phase_indices(self, phase: Phase) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.labels) if l is phase)


@dataclass(frozen=True)
class Assignment:
    """Resolution of the uncertain points, one bit each in time order.

    Bit j set means the j-th uncertain point joins the ascending phase;
    clear means descending. Exhaustive search enumerates bits 0, 1, 2, ...
    """

    bits: int

    def split(self, labeling: PhaseLabeling) -> tuple[list[int], list[int]]:
        """Point indices of (descending, ascending) under this assignment."""
        desc = list(labeling.phase_indices(Phase.DESCENDING))
        asc = list(labeling.phase_indices(Phase.ASCENDING))
        for j, i in enumerate(labeling.uncertain_indices):
            if self.bits >> j & 1:
                asc.append(i)
            else:
                desc.append(i)
        return sorted(desc), sorted(asc)


@dataclass(frozen=True)
class QuadraticFit:
    """y = a*u^2 + b*u + c with the achieved sum of squared residuals."""

    a: float
    b: float
    c: float
    sse: float
    n: int

    def evaluate(self, u):
        return self.a * u * u + self.b * u + self.c


@dataclass(frozen=True)
class BouncePrediction:
    point: tuple[float, float]
    u_star: float
    assignment: Assignment
    combined_mse: float
    confident: bool  # False when the intersection fell back to the y-max point
    axis: FitAxis
    fits: tuple[QuadraticFit, QuadraticFit] | None = None
    x_of_u: tuple[float, float] | None = None  # (slope, intercept), TIME axis only

    def to_dict(self) -> dict:
        return {
            "x": self.point[0],
            "y": self.point[1],
            "u_star": self.u_star,
            "combined_mse": self.combined_mse,
            "confident": self.confident,
            "assignment_bits": self.assignment.bits,
            "mode": self.axis.value,
        }


def label_phases(
    window: Trajectory,
    *,
    velocity_threshold: float = 1.5,
    anchor_window: int = 3,
    max_uncertain: int = 10,
) -> PhaseLabeling:
    """Label each window point descending, ascending, or uncertain.

    Vertical velocity is the forward difference of y (backward for the last
    point). Uncertainty takes precedence: a point is uncertain when its
    |velocity| is at most the threshold or it lies strictly within
    anchor_window points of the y-max anchor -- the sample straddling the
    ground contact can carry a strong velocity of either sign, so points
    this close to the anchor are never hard-labeled. Away from that zone a
    point is descending iff its velocity exceeds +threshold and it lies
    before anchor + anchor_window, ascending iff its velocity is below
    -threshold and it lies after anchor - anchor_window; strong movers on
    the wrong side fall back to uncertain. If more than max_uncertain
    points qualify, the ones nearest the anchor keep the label and the rest
    resolve by velocity sign alone (threshold 0; exact zero resolves by
    side of the anchor).

    The fit abscissa is image x when the window's x-span is at least 1.5 px
    per point (steady horizontal motion), else the frame index; near-vertical
    shots make y(x) ill-defined.

    Raises:
        TooShortError: fewer than 7 points.
        PhaseStarvedError: a phase has < 3 points even counting uncertain ones.
    """
    n = len(window)
    if n < MIN_WINDOW_POINTS:
        raise TooShortError(f"window of {n} points, need {MIN_WINDOW_POINTS}")
    y = window.ys()
    x = window.xs()
    fi = window.frame_indices()
    v = np.empty(n)
    v[:-1] = y[1:] - y[:-1]
    v[-1] = y[-1] - y[-2]
    anchor = int(np.argmax(y))

    labels: list[Phase] = []
    for i in range(n):
        if abs(v[i]) <= velocity_threshold or abs(i - anchor) < anchor_window:
            labels.append(Phase.UNCERTAIN)
        elif v[i] > velocity_threshold and i < anchor + anchor_window:
            labels.append(Phase.DESCENDING)
        elif v[i] < -velocity_threshold and i > anchor - anchor_window:
            labels.append(Phase.ASCENDING)
        else:
            labels.append(Phase.UNCERTAIN)

    uncertain = [i for i, l in enumerate(labels) if l is Phase.UNCERTAIN]
    if len(uncertain) > max_uncertain:
        keep = set(sorted(uncertain, key=lambda i: (abs(i - anchor), i))
                   [:max_uncertain])
        for i in uncertain:
            if i in keep:
                continue
            if v[i] > 0:
                labels[i] = Phase.DESCENDING
            elif v[i] < 0:
                labels[i] = Phase.ASCENDING
            else:
                labels[i] = Phase.DESCENDING if i <= anchor else Phase.ASCENDING

    n_desc = sum(1 for l in labels if l is Phase.DESCENDING)
    n_asc = sum(1 for l in labels if l is Phase.ASCENDING)
    n_unc = sum(1 for l in labels if l is Phase.UNCERTAIN)
    if n_desc + n_unc < MIN_PHASE_POINTS or n_asc + n_unc < MIN_PHASE_POINTS:
        raise PhaseStarvedError(
            f"phases hold {n_desc} descending / {n_asc} ascending / "
            f"{n_unc} uncertain points; need {MIN_PHASE_POINTS} per phase")

    x_span = float(x.max() - x.min())
    axis = FitAxis.IMAGE_X if x_span >= X_MODE_SPAN_PER_POINT * n else FitAxis.TIME
    u = x.copy() if axis is FitAxis.IMAGE_X else fi.copy()
    return PhaseLabeling(tuple(labels), axis, u, y, x, fi, anchor)


def fit_quadratic(u, y) -> QuadraticFit:
    """Least-squares parabola via 3x3 normal equations with centered abscissa.

    The abscissa is shifted by its mean before solving (conditioning) and
    the coefficients un-shifted afterwards. Needs at least 3 points with 3
    distinct abscissas.
    """
    u = np.asarray(u, float)
    y = np.asarray(y, float)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError("u and y must be 1-d arrays of equal length")
    n = u.size
    if n < 3 or np.unique(u).size < 3:
        raise DegenerateFitError("need >= 3 points with 3 distinct abscissas")
    um = u.mean()
    t = u - um
    t2 = t * t
    m = np.array([
        [np.sum(t2 * t2), np.sum(t2 * t), np.sum(t2)],
        [np.sum(t2 * t), np.sum(t2), np.sum(t)],
        [np.sum(t2), np.sum(t), float(n)],
    ])
    rhs = np.array([np.sum(t2 * y), np.sum(t * y), np.sum(y)])
    try:
        ah, bh, ch = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateFitError(f"singular normal equations: {e}") from e
    resid = y - (ah * t2 + bh * t + ch)
    sse = float(resid @ resid)
    a = float(ah)
    b = float(bh - 2.0 * ah * um)
    c = float(ch - bh * um + ah * um * um)
    return QuadraticFit(a, b, c, sse, n)


def evaluate_assignment(
    labeling: PhaseLabeling, assignment: Assignment,
) -> tuple[QuadraticFit, QuadraticFit, float]:
    """Fit both phases under one assignment and pool their fitting error.

    combined_mse = (sse_descending + sse_ascending) / (n_d + n_a); pooling
    over both curves avoids biasing the search toward dumping uncertain
    points into the larger phase.
    """
    d_idx, a_idx = assignment.split(labeling)
    fit_d = fit_quadratic(labeling.u[d_idx], labeling.y[d_idx])
    fit_a = fit_quadratic(labeling.u[a_idx], labeling.y[a_idx])
    mse = (fit_d.sse + fit_a.sse) / (fit_d.n + fit_a.n)
    return fit_d, fit_a, mse


def search_min_mse(
    labeling: PhaseLabeling, mode: str = "exhaustive",
) -> tuple[Assignment, tuple[QuadraticFit, QuadraticFit], float]:
    """Find the uncertain-point assignment with the smallest pooled MSE.

    "exhaustive" scores all 2^k assignments that leave at least 3 points in
    each phase; "monotone_split" only the k+1 assignments where, in time
    order, descending-assigned uncertain points all precede ascending ones.
    Ties break toward the more balanced |n_d - n_a|, then toward the
    assignment enumerated first (exhaustive: ascending bits value;
    monotone_split: fewest descending-assigned points first). Assignments
    whose fit is degenerate are skipped.

    Raises:
        NoFeasibleAssignmentError: every candidate is infeasible.
    """
    k = len(labeling.uncertain_indices)
    if mode == "exhaustive":
        candidates = (Assignment(bits) for bits in range(1 << k))
    elif mode == "monotone_split":
        candidates = (
            Assignment(((1 << k) - 1) & ~((1 << s) - 1)) for s in range(k + 1)
        )
    else:
        raise ValueError(f"unknown search mode {mode!r}")

    best: tuple[float, int, Assignment,
                tuple[QuadraticFit, QuadraticFit]] | None = None
    for asg in candidates:
        d_idx, a_idx = asg.split(labeling)
        if len(d_idx) < MIN_PHASE_POINTS or len(a_idx) < MIN_PHASE_POINTS:
            continue
        try:
            fit_d, fit_a, mse = evaluate_assignment(labeling, asg)
        except DegenerateFitError:
            continue
        balance = abs(len(d_idx) - len(a_idx))
        if (best is None or mse < best[0]
                or (mse == best[0] and balance < best[1])):
            best = (mse, balance, asg, (fit_d, fit_a))
    if best is None:
        raise NoFeasibleAssignmentError(
            f"no assignment of {k} uncertain points leaves "
            f"{MIN_PHASE_POINTS} points per phase")
    mse, _, asg, fits = best
    return asg, fits, mse


def intersect(
    fit_d: QuadraticFit, fit_a: QuadraticFit, bracket: tuple[float, float],
) -> tuple[float, float]:
    """Intersection of the two fitted parabolas inside the bracket.

    Solves (a_d - a_a) u^2 + (b_d - b_a) u + (c_d - c_a) = 0. When both real
    roots fall inside the bracket the one nearer the bracket midpoint wins;
    a vanishing quadratic term degrades to the linear root. The ordinate is
    evaluated on the descending fit.

    Raises:
        NoIntersectionError: no real root inside the bracket.
        IdenticalCurvesError: the curves coincide.
    """
    lo, hi = min(bracket), max(bracket)
    da = fit_d.a - fit_a.a
    db = fit_d.b - fit_a.b
    dc = fit_d.c - fit_a.c
    eps = 1e-12
    if abs(da) < eps:
        if abs(db) < eps:
            if abs(dc) < eps:
                raise IdenticalCurvesError("fits coincide")
            raise NoIntersectionError("curves are parallel")
        roots = [-dc / db]
    else:
        disc = db * db - 4.0 * da * dc
        if disc < 0:
            raise NoIntersectionError("no real intersection")
        sq = float(np.sqrt(disc))
        roots = [(-db - sq) / (2.0 * da), (-db + sq) / (2.0 * da)]
    inside = [r for r in roots if lo <= r <= hi]
    if not inside:
        raise NoIntersectionError(
            f"roots {roots} outside bracket [{lo}, {hi}]")
    mid = 0.5 * (lo + hi)
    u_star = min(inside, key=lambda r: (abs(r - mid), r))
    return u_star, fit_d.evaluate(u_star)


def _assignment_bracket(
    labeling: PhaseLabeling, assignment: Assignment,
) -> tuple[float, float]:
    """Bracket between the last descending and first ascending abscissa.

    Hard labels bound the uncertain zone, so the bracket runs from the last
    descending-labeled sample to the first ascending-labeled one (falling
    back to the assignment's split when a hard phase is empty) plus a
    2-unit margin on both sides.
    """
    d_asg, a_asg = assignment.split(labeling)
    d_hard = labeling.phase_indices(Phase.DESCENDING)
    a_hard = labeling.phase_indices(Phase.ASCENDING)
    last_d = labeling.u[max(d_hard) if d_hard else max(d_asg)]
    first_a = labeling.u[min(a_hard) if a_hard else min(a_asg)]
    lo, hi = min(last_d, first_a), max(last_d, first_a)
    return lo - INTERSECT_MARGIN, hi + INTERSECT_MARGIN


def predict_bounce(
    window: Trajectory,
    cfg: BounceConfig | None = None,
    frame_size: tuple[int, int] | None = None,
) -> BouncePrediction:
    """Full bounce analysis of one window: label, search, intersect.

    On the TIME axis the bounce x comes from a linear fit of x against the
    frame index over the whole window evaluated at the intersection. When
    the curves do not intersect inside the bracket (or the intersection
    lands outside the frame extended by 10%, if frame_size is given) the
    prediction falls back to the window's y-max point with confident=False:
    a line-calling system must always produce a call.

    Raises:
        AnalysisFailedError: labeling or the assignment search failed.
    """
    cfg = cfg or BounceConfig()
    try:
        labeling = label_phases(
            window,
            velocity_threshold=cfg.velocity_threshold,
            anchor_window=cfg.anchor_window,
            max_uncertain=cfg.max_uncertain,
        )
    except (TooShortError, PhaseStarvedError) as e:
        raise AnalysisFailedError(f"phase labeling failed: {e}") from e
    try:
        assignment, fits, mse = search_min_mse(labeling, cfg.search)
    except NoFeasibleAssignmentError as e:
        raise AnalysisFailedError(f"assignment search failed: {e}") from e

    x_of_u: tuple[float, float] | None = None
    if labeling.axis is FitAxis.TIME:
        slope, intercept = np.polyfit(labeling.u, labeling.x, 1)
        x_of_u = (float(slope), float(intercept))

    confident = True
    point: tuple[float, float]
    try:
        u_star, y_star = intersect(fits[0], fits[1],
                                   _assignment_bracket(labeling, assignment))
        if labeling.axis is FitAxis.IMAGE_X:
            point = (float(u_star), float(y_star))
        else:
            point = (x_of_u[0] * u_star + x_of_u[1], float(y_star))
        if frame_size is not None and not _within_extended(point, frame_size):
            confident = False
    except (NoIntersectionError, IdenticalCurvesError):
        confident = False
    if not confident:
        point = (float(labeling.x[labeling.anchor]),
                 float(labeling.y[labeling.anchor]))
        u_star = float(labeling.u[labeling.anchor])
    return BouncePrediction(
        point=point,
        u_star=float(u_star),
        assignment=assignment,
        combined_mse=float(mse),
        confident=confident,
        axis=labeling.axis,
        fits=fits,
        x_of_u=x_of_u,
    )


def _within_extended(point: tuple[float, float],
                     frame_size: tuple[int, int]) -> bool:
    w, h = frame_size
    return (-0.1 * w <= point[0] <= 1.1 * w
            and -0.1 * h <= point[1] <= 1.1 * h)
