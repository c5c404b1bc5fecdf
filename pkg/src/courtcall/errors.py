"""Exception hierarchy for the line-calling pipeline."""


class CourtCallError(Exception):
    """Base class for all errors raised by this package."""


# -- frame loading -----------------------------------------------------------

class MissingDirectoryError(CourtCallError):
    """Frame directory does not exist."""


class MissingFramesError(CourtCallError):
    """Frame directory contains no files matching the filename template."""


class MixedDimensionsError(CourtCallError):
    """Frames in one sequence have differing dimensions."""


class FrameDecodeError(CourtCallError):
    """A frame file could not be decoded; carries the offending filename."""

    def __init__(self, filename: str, detail: str = ""):
        self.filename = filename
        msg = f"cannot decode frame {filename!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


# -- detector ----------------------------------------------------------------

class DimensionMismatchError(CourtCallError):
    """Frame dimensions do not match the background model."""


# -- tracker / bounce analysis -----------------------------------------------

class TooShortError(CourtCallError):
    """Trajectory or analysis window has too few points."""


class PhaseStarvedError(CourtCallError):
    """One motion phase has fewer than 3 points even counting all uncertain ones."""


class DegenerateFitError(CourtCallError):
    """Quadratic fit is underdetermined (fewer than 3 distinct abscissas)."""


class NoFeasibleAssignmentError(CourtCallError):
    """No uncertain-point assignment leaves at least 3 points per phase."""


class NoIntersectionError(CourtCallError):
    """Fitted curves do not intersect inside the search bracket."""


class IdenticalCurvesError(CourtCallError):
    """Fitted curves coincide; intersection point is undefined."""


class AnalysisFailedError(CourtCallError):
    """Bounce analysis failed; carries the underlying reason."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


# -- line calling ------------------------------------------------------------

class DegenerateLineError(CourtCallError):
    """Court line has coincident endpoints."""


# -- synthetic data ----------------------------------------------------------

class NeverLandsError(CourtCallError):
    """Synthetic trajectory does not reach the ground within the clip."""


# -- evaluation --------------------------------------------------------------

class MissingGroundTruthError(CourtCallError):
    """Distance-mode judgment requested but the sample has no ground-truth bounce."""


class EmptyInputError(CourtCallError):
    """Aggregation requested over zero records."""


# -- pipeline / configuration ------------------------------------------------

class DetectorFailedError(CourtCallError):
    """Detection stage produced no usable track."""


class ConfigError(CourtCallError):
    """Malformed or unknown configuration keys."""
