"""Monocular electronic line calling for tennis.

Detects the ball per frame with a two-stage filter (Gaussian-mixture
background subtraction, then color and area gates), predicts the bounce
point by minimizing the pooled fitting loss over uncertain-point phase
assignments of two least-squares parabolas, and rules IN or OUT from the
relative 2D position of the bounce and the annotated court lines.
"""

from .bounce import (
    Assignment,
    BounceConfig,
    BouncePrediction,
    FitAxis,
    Phase,
    PhaseLabeling,
    QuadraticFit,
    evaluate_assignment,
    fit_quadratic,
    intersect,
    label_phases,
    predict_bounce,
    search_min_mse,
)
from .detector import (
    BackgroundModel,
    BackgroundParams,
    BallDetection,
    DetectorConfig,
    bg_update_and_classify,
    color_area_filter,
    detect_sequence,
    select_ball,
)
from .errors import CourtCallError
from .evaluation import (
    EvalConfig,
    EvalReport,
    JudgeMode,
    SampleAnnotation,
    SampleRecord,
    aggregate,
    judge_sample,
)
from .harness import (
    PipelineConfig,
    RunResult,
    evaluate_manifest,
    render_overlay,
    run_pipeline,
)
from .imaging import (
    BinaryMask,
    Blob,
    FrameImage,
    connected_components,
    load_frame_sequence,
    morph_open_dilate,
    rgb_to_hsv,
)
from .linecall import CourtLine, CourtLineSpec, Verdict, call, signed_distance
from .synth import GroundTruth, SynthParams, generate_trajectory, render_frames
from .tracker import Trajectory, TrackerConfig, assemble, select_analysis_window

__version__ = "0.1.0"
