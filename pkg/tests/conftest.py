import numpy as np
import pytest

from courtcall.detector import DetectorConfig
from courtcall.harness import PipelineConfig
from courtcall.imaging import FrameImage
from courtcall.synth import COURT_GREEN, random_rally, render_frames


def synth_pipeline_config(**overrides) -> PipelineConfig:
    """Pipeline config tuned for the 320x240 synthetic rally samples.

    The rendered ball (radius ~4 px) is a larger fraction of a QVGA frame
    than of real footage, so the area gate is widened; everything else uses
    the defaults.
    """
    kwargs = dict(
        frame_pattern="frame_%06d.ppm",
        detector=DetectorConfig(area_range=(3e-5, 5e-3)),
    )
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)


def rendered_sample(base_dir, seed, **rally_kw):
    """Render one random rally; returns (frames_dir, RallySample)."""
    sample = random_rally(seed, **rally_kw)
    frames_dir = str(base_dir / f"sample_{seed:04d}")
    render_frames(sample.params, COURT_GREEN, frames_dir,
                  court=sample.court, image_format="ppm")
    return frames_dir, sample


def gray_frame(value: int, index: int = 0, size=(32, 32)) -> FrameImage:
    h, w = size
    return FrameImage(np.full((h, w, 3), value, np.uint8), index, index / 240.0)


@pytest.fixture(scope="session")
def warm_detector_kernel():
    """Compile (or load from cache) the mixture kernel before timed work."""
    from courtcall.detector import BackgroundModel, bg_update_and_classify

    model = BackgroundModel(32, 32)
    bg_update_and_classify(model, gray_frame(100))
    return True
