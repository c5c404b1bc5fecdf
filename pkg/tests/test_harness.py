import json
import os

import numpy as np
import pytest

from courtcall.errors import ConfigError, DetectorFailedError
from courtcall.evaluation import JudgeMode, SampleAnnotation
from courtcall.harness import (
    PipelineConfig,
    analyze_detections,
    apply_overrides,
    config_from_dict,
    detect_to_file,
    evaluate_manifest,
    evaluate_sample,
    load_config,
    render_overlay,
    run_pipeline,
)
from courtcall.imaging import load_frame_sequence
from courtcall.linecall import save_court
from courtcall.synth import COURT_GREEN, SynthParams, render_frames

from conftest import rendered_sample, synth_pipeline_config


class TestConfig:
    def test_defaults_from_empty_dict(self):
        cfg = config_from_dict({})
        assert cfg == PipelineConfig()
        assert cfg.fps == 240.0

    def test_nested_values_applied(self):
        cfg = config_from_dict({
            "fps": 120,
            "detector": {"hue_range": [20, 90],
                         "background": {"learning_rate": 0.01}},
            "bounce": {"search": "monotone_split"},
            "eval": {"mode": "distance", "tolerance_px": 3},
        })
        assert cfg.fps == 120.0
        assert cfg.detector.hue_range == (20.0, 90.0)
        assert cfg.detector.background.learning_rate == 0.01
        assert cfg.bounce.search == "monotone_split"
        assert cfg.eval.mode is JudgeMode.DISTANCE
        assert cfg.eval.tolerance_px == 3.0

    def test_unknown_root_key_rejected(self):
        with pytest.raises(ConfigError, match="detectr"):
            config_from_dict({"detectr": {}})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="hue_rang"):
            config_from_dict({"detector": {"hue_rang": [1, 2]}})

    def test_invalid_value_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"detector": {"hue_range": [90, 20]}})
        with pytest.raises(ConfigError):
            config_from_dict({"eval": {"mode": "nonsense"}})

    def test_overrides(self):
        data = apply_overrides({}, ["detector.morph_radius=2",
                                    "bounce.search=monotone_split",
                                    "detector.hue_range=[10, 80]"])
        cfg = config_from_dict(data)
        assert cfg.detector.morph_radius == 2
        assert cfg.bounce.search == "monotone_split"
        assert cfg.detector.hue_range == (10.0, 80.0)

    def test_bad_override_shape(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["no_equals_sign"])

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"fps": 60}')
        cfg = load_config(str(path), ["tracker.max_gap=9"])
        assert cfg.fps == 60.0
        assert cfg.tracker.max_gap == 9


@pytest.fixture(scope="module")
def sample_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("run")
    frames_dir, sample = rendered_sample(base, 3, noise_sigma=0.0,
                                         dropout_p=0.0)
    cfg = synth_pipeline_config()
    result = run_pipeline(frames_dir, cfg, sample.court, sample_id="s3")
    return frames_dir, sample, cfg, result


class TestRunPipeline:
    def test_verdict_matches_ground_truth(self, sample_run):
        _, sample, _, result = sample_run
        assert result.verdict.call == sample.truth.true_call
        assert result.prediction.confident
        assert result.n_detections > 20
        assert result.track_len >= 8

    def test_timings_cover_all_stages(self, sample_run):
        *_, result = sample_run
        assert set(result.timings_ms) == {"load", "detect", "predict", "call"}
        assert all(t >= 0 for t in result.timings_ms.values())

    def test_result_serializes(self, sample_run):
        *_, result = sample_run
        data = result.to_dict()
        json.dumps(data)
        assert data["sample_id"] == "s3"
        assert data["verdict"]["call"] in ("IN", "OUT")

    def test_no_ball_anywhere_fails_detector_stage(self, tmp_path):
        params = SynthParams(start=(100.0, 50.0), velocity=(200.0, 300.0),
                             gravity=2000.0, restitution=0.8, friction=0.9,
                             ground_y=200.0, n_frames=90, fps=240.0,
                             dropout_p=1.0, seed=0, lead_in_frames=30)
        frames_dir = str(tmp_path / "frames")
        render_frames(params, COURT_GREEN, frames_dir, image_format="ppm")
        from courtcall.linecall import CourtLine, CourtLineSpec
        court = CourtLineSpec((CourtLine("l", (0, 0), (0, 10)),))
        with pytest.raises(DetectorFailedError):
            run_pipeline(frames_dir, synth_pipeline_config(), court)

    def test_missing_court_config(self, sample_run):
        frames_dir, *_ = sample_run
        with pytest.raises(ConfigError):
            run_pipeline(frames_dir, synth_pipeline_config())


class TestDetectAnalyzeDecomposition:
    def test_detect_then_analyze_equals_run(self, sample_run, tmp_path):
        frames_dir, sample, cfg, result = sample_run
        det_path = str(tmp_path / "detections.json")
        detect_to_file(frames_dir, cfg, det_path)
        with open(det_path, encoding="utf-8") as f:
            data = json.load(f)
        prediction, verdict, _ = analyze_detections(data, cfg, sample.court)
        assert prediction.to_dict() == result.prediction.to_dict()
        assert verdict.to_dict() == result.verdict.to_dict()


class TestEvaluateManifest:
    def test_three_sample_manifest(self, tmp_path):
        cfg = synth_pipeline_config()
        annotations = []
        for seed in (11, 12, 13):
            frames_dir, sample = rendered_sample(tmp_path, seed)
            court_path = str(tmp_path / f"court_{seed}.json")
            save_court(sample.court, court_path)
            annotations.append(SampleAnnotation(
                f"s{seed}", frames_dir, court_path, sample.truth.true_call,
                sample.truth.bounce_point, sample.tag))
        report = evaluate_manifest(annotations, cfg)
        assert report.total.count == 3
        assert report.total.successes == 3
        assert [r.id for r in report.records] == ["s11", "s12", "s13"]
        assert all(r.bounce_err is not None and r.bounce_err < 5
                   for r in report.records)

    def test_pipeline_failure_becomes_incorrect_record(self, tmp_path):
        court_path = str(tmp_path / "court.json")
        from courtcall.linecall import CourtLine, CourtLineSpec
        save_court(CourtLineSpec((CourtLine("l", (0, 0), (0, 10)),)),
                   court_path)
        ann = SampleAnnotation("bad", str(tmp_path / "nowhere"), court_path,
                               "IN")
        record = evaluate_sample(ann, synth_pipeline_config())
        assert record.correct == 0
        assert record.call is None
        assert record.error


class TestRenderOverlay:
    def test_overlay_contracts(self, sample_run, tmp_path):
        frames_dir, sample, cfg, result = sample_run
        frames = load_frame_sequence(frames_dir, cfg.frame_pattern, cfg.fps)
        anchor_index = int(np.argmax(result.window.ys()))
        anchor_frame_index = result.window.points[anchor_index].frame_index
        frame = next(f for f in frames if f.frame_index == anchor_frame_index)
        out = str(tmp_path / "overlay.png")
        img = render_overlay(frame, result.window, result.prediction,
                             result.verdict, out)
        assert img.shape == frame.pixels.shape
        assert os.path.exists(out)
        for det in result.window.points:
            x, y = int(round(det.centroid[0])), int(round(det.centroid[1]))
            assert tuple(img[y, x]) == (255, 255, 0), "detection dot"
        bx = int(round(result.prediction.point[0]))
        by = int(round(result.prediction.point[1]))
        assert tuple(img[by, bx]) == (0, 0, 255), "bounce cross center"
        # red fit curves must be present somewhere
        assert np.any(np.all(img == (255, 0, 0), axis=2))

    def test_overlay_on_time_axis_prediction(self, tmp_path):
        from courtcall.bounce import BounceConfig, FitAxis, predict_bounce
        from courtcall.imaging import FrameImage
        from courtcall.synth import generate_trajectory, observed_to_detections
        from courtcall.tracker import TrackerConfig, assemble, select_analysis_window
        from courtcall.linecall import CourtLine, CourtLineSpec, call

        params = SynthParams(start=(160.0, 60.0), velocity=(25.0, 500.0),
                             gravity=2500.0, restitution=0.7, friction=1.0,
                             ground_y=200.0, n_frames=60, fps=240.0, seed=2)
        _, observed, _ = generate_trajectory(params)
        tcfg = TrackerConfig()
        window = select_analysis_window(
            assemble(observed_to_detections(observed, params),
                     tcfg, params.fps)[0], tcfg)
        prediction = predict_bounce(window, BounceConfig())
        assert prediction.axis is FitAxis.TIME
        court = CourtLineSpec((CourtLine("sideline", (200.0, 0.0),
                                         (200.0, 240.0), 4.0, 1),))
        verdict = call(prediction, court)
        frame = FrameImage(np.full((240, 320, 3), 60, np.uint8), 0, 0.0)
        img = render_overlay(frame, window, prediction, verdict,
                             str(tmp_path / "overlay_t.png"))
        assert np.any(np.all(img == (255, 0, 0), axis=2))
