import os

import numpy as np
import pytest

from courtcall.bounce import BounceConfig, predict_bounce
from courtcall.errors import NeverLandsError
from courtcall.imaging import load_frame_sequence
from courtcall.linecall import signed_distance
from courtcall.synth import (
    COURT_GREEN,
    OPTIC_YELLOW,
    GroundTruth,
    SynthParams,
    bounce_time,
    generate_trajectory,
    load_ground_truth,
    observed_to_detections,
    random_rally,
    render_frames,
)
from courtcall.tracker import TrackerConfig, assemble, select_analysis_window

from oracles import landing_time_numeric


def _params(**overrides):
    base = dict(start=(100.0, 500.0), velocity=(200.0, 300.0), gravity=1000.0,
                restitution=0.8, friction=0.9, ground_y=700.0, n_frames=160,
                fps=240.0, seed=0)
    base.update(overrides)
    return SynthParams(**base)


class TestKinematics:
    def test_closed_form_example(self):
        # sqrt(300^2 + 2*1000*200) = 700, so the drop from 500 to 700 lands
        # at (-300 + 700) / 1000 = 0.4 s and x = 100 + 200*0.4 = 180; value
        # frozen from the bracketed numeric root finder
        params = _params()
        t_b = bounce_time(params)
        assert t_b == pytest.approx(0.4, abs=1e-12)
        assert t_b == pytest.approx(
            landing_time_numeric(500.0, 300.0, 1000.0, 700.0), abs=1e-10)
        _, _, truth = generate_trajectory(params)
        assert truth.bounce_point == pytest.approx((180.0, 700.0))
        assert truth.bounce_time == pytest.approx(0.4)

    def test_matches_numeric_root_finder(self):
        rng = np.random.default_rng(25)
        for _ in range(50):
            params = _params(
                start=(0.0, float(rng.uniform(0, 400))),
                velocity=(0.0, float(rng.uniform(-300, 600))),
                gravity=float(rng.uniform(500, 4000)),
                ground_y=500.0, n_frames=2000)
            t_b = bounce_time(params)
            t_num = landing_time_numeric(params.start[1], params.velocity[1],
                                         params.gravity, params.ground_y)
            assert t_b == pytest.approx(t_num, abs=1e-9)

    def test_upward_launch_still_lands(self):
        params = _params(velocity=(200.0, -400.0), n_frames=300)
        t_b = bounce_time(params)
        assert t_b == pytest.approx(
            landing_time_numeric(500.0, -400.0, 1000.0, 700.0), abs=1e-10)
        _, _, truth = generate_trajectory(params)
        assert truth.bounce_point[1] == params.ground_y

    def test_never_lands(self):
        with pytest.raises(NeverLandsError):
            generate_trajectory(_params(n_frames=10))

    def test_noiseless_observed_equals_ideal(self):
        ideal, observed, _ = generate_trajectory(_params())
        assert all(o is not None for o in observed)
        assert np.allclose(np.array(observed), ideal)

    def test_full_dropout_keeps_ground_truth(self):
        _, observed, truth = generate_trajectory(_params(dropout_p=1.0))
        assert all(o is None for o in observed)
        assert truth.bounce_point == pytest.approx((180.0, 700.0))

    def test_restitution_scales_vertical_speed_exactly(self):
        params = _params()
        ideal, _, truth = generate_trajectory(params)
        fps, g = params.fps, params.gravity
        t_b = truth.bounce_time
        vy_impact = params.velocity[1] + g * t_b
        k1 = int(np.ceil(t_b * fps)) + 1
        k2 = k1 + 4
        dt1, dt2 = k1 / fps - t_b, k2 / fps - t_b
        slope = (ideal[k2, 1] - ideal[k1, 1]) / (dt2 - dt1)
        vy_post = slope - 0.5 * g * (dt1 + dt2)
        assert vy_post == pytest.approx(-params.restitution * vy_impact,
                                        rel=1e-9)

    def test_two_seeds_same_truth_different_noise(self):
        a = _params(noise_sigma=1.0, seed=1)
        b = _params(noise_sigma=1.0, seed=2)
        _, obs_a, truth_a = generate_trajectory(a)
        _, obs_b, truth_b = generate_trajectory(b)
        assert truth_a == truth_b
        assert any(x != y for x, y in zip(obs_a, obs_b)
                   if x is not None and y is not None)

    def test_pre_and_post_points_sit_on_one_quadratic_each(self):
        params = _params()
        ideal, _, truth = generate_trajectory(params)
        t = np.arange(params.n_frames) / params.fps
        pre = t < truth.bounce_time
        for segment in (pre, ~pre):
            if segment.sum() < 4:
                continue
            coeffs = np.polyfit(t[segment], ideal[segment, 1], 2)
            resid = ideal[segment, 1] - np.polyval(coeffs, t[segment])
            assert np.abs(resid).max() < 1e-8


class TestRenderFrames:
    def test_single_disc_centroid(self, tmp_path):
        params = SynthParams(start=(50.0, 50.0), velocity=(0.0, 0.0),
                             gravity=1000.0, restitution=0.8, friction=0.9,
                             ground_y=50.0, n_frames=1, fps=240.0,
                             ball_radius=3.0, seed=0)
        out = str(tmp_path / "sample")
        render_frames(params, (40, 40, 40), out, width=96, height=96)
        frames = load_frame_sequence(out)
        assert len(frames) == 1
        px = frames[0].pixels
        lit = np.any(px != 40, axis=2)
        ys, xs = np.nonzero(lit)
        assert len(xs) > 0
        assert xs.mean() == pytest.approx(50.0, abs=0.5)
        assert ys.mean() == pytest.approx(50.0, abs=0.5)
        center = px[50, 50]
        assert tuple(center) == OPTIC_YELLOW

    def test_lead_in_frames_are_background_only(self, tmp_path):
        params = _params(n_frames=130, lead_in_frames=3)
        out = str(tmp_path / "sample")
        render_frames(params, (40, 40, 40), out, width=480, height=760)
        frames = load_frame_sequence(out)
        assert len(frames) == 133
        for f in frames[:3]:
            assert np.all(f.pixels == 40)
        assert np.any(frames[3].pixels != 40)

    def test_renders_are_byte_identical(self, tmp_path):
        params = _params(noise_sigma=1.0, dropout_p=0.1, n_frames=130)
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        for out in (out_a, out_b):
            render_frames(params, COURT_GREEN, out, width=480, height=760,
                          image_format="ppm")
        names = sorted(os.listdir(out_a))
        assert names == sorted(os.listdir(out_b))
        for name in names:
            with open(os.path.join(out_a, name), "rb") as fa, \
                    open(os.path.join(out_b, name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_ground_truth_file_written(self, tmp_path):
        out = str(tmp_path / "sample")
        truth = render_frames(_params(n_frames=130), COURT_GREEN, out,
                              width=480, height=760)
        loaded = load_ground_truth(os.path.join(out, "ground_truth.json"))
        assert loaded == GroundTruth(truth.bounce_point, truth.bounce_time,
                                     None, None)

    def test_end_to_end_noiseless_bounce_error(self, tmp_path):
        from conftest import rendered_sample, synth_pipeline_config
        from courtcall.harness import run_pipeline

        frames_dir, sample = rendered_sample(tmp_path, 5, noise_sigma=0.0,
                                             dropout_p=0.0)
        result = run_pipeline(frames_dir, synth_pipeline_config(),
                              sample.court)
        err = np.hypot(result.prediction.point[0] - sample.truth.bounce_point[0],
                       result.prediction.point[1] - sample.truth.bounce_point[1])
        assert err <= 1.5
        assert result.verdict.call == sample.truth.true_call


class TestRandomRally:
    def test_margin_construction_is_exact(self):
        for seed in range(60):
            sample = random_rally(seed)
            d = signed_distance(sample.truth.bounce_point,
                                sample.court.lines[0])
            assert d == pytest.approx(sample.truth.margin, abs=1e-9)
            assert (sample.tag == "confusing") == (abs(d) <= 3.0)
            assert sample.truth.true_call == ("IN" if d >= 0 else "OUT")

    def test_ball_stays_in_frame(self):
        for seed in range(40):
            sample = random_rally(seed)
            ideal, _, _ = generate_trajectory(sample.params)
            r = sample.params.ball_radius
            assert ideal[:, 0].min() >= r
            assert ideal[:, 0].max() <= 320 - r
            assert ideal[:, 1].min() >= r
            assert ideal[:, 1].max() <= 240 - r

    def test_pooled_error_tracks_noise_level(self):
        # with sigma = 1 the pooled fitting error stays below
        # n_points * sigma^2 * 4 for at least 95% of seeds
        sigma = 1.0
        ok = 0
        tcfg = TrackerConfig()
        for seed in range(100):
            sample = random_rally(seed, dropout_p=0.0, noise_sigma=sigma)
            _, observed, _ = generate_trajectory(sample.params)
            dets = observed_to_detections(observed, sample.params)
            window = select_analysis_window(
                assemble(dets, tcfg, sample.params.fps)[0], tcfg)
            pred = predict_bounce(window, BounceConfig())
            if pred.combined_mse <= len(window) * sigma * sigma * 4.0:
                ok += 1
        assert ok >= 95
