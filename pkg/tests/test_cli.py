import json
import os

import pytest

from courtcall.cli import main
from courtcall.linecall import load_court
from courtcall.synth import load_ground_truth

from conftest import rendered_sample


def _write_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "frame_pattern": "frame_%06d.ppm",
        "detector": {"area_range": [3e-5, 5e-3]},
    }))
    return str(path)


@pytest.fixture(scope="module")
def cli_sample(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    frames_dir, sample = rendered_sample(base, 21)
    court_path = str(base / "court.json")
    from courtcall.linecall import save_court
    save_court(sample.court, court_path)
    return base, frames_dir, sample, court_path


class TestRunCommand:
    def test_run_produces_verdict_and_overlay(self, cli_sample, tmp_path):
        base, frames_dir, sample, court_path = cli_sample
        out = str(tmp_path / "result.json")
        overlay = str(tmp_path / "overlay.png")
        code = main(["run", "--frames", frames_dir, "--court", court_path,
                     "--config", _write_config(tmp_path), "--out", out,
                     "--overlay", overlay])
        assert code == 0
        with open(out, encoding="utf-8") as f:
            result = json.load(f)
        assert result["verdict"]["call"] == sample.truth.true_call
        assert os.path.exists(overlay)

    def test_run_without_court_exits_2(self, cli_sample, capsys):
        _, frames_dir, *_ = cli_sample
        with pytest.raises(SystemExit) as exc:
            main(["run", "--frames", frames_dir])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_frames_dir_exits_2(self, cli_sample, tmp_path):
        *_, court_path = cli_sample
        code = main(["run", "--frames", str(tmp_path / "nope"),
                     "--court", court_path])
        assert code == 2

    def test_unknown_config_key_exits_2(self, cli_sample, tmp_path):
        _, frames_dir, _, court_path = cli_sample
        code = main(["run", "--frames", frames_dir, "--court", court_path,
                     "--set", "detector.bogus=1"])
        assert code == 2


class TestDetectAnalyze:
    def test_detect_then_analyze_matches_run(self, cli_sample, tmp_path):
        base, frames_dir, sample, court_path = cli_sample
        cfg = _write_config(tmp_path)
        detections = str(tmp_path / "detections.json")
        assert main(["detect", "--frames", frames_dir, "--out", detections,
                     "--config", cfg]) == 0
        out_a = str(tmp_path / "a.json")
        out_b = str(tmp_path / "b.json")
        for out in (out_a, out_b):
            assert main(["analyze", "--detections", detections,
                         "--court", court_path, "--config", cfg,
                         "--out", out]) == 0
        with open(out_a, "rb") as fa, open(out_b, "rb") as fb:
            assert fa.read() == fb.read()
        run_out = str(tmp_path / "run.json")
        assert main(["run", "--frames", frames_dir, "--court", court_path,
                     "--config", cfg, "--out", run_out]) == 0
        with open(out_a, encoding="utf-8") as f:
            analyzed = json.load(f)
        with open(run_out, encoding="utf-8") as f:
            ran = json.load(f)
        assert analyzed["prediction"] == ran["prediction"]
        assert analyzed["verdict"] == ran["verdict"]


class TestSynthCommand:
    def test_sample_directory_and_manifest_entry(self, tmp_path):
        # default PNG format, evaluated end to end with the default pattern
        out = str(tmp_path / "sample_0")
        manifest = str(tmp_path / "manifest.json")
        code = main(["synth", "--out", out, "--seed", "4",
                     "--manifest", manifest, "--id", "s4"])
        assert code == 0
        assert os.path.isdir(os.path.join(out, "frames"))
        truth = load_ground_truth(os.path.join(out, "ground_truth.json"))
        assert truth.true_call in ("IN", "OUT")
        court = load_court(os.path.join(out, "court.json"))
        assert len(court.lines) == 1
        with open(manifest, encoding="utf-8") as f:
            entries = json.load(f)
        assert entries[0]["id"] == "s4"
        assert entries[0]["gt_call"] == truth.true_call
        report_path = str(tmp_path / "report.json")
        assert main(["eval", "--manifest", manifest, "--out", report_path,
                     "--set", "detector.area_range=[3e-5, 5e-3]"]) == 0
        with open(report_path, encoding="utf-8") as f:
            report = json.load(f)
        assert report["total"] == {"count": 1, "successes": 1,
                                   "success_rate": 1.0, "percent": "100.0%"}

    def test_explicit_params_file(self, tmp_path):
        params = {
            "start": [100.0, 500.0], "velocity": [200.0, 300.0],
            "gravity": 1000.0, "restitution": 0.8, "friction": 0.9,
            "ground_y": 700.0, "n_frames": 130, "seed": 5,
        }
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps(params))
        out = str(tmp_path / "sample")
        code = main(["synth", "--out", out, "--params", str(params_path),
                     "--format", "ppm", "--width", "480", "--height", "760"])
        assert code == 0
        truth = load_ground_truth(os.path.join(out, "ground_truth.json"))
        assert truth.bounce_point == (180.0, 700.0)
        assert truth.true_call is None  # no court spec supplied

    def test_unknown_params_key_exits_2(self, tmp_path):
        params_path = tmp_path / "params.json"
        params_path.write_text('{"bogus": 1}')
        assert main(["synth", "--out", str(tmp_path / "s"),
                     "--params", str(params_path)]) == 2

    def test_env_seed_override(self, tmp_path, monkeypatch):
        out_env = str(tmp_path / "env")
        out_flag = str(tmp_path / "flag")
        monkeypatch.setenv("ELC_SEED", "9")
        assert main(["synth", "--out", out_env, "--seed", "4",
                     "--format", "ppm"]) == 0
        monkeypatch.delenv("ELC_SEED")
        assert main(["synth", "--out", out_flag, "--seed", "9",
                     "--format", "ppm"]) == 0
        truth_env = load_ground_truth(os.path.join(out_env,
                                                   "ground_truth.json"))
        truth_flag = load_ground_truth(os.path.join(out_flag,
                                                    "ground_truth.json"))
        assert truth_env == truth_flag


class TestInitCourt:
    def test_writes_court_spec(self, tmp_path):
        out = str(tmp_path / "court.json")
        code = main(["init-court",
                     "--line", "sideline,100,0,100,240,4,1",
                     "--line", "baseline,0,200,320,200,4,-1",
                     "--delta", "1.0", "--out", out])
        assert code == 0
        court = load_court(out)
        assert [ln.name for ln in court.lines] == ["sideline", "baseline"]
        assert court.delta == 1.0

    def test_malformed_line_exits_2(self, tmp_path):
        code = main(["init-court", "--line", "bad,1,2",
                     "--out", str(tmp_path / "c.json")])
        assert code == 2


class TestEvalCommand:
    def test_eval_on_synth_manifest(self, tmp_path):
        manifest = str(tmp_path / "manifest.json")
        for seed in (31, 32):
            assert main(["synth", "--out", str(tmp_path / f"s{seed}"),
                         "--seed", str(seed), "--format", "ppm",
                         "--manifest", manifest, "--id", f"s{seed}"]) == 0
        report_path = str(tmp_path / "report.json")
        csv_path = str(tmp_path / "report.csv")
        code = main(["eval", "--manifest", manifest, "--out", report_path,
                     "--csv", csv_path,
                     "--set", "frame_pattern=frame_%06d.ppm",
                     "--set", "detector.area_range=[3e-5, 5e-3]"])
        assert code == 0
        with open(report_path, encoding="utf-8") as f:
            report = json.load(f)
        assert report["total"]["count"] == 2
        assert report["total"]["successes"] == 2
        assert os.path.exists(csv_path)
