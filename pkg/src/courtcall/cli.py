"""Command-line interface.

Subcommands:
  detect      frames dir -> detections file
  analyze     detections + court -> prediction, verdict, optional overlay
  run         frames + court -> verdict and optional overlay
  synth       generate a synthetic rally sample directory
  eval        manifest of annotated samples -> accuracy report
  init-court  write a court spec from endpoint coordinates

Exit codes: 0 success, 1 analysis failure (no track, starved phases, ...),
2 bad input or usage. The ELC_SEED environment variable overrides the
synth seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness, synth
from .errors import (
    AnalysisFailedError,
    ConfigError,
    CourtCallError,
    DetectorFailedError,
    EmptyInputError,
    FrameDecodeError,
    MissingDirectoryError,
    MissingFramesError,
    MissingGroundTruthError,
    MixedDimensionsError,
    NeverLandsError,
)
from .evaluation import load_manifest, write_report_csv, write_report_json
from .linecall import CourtLine, CourtLineSpec, load_court, save_court

_USAGE_ERRORS = (
    ConfigError, MissingDirectoryError, MissingFramesError,
    MixedDimensionsError, FrameDecodeError, MissingGroundTruthError,
    EmptyInputError, NeverLandsError,
)
_ANALYSIS_ERRORS = (AnalysisFailedError, DetectorFailedError)


def _write_json(data: dict, path: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="override a config key, e.g. detector.morph_radius=2")


def _cmd_detect(args) -> int:
    cfg = harness.load_config(args.config, args.overrides)
    n = harness.detect_to_file(args.frames, cfg, args.out)
    print(f"wrote {args.out}: {n} detections")
    return 0


def _cmd_analyze(args) -> int:
    cfg = harness.load_config(args.config, args.overrides)
    court = load_court(args.court)
    with open(args.detections, encoding="utf-8") as f:
        data = json.load(f)
    prediction, verdict, window = harness.analyze_detections(data, cfg, court)
    _write_json({"prediction": prediction.to_dict(),
                 "verdict": verdict.to_dict()}, args.out)
    if args.overlay:
        if not args.overlay_frame:
            raise ConfigError("--overlay needs --overlay-frame FILE")
        from .imaging import FrameImage, load_image
        frame = FrameImage(load_image(args.overlay_frame), 0, 0.0)
        harness.render_overlay(frame, window, prediction, verdict,
                               args.overlay)
        print(f"wrote overlay {args.overlay}")
    return 0


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config, args.overrides)
    court = load_court(args.court)
    result = harness.run_pipeline(args.frames, cfg, court)
    _write_json(result.to_dict(), args.out)
    if args.overlay:
        frames = harness.load_frame_sequence(args.frames, cfg.frame_pattern,
                                             cfg.fps)
        anchor = result.window.points[
            int(result.window.ys().argmax())].frame_index
        frame = next(f for f in frames if f.frame_index == anchor)
        harness.render_overlay(frame, result.window, result.prediction,
                               result.verdict, args.overlay)
        print(f"wrote overlay {args.overlay}")
    return 0


def _cmd_synth(args) -> int:
    seed = int(os.environ.get("ELC_SEED", args.seed))
    out = args.out
    frames_dir = os.path.join(out, "frames")
    if args.params:
        with open(args.params, encoding="utf-8") as f:
            fields = json.load(f)
        for key in ("start", "velocity"):
            if key in fields:
                fields[key] = tuple(fields[key])
        params = synth.SynthParams(**fields)
        court = load_court(args.court) if args.court else None
        tag = None
    else:
        sample = synth.random_rally(
            seed, noise_sigma=args.noise_sigma, dropout_p=args.dropout)
        params, court, tag = sample.params, sample.court, sample.tag
    truth = synth.render_frames(params, synth.COURT_GREEN, frames_dir,
                                width=args.width, height=args.height,
                                court=court, image_format=args.format)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "ground_truth.json"), "w",
              encoding="utf-8") as f:
        json.dump(truth.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    if court is None:
        print(json.dumps(truth.to_dict(), indent=2, sort_keys=True))
        if args.manifest:
            print("no court spec, manifest entry skipped", file=sys.stderr)
        return 0
    save_court(court, os.path.join(out, "court.json"))
    entry = {
        "id": args.id or os.path.basename(os.path.normpath(out)),
        "source": os.path.abspath(frames_dir),
        "court": os.path.abspath(os.path.join(out, "court.json")),
        "gt_call": truth.true_call,
        "gt_bounce": list(truth.bounce_point),
        "tag": tag or "normal",
    }
    if args.manifest:
        entries = []
        if os.path.exists(args.manifest):
            with open(args.manifest, encoding="utf-8") as f:
                entries = json.load(f)
        base = os.path.dirname(os.path.abspath(args.manifest))
        entry["source"] = os.path.relpath(entry["source"], base)
        entry["court"] = os.path.relpath(entry["court"], base)
        entries.append(entry)
        with open(args.manifest, "w", encoding="utf-8") as f:
            json.dump(entries, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"appended sample {entry['id']} to {args.manifest}")
    else:
        print(json.dumps(entry, indent=2, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    cfg = harness.load_config(args.config, args.overrides)
    annotations = load_manifest(args.manifest)
    report = harness.evaluate_manifest(annotations, cfg)
    write_report_json(report, args.out)
    if args.csv:
        write_report_csv(report, args.csv)
    for tag, stats in sorted(report.per_tag.items()):
        print(f"{tag}: {stats.successes}/{stats.count} = {stats.percent}")
    print(f"total: {report.total.successes}/{report.total.count} "
          f"= {report.total.percent}")
    return 0


def _parse_line(text: str) -> CourtLine:
    parts = text.split(",")
    if len(parts) != 7:
        raise ConfigError(
            f"--line needs name,x0,y0,x1,y1,thickness,in_side; got {text!r}")
    name = parts[0]
    x0, y0, x1, y1, thickness = (float(v) for v in parts[1:6])
    return CourtLine(name, (x0, y0), (x1, y1), thickness, int(parts[6]))


def _cmd_init_court(args) -> int:
    lines = tuple(_parse_line(t) for t in args.line)
    court = CourtLineSpec(lines, delta=args.delta)
    save_court(court, args.out)
    print(f"wrote {args.out}: {len(lines)} line(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="courtcall",
        description="Monocular tennis line calling: detect the ball, "
                    "predict the bounce, rule IN or OUT.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="frames dir -> detections file")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("analyze",
                       help="detections + court -> prediction + verdict")
    p.add_argument("--detections", required=True)
    p.add_argument("--court", required=True)
    p.add_argument("--out")
    p.add_argument("--overlay", help="write a PNG overlay of the analysis")
    p.add_argument("--overlay-frame", help="frame image to draw the overlay on")
    _add_config_args(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("run", help="frames + court -> verdict")
    p.add_argument("--frames", required=True)
    p.add_argument("--court", required=True)
    p.add_argument("--out")
    p.add_argument("--overlay", help="write a PNG overlay of the analysis")
    _add_config_args(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic rally sample")
    p.add_argument("--out", required=True, help="sample directory to create")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--id", help="sample id for the manifest entry")
    p.add_argument("--params", help="SynthParams JSON file (else random rally)")
    p.add_argument("--court", help="court spec used with --params")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--dropout", type=float, default=0.05)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--format", choices=("png", "ppm"), default="png")
    p.add_argument("--manifest", help="manifest JSON to append the entry to")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="manifest -> accuracy report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write a flat per-sample CSV")
    _add_config_args(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("init-court", help="write a court spec file")
    p.add_argument("--line", action="append", required=True,
                   metavar="NAME,X0,Y0,X1,Y1,THICKNESS,IN_SIDE",
                   help="repeatable; in_side +1/-1 picks the in-bounds side "
                        "of the directed segment")
    p.add_argument("--delta", type=float, default=0.0,
                   help="margin bias toward IN calls, px")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_init_court)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ANALYSIS_ERRORS as e:
        print(f"analysis failed: {e}", file=sys.stderr)
        return 1
    except _USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CourtCallError as e:
        print(f"analysis failed: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:  # console script
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
