"""Command-line front end.

Each subcommand reads and writes files so every stage can be inspected:

    simulate   scene.json -> cube.rfc1, truth.json
    process    cube.rfc1 -> spectrograms, envelopes, distance, RD/RA frames
    detect     envelopes.csv or distance.csv -> mdis.json, mask.csv
    templates  processed recordings + truth -> templates.json
    score      processed recording + templates.json -> scores.csv
    trigger    scores.csv + mdis.json -> events.json, report.json
    fidelity   manifest.json -> fidelity.csv
    dump-config

Exit status is 0 on success, 2 for usage errors, 3 for unreadable or invalid
inputs and 4 for numerical failures. Errors are reported on stderr as one JSON
object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .config import ConfigError, PipelineConfig, RadarSection, _section_from_dict, dump_config, load_config
from .datacube import CubeFormatError, load_cube, save_cube
from .envelope import abs_distance
from .fidelity import score_signs, select_top_k
from .motiondetect import intervals_to_mask, segmentation_accuracy
from .pipeline import build_templates, detect, process_cube, score_recording, step_features, truth_mdis
from .seqdecode import csa_trigger_double, csa_trigger_single, evaluate_detection, gamma_sweep
from .synth import GroundTruth, SimulationError, scene_from_dict, simulate

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_truth(path) -> GroundTruth:
    doc = rio.read_json(path)
    try:
        return GroundTruth.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise rio.FormatError(f"{path}: not a ground-truth document ({exc})") from exc


# --- subcommands ------------------------------------------------------------


def cmd_simulate(args, cfg: PipelineConfig) -> dict:
    doc = rio.read_json(args.scene)
    radar = cfg.radar
    if "radar" in doc:
        radar = _section_from_dict("radar", RadarSection, doc["radar"])
    try:
        scene = scene_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise rio.FormatError(f"{args.scene}: invalid scene ({exc})") from exc
    cube, truth = simulate(scene, radar.build())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_cube(cube, out / "cube.rfc1")
    rio.write_json(out / "truth.json", {k: v for k, v in truth.to_dict().items() if k != "schema_version"})
    return {"cube": str(out / "cube.rfc1"), "truth": str(out / "truth.json"), "segments": len(truth.segments)}


def cmd_process(args, cfg: PipelineConfig) -> dict:
    cube = load_cube(args.cube)
    res = process_cube(cube, cfg, with_ra=not args.no_ra)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_atomic(out / "spectrogram.csv", rio.spectrogram_to_csv(res.spectrogram))
    rio.write_atomic(out / "step_spectrogram.csv", rio.spectrogram_to_csv(res.step_spectrogram))
    rio.write_atomic(out / "envelopes.csv", rio.envelopes_to_csv(res.envelopes))
    rio.write_atomic(out / "distance.csv", rio.distance_to_csv(res.distance, res.envelopes.times_s))
    if args.pgm:
        rio.write_atomic(out / "spectrogram.pgm", rio.to_pgm(res.spectrogram.power[::-1]))
    n_rd = n_ra = 0
    if not args.no_frames:
        stride = args.frame_stride
        for sub, frames, to_csv in (
            ("rd", res.rd_frames, rio.rd_to_csv),
            ("ra", res.enhanced_ra, rio.ra_to_csv),
        ):
            if not frames:
                continue
            (out / sub).mkdir(exist_ok=True)
            for i in range(0, len(frames), stride):
                rio.write_atomic(out / sub / f"frame_{i:05d}.csv", to_csv(frames[i]))
                if args.pgm:
                    rio.write_atomic(out / sub / f"frame_{i:05d}.pgm", rio.to_pgm(frames[i].magnitude))
            n_written = len(range(0, len(frames), stride))
            n_rd, n_ra = (n_written, n_ra) if sub == "rd" else (n_rd, n_written)
    cfg_used = res.cube.config
    summary = {
        "channel_kind": res.cube.channel_kind,
        "n_channels": res.cube.n_chan,
        "range_bins": res.range_bins,
        "cfar_hit": res.cfar_hit,
        "n_rd_frames": len(res.rd_frames),
        "rd_frame_rate_hz": res.cube.slow_time_rate / res.cube.cpi_length,
        "n_ra_frames": len(res.enhanced_ra),
        "rd_frames_written": n_rd,
        "ra_frames_written": n_ra,
        "n_steps": len(res.distance),
        "step_s": res.distance.step_s,
        "range_bin_m": cfg_used.range_bin_m,
    }
    rio.write_json(out / "process.json", summary)
    return summary


def _distance_from_file(path):
    text = _read_text(path)
    first = text.split("\n", 1)[0].strip()
    if first.startswith("time_s,upper_hz"):
        env = rio.envelopes_from_csv(text)
        t = env.times_s
        return abs_distance(env, normalize=False, step_s=float(t[1] - t[0]) if len(t) > 1 else 0.2)
    return rio.distance_from_csv(text)


def cmd_detect(args, cfg: PipelineConfig) -> dict:
    dv = _distance_from_file(args.input)
    if len(dv) == 0:
        raise rio.FormatError(f"{args.input}: empty stream")
    mdis = detect(dv, cfg, args.detector)
    mask = intervals_to_mask(mdis, len(dv))
    doc = rio.mdis_to_json(mdis, dv.step_s, len(dv))
    doc["detector"] = args.detector
    if args.truth:
        truth = _load_truth(args.truth)
        if truth.mask.size != mask.size:
            raise rio.FormatError(f"truth mask has {truth.mask.size} steps, stream has {mask.size}")
        doc["accuracy"] = segmentation_accuracy(mask, truth.mask)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_json(out / "mdis.json", doc)
    rio.write_atomic(out / "mask.csv", rio.mask_to_csv(mask))
    return {"n_mdis": len(mdis), **({"accuracy": doc["accuracy"]} if "accuracy" in doc else {})}


def _features(proc_dir, cfg: PipelineConfig) -> np.ndarray:
    spec = rio.spectrogram_from_csv(_read_text(Path(proc_dir) / "step_spectrogram.csv"))
    s = cfg.scorer
    return step_features(spec, s.n_bands, s.band_limit_hz, s.dc_bins)


def cmd_templates(args, cfg: PipelineConfig) -> dict:
    recordings = []
    for proc_dir, truth_path in args.recording:
        recordings.append((_features(proc_dir, cfg), truth_mdis(_load_truth(truth_path))))
    templates = build_templates(recordings, cfg.scorer.max_templates)
    doc = {"classes": {k: [t.tolist() for t in v] for k, v in templates.items()}}
    rio.write_json(args.out, doc)
    return {"classes": {k: len(v) for k, v in templates.items()}}


def cmd_score(args, cfg: PipelineConfig) -> dict:
    doc = rio.read_json(args.templates)
    try:
        templates = {k: [np.asarray(t, dtype=float) for t in v] for k, v in doc["classes"].items()}
    except (KeyError, AttributeError, ValueError) as exc:
        raise rio.FormatError(f"{args.templates}: invalid templates ({exc})") from exc
    features = _features(args.proc_dir, cfg)
    dv = rio.distance_from_csv(_read_text(Path(args.proc_dir) / "distance.csv"))
    stream = score_recording(features, dv, templates, cfg)
    rio.write_atomic(args.out, rio.scores_to_csv(stream))
    return {"n_steps": len(stream), "classes": list(stream.labels)}


def cmd_trigger(args, cfg: PipelineConfig) -> dict:
    stream = rio.scores_from_csv(_read_text(args.scores))
    mdis, _ = rio.mdis_from_json(rio.read_json(args.mdis))
    tcfg = cfg.trigger.build()
    if tcfg.trigger_class not in stream.labels:
        raise rio.FormatError(f"trigger class {tcfg.trigger_class!r} absent from score columns")
    rule = csa_trigger_double if args.mode == "double" else csa_trigger_single
    events = [e for e in (rule(stream, m, tcfg) for m in mdis) if e is not None]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_json(out / "events.json", {"mode": args.mode, **rio.events_to_json(events)})
    report = {"mode": args.mode, "n_events": len(events), "evaluated": False}
    truth = truth_mdis(_load_truth(args.truth)) if args.truth else None
    if truth is not None:
        r = evaluate_detection(events, truth, tcfg.trigger_class)
        report = {**report, **r.to_dict(), "evaluated": True}
    rio.write_json(out / "report.json", report)
    if args.sweep:
        if truth is None:
            raise UsageError("--sweep needs --truth")
        gammas = np.round(np.linspace(0.01, 0.99, 99), 2)
        ratio = tcfg.gamma_low / tcfg.gamma
        rows = gamma_sweep([(stream, mdis, truth)], tcfg.trigger_class, gammas, ratio, tcfg.dwell_fraction)
        lines = ["gamma,gamma_low,single_frr,single_far,single_dr,double_frr,double_far,double_dr"]
        for row in rows:
            s, d = row["single"], row["double"]
            vals = [row["gamma"], row["gamma_low"], s.frr, s.far, s.detection_rate, d.frr, d.far, d.detection_rate]
            lines.append(",".join("%.17g" % v for v in vals))
        rio.write_atomic(args.sweep, "\n".join(lines) + "\n")
    return report


def cmd_fidelity(args, cfg: PipelineConfig) -> dict:
    doc = rio.read_json(args.manifest)
    base = Path(args.manifest).parent
    try:
        signs = doc["signs"]
        groups = {
            sign: tuple(
                [rio.envelopes_from_csv(_read_text(base / p)) for p in entry[g]] for g in ("native", "imitation")
            )
            for sign, entry in signs.items()
        }
    except (KeyError, TypeError, AttributeError) as exc:
        raise rio.FormatError(f"{args.manifest}: invalid manifest ({exc})") from exc
    table = score_signs(groups, cfg.fidelity.eps)
    k = args.k if args.k is not None else min(cfg.fidelity.k, len(table))
    top = select_top_k(table, k)
    rio.write_atomic(args.out, table.to_csv(order=top))
    return {"top": top}


def cmd_dump_config(args, cfg: PipelineConfig) -> dict | None:
    text = dump_config(cfg)
    if args.out:
        rio.write_atomic(args.out, text)
        return {"config": args.out}
    sys.stdout.write(text)
    return None


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rfsign", description="Radar sign-stream processing pipeline.")
    p.add_argument("--config", help="YAML pipeline configuration (defaults when omitted)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a scene into a cube and ground truth")
    s.add_argument("scene")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("process", help="compute RD, spectrogram, envelope and RA outputs")
    s.add_argument("cube")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--no-frames", action="store_true", help="skip per-frame RD/RA CSV files")
    s.add_argument("--frame-stride", type=int, default=1)
    s.add_argument("--no-ra", action="store_true", help="skip MUSIC range-angle processing")
    s.add_argument("--pgm", action="store_true", help="also write 8-bit PGM images")
    s.set_defaults(func=cmd_process)

    s = sub.add_parser("detect", help="segment a stream into motion intervals")
    s.add_argument("input", help="envelopes.csv or distance.csv")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--detector", choices=("vw", "fixed", "pbc"), default="vw")
    s.add_argument("--truth")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("templates", help="build scorer templates from labelled recordings")
    s.add_argument("--recording", nargs=2, action="append", required=True, metavar=("PROC_DIR", "TRUTH"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_templates)

    s = sub.add_parser("score", help="per-step class scores for a processed recording")
    s.add_argument("proc_dir")
    s.add_argument("--templates", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("trigger", help="cumulative-score trigger detection")
    s.add_argument("scores")
    s.add_argument("mdis")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--mode", choices=("single", "double"), default="double")
    s.add_argument("--truth")
    s.add_argument("--sweep", help="write a FAR/FRR curve over gamma to this CSV")
    s.set_defaults(func=cmd_trigger)

    s = sub.add_parser("fidelity", help="rank signs by envelope replicability")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int)
    s.set_defaults(func=cmd_fidelity)

    s = sub.add_parser("dump-config", help="print the effective configuration")
    s.add_argument("--out")
    s.set_defaults(func=cmd_dump_config)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "frame_stride", 1) < 1:
            raise UsageError("--frame-stride must be at least 1")
        cfg = load_config(args.config)
        result = args.func(args, cfg)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(EXIT_INPUT, "io", str(exc))
    except (CubeFormatError, rio.FormatError, ConfigError, SimulationError) as exc:
        return _fail(EXIT_INPUT, "input_format", str(exc))
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except (ValueError, IndexError) as exc:
        return _fail(EXIT_INPUT, "invalid_input", str(exc))
    if result is not None:
        sys.stdout.write(json.dumps(result) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
