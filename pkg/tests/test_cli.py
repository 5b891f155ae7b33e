import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rfsign.cli import main
from rfsign.datacube import load_cube, save_cube
from rfsign.envelope import EnvelopePair
from rfsign.io import distance_from_csv, envelopes_from_csv, envelopes_to_csv, rd_from_csv, read_json, scores_from_csv
from rfsign.pipeline import process_cube
from rfsign.synth import SEQUENCE_SIGNS, Scene, scene_to_dict


def run(capsys, *argv):
    capsys.readouterr()
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip().startswith("{") else out), err


def write_scene(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Five sequence kinds simulated and processed through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    dirs = {}
    for kind in range(1, 6):
        d = root / f"k{kind}"
        write_scene(root / f"k{kind}.json", {"sequence": {"kind": kind, "seed": 40 + kind}})
        assert main(["simulate", str(root / f"k{kind}.json"), "--out-dir", str(d)]) == 0
        assert main(["process", str(d / "cube.rfc1"), "--out-dir", str(d / "proc"), "--no-frames"]) == 0
        dirs[kind] = d
    templates = root / "templates.json"
    args = ["templates", "--out", str(templates)]
    for d in dirs.values():
        args += ["--recording", str(d / "proc"), str(d / "truth.json")]
    assert main(args) == 0
    return root, dirs, templates


class TestComposition:
    def test_every_kind_segments_and_scores(self, corpus, capsys):
        root, dirs, templates = corpus
        for kind, d in dirs.items():
            code, res, _ = run(capsys, "detect", d / "proc" / "envelopes.csv", "--out-dir", d / "det", "--truth", d / "truth.json")
            assert code == 0 and res["accuracy"] >= 0.95
            code, res, _ = run(capsys, "score", d / "proc", "--templates", templates, "--out", d / "scores.csv")
            assert code == 0
            stream = scores_from_csv((d / "scores.csv").read_text())
            assert set(SEQUENCE_SIGNS[kind]) <= set(stream.labels)
            assert len(stream) == read_json(d / "det" / "mdis.json")["n_steps"]

    def test_trigger_report_and_sweep(self, corpus, capsys):
        _, dirs, templates = corpus
        d = dirs[5]
        run(capsys, "detect", d / "proc" / "distance.csv", "--out-dir", d / "det")
        run(capsys, "score", d / "proc", "--templates", templates, "--out", d / "scores.csv")
        fired = {}
        for mode in ("single", "double"):
            code, res, _ = run(
                capsys, "trigger", d / "scores.csv", d / "det" / "mdis.json", "--out-dir", d / mode,
                "--mode", mode, "--truth", d / "truth.json", "--sweep", d / f"{mode}.csv",
            )
            assert code == 0 and res["evaluated"] and res["n_total"] == 1
            fired[mode] = {(e["mdi"]["start_step"], e["mdi"]["end_step"]) for e in read_json(d / mode / "events.json")["events"]}
        assert fired["single"] <= fired["double"]
        rows = list(csv.DictReader(open(d / "double.csv")))
        assert len(rows) == 99
        far = [float(r["single_far"]) for r in rows]
        frr = [float(r["single_frr"]) for r in rows]
        assert far == sorted(far, reverse=True) and frr == sorted(frr)

    def test_detector_choice(self, corpus, capsys):
        _, dirs, _ = corpus
        d = dirs[2]
        for det in ("vw", "fixed", "pbc"):
            code, res, _ = run(capsys, "detect", d / "proc" / "distance.csv", "--out-dir", d / det, "--detector", det, "--truth", d / "truth.json")
            assert code == 0 and 0 <= res["accuracy"] <= 1
            assert read_json(d / det / "mdis.json")["detector"] == det

    def test_outputs_reload_equal(self, corpus):
        _, dirs, _ = corpus
        d = dirs[1]
        res = process_cube(load_cube(d / "cube.rfc1"), with_ra=False)
        env = envelopes_from_csv((d / "proc" / "envelopes.csv").read_text())
        assert np.array_equal(env.upper, res.envelopes.upper) and np.array_equal(env.lower, res.envelopes.lower)
        dv = distance_from_csv((d / "proc" / "distance.csv").read_text())
        assert np.array_equal(dv.values, res.distance.values)


class TestProcess:
    def test_zero_scene(self, tmp_path, capsys):
        write_scene(tmp_path / "s.json", scene_to_dict(Scene(duration_s=0.8)))
        assert main(["simulate", str(tmp_path / "s.json"), "--out-dir", str(tmp_path)]) == 0
        code, res, _ = run(capsys, "process", tmp_path / "cube.rfc1", "--out-dir", tmp_path / "p")
        assert code == 0 and res["cfar_hit"] is False
        env = envelopes_from_csv((tmp_path / "p" / "envelopes.csv").read_text())
        assert not env.upper.any() and not env.lower.any()
        assert not rd_from_csv((tmp_path / "p" / "rd" / "frame_00000.csv").read_text()).magnitude.any()

    def test_deterministic(self, tmp_path):
        write_scene(tmp_path / "s.json", {"sequence": {"kind": 1, "seed": 2}})
        for name in ("a", "b"):
            main(["simulate", str(tmp_path / "s.json"), "--out-dir", str(tmp_path / name)])
            main(["process", str(tmp_path / name / "cube.rfc1"), "--out-dir", str(tmp_path / name / "p"), "--no-frames"])
        for f in ("spectrogram.csv", "envelopes.csv", "distance.csv"):
            assert (tmp_path / "a" / "p" / f).read_bytes() == (tmp_path / "b" / "p" / f).read_bytes()

    def test_bpm_cube_frame_rate_and_ra(self, tmp_path, capsys):
        doc = {
            "duration_s": 0.2,
            "scatterers": [{"trajectory": {"range_m": 1.0, "angle_deg": 20, "segments": [{"start_s": 0, "end_s": 1, "offset_mps": 0.5}]}}],
        }
        write_scene(tmp_path / "s.json", {**doc, "radar": {"carrier_hz": 77e9, "bandwidth_hz": 4e9, "prf_hz": 6400.0, "samples_per_pulse": 256,
                                                            "pulses_per_cpi": 256, "n_tx": 2, "n_rx": 4, "bpm_enabled": True}})
        assert main(["simulate", str(tmp_path / "s.json"), "--out-dir", str(tmp_path)]) == 0
        code, res, _ = run(capsys, "process", tmp_path / "cube.rfc1", "--out-dir", tmp_path / "p", "--frame-stride", "2", "--pgm")
        assert code == 0
        assert res["channel_kind"] == "virtual" and res["n_channels"] == 8
        assert res["rd_frame_rate_hz"] == pytest.approx(25.0)
        assert res["n_rd_frames"] == 5 and res["rd_frames_written"] == 3
        assert res["n_ra_frames"] == 4 and (tmp_path / "p" / "ra" / "frame_00002.csv").exists()
        assert (tmp_path / "p" / "rd" / "frame_00000.pgm").read_bytes().startswith(b"P5")


class TestFidelityCommand:
    def test_manifest(self, tmp_path, capsys):
        t = np.arange(20) * 0.2
        base = np.sin(t)
        signs = {}
        for sign, wobble in (("steady", 0.01), ("shaky", 0.6)):
            entry = {"native": [], "imitation": []}
            for group in entry:
                for i in range(2):
                    off = wobble * (i + 1) * (1 if group == "native" else -1)
                    name = f"{sign}_{group}_{i}.csv"
                    (tmp_path / name).write_text(envelopes_to_csv(EnvelopePair(base + 2 + off * np.sin(3 * t), base - 2 - off * np.cos(2 * t), t)))
                    entry[group].append(name)
            signs[sign] = entry
        write_scene(tmp_path / "m.json", {"signs": signs})
        code, res, _ = run(capsys, "fidelity", tmp_path / "m.json", "--out", tmp_path / "f.csv", "--k", 1)
        assert code == 0 and res["top"] == ["steady"]
        assert (tmp_path / "f.csv").read_text().splitlines()[0].startswith("sign,dtw,dfd")
        code, _, err = run(capsys, "fidelity", tmp_path / "m.json", "--out", tmp_path / "f.csv", "--k", 5)
        assert code == 3 and json.loads(err)["exit_code"] == 3


class TestConfigAndErrors:
    def test_dump_and_reuse_config(self, tmp_path, capsys):
        code, res, _ = run(capsys, "dump-config", "--out", tmp_path / "c.yaml")
        assert code == 0
        text = (tmp_path / "c.yaml").read_text().replace("t1_steps: 2", "t1_steps: 3")
        (tmp_path / "c.yaml").write_text(text)
        code, out, _ = run(capsys, "--config", tmp_path / "c.yaml", "dump-config")
        assert code == 0 and "t1_steps: 3" in out

    def test_usage_error(self, capsys):
        code, _, err = run(capsys, "detect")
        assert code == 2 and json.loads(err)["error"] == "usage"
        code, _, err = run(capsys, "process", "x", "--out-dir", "y", "--frame-stride", "0")
        assert code == 2

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "process", tmp_path / "absent.rfc1", "--out-dir", tmp_path)
        assert code == 3 and json.loads(err)["error"] == "io"

    def test_corrupt_cube(self, tmp_path, capsys):
        (tmp_path / "bad.rfc1").write_bytes(b"RFC1" + b"\x00" * 10)
        code, _, err = run(capsys, "process", tmp_path / "bad.rfc1", "--out-dir", tmp_path)
        assert code == 3 and json.loads(err)["error"] == "input_format"

    def test_bad_config(self, tmp_path, capsys):
        (tmp_path / "c.yaml").write_text("motion:\n  sigma9: 1\n")
        code, _, err = run(capsys, "--config", tmp_path / "c.yaml", "dump-config")
        assert code == 3 and "sigma9" in json.loads(err)["message"]

    def test_scene_out_of_range(self, tmp_path, capsys):
        write_scene(tmp_path / "s.json", {"duration_s": 0.1, "scatterers": [{"trajectory": {"range_m": 50.0}}]})
        code, _, err = run(capsys, "simulate", tmp_path / "s.json", "--out-dir", tmp_path)
        assert code == 3 and "range" in json.loads(err)["message"]

    def test_sweep_needs_truth(self, tmp_path, capsys):
        (tmp_path / "s.csv").write_text("# step_duration_s=0.2\nblank,teacher\n0.5,0.5\n")
        (tmp_path / "m.json").write_text(json.dumps({"step_s": 0.2, "mdis": []}))
        code, _, err = run(capsys, "trigger", tmp_path / "s.csv", tmp_path / "m.json", "--out-dir", tmp_path, "--sweep", tmp_path / "x.csv")
        assert code == 2 and "--truth" in json.loads(err)["message"]

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "rfsign.cli", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "simulate" in proc.stdout
