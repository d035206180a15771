import hashlib
import json
from pathlib import Path

import pytest

from test_service import small_config
from vlptrack.cli import main


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(small_config(noise_sigma=2.0, seed=13)))
    return str(path)


def sha256_tree(directory, pattern):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(directory).glob(pattern))}


def fixes_without_timing(path):
    rows = []
    for line in open(path):
        record = json.loads(line)
        record.pop("proc_ms", None)
        rows.append(record)
    return rows


class TestSimulateTrackDeterminism:
    def test_same_seed_identical_outputs(self, config_path, tmp_path, capsys):
        for name in ("a", "b"):
            assert main(["simulate", "--config", config_path,
                         "--out", str(tmp_path / name)]) == 0
            assert main(["track", "--config", config_path,
                         "--frames", str(tmp_path / name)]) == 0
        hashes_a = sha256_tree(tmp_path / "a", "frame_*.pgm")
        hashes_b = sha256_tree(tmp_path / "b", "frame_*.pgm")
        assert hashes_a and hashes_a == hashes_b
        assert (fixes_without_timing(tmp_path / "a" / "fixes.jsonl")
                == fixes_without_timing(tmp_path / "b" / "fixes.jsonl"))

    def test_seed_override_changes_frames(self, config_path, tmp_path):
        assert main(["simulate", "--config", config_path,
                     "--out", str(tmp_path / "s1"), "--seed", "101"]) == 0
        assert main(["simulate", "--config", config_path,
                     "--out", str(tmp_path / "s2"), "--seed", "202"]) == 0
        assert (sha256_tree(tmp_path / "s1", "*.pgm")
                != sha256_tree(tmp_path / "s2", "*.pgm"))


class TestTrackCommand:
    def test_summary_line_and_jsonl(self, config_path, tmp_path, capsys):
        assert main(["simulate", "--config", config_path,
                     "--out", str(tmp_path / "f"), "--quiet"]) == 0
        assert main(["track", "--config", config_path,
                     "--frames", str(tmp_path / "f")]) == 0
        out = capsys.readouterr().out
        assert "mean proc_ms" in out
        lines = (tmp_path / "f" / "fixes.jsonl").read_text().splitlines()
        frames = len(list((tmp_path / "f").glob("frame_*.pgm")))
        assert len(lines) == frames
        for line in lines:
            record = json.loads(line)
            assert {"frame", "t", "status", "x_cm", "y_cm",
                    "H_cm", "lamps", "proc_ms"} <= set(record)


class TestErrorContract:
    def test_missing_config_single_line_error(self, tmp_path, capsys):
        rc = main(["track", "--config", str(tmp_path / "none.json"),
                   "--frames", str(tmp_path)])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert len(err.strip().splitlines()) == 1

    def test_schema_error_names_key(self, tmp_path, capsys):
        bad = small_config()
        del bad["scene"]["lamps"][0]["position"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        rc = main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "scene.lamps[0].position" in capsys.readouterr().err


class TestBenchCommand:
    def test_occlusion_spec_layout(self, tmp_path, capsys):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(small_config(noise_sigma=0.0)))
        spec = tmp_path / "scalars.json"
        spec.write_text(json.dumps({
            "frames_per_scenario": 20,
            "occlusion_fractions": [0.3, 0.7],
            "heights_cm": [],
            "timing_frames": 10,
        }))
        rc = main(["bench", "--config", str(cfg), "--scenarios", str(spec),
                   "--out", str(tmp_path / "rep")])
        assert rc == 0
        occ = tmp_path / "rep" / "occlusion"
        assert sorted(p.name for p in occ.iterdir() if p.is_dir()) == [
            "control", "single_high", "single_low"]
        table = (tmp_path / "rep" / "comparison.csv").read_text()
        assert "pipeline" in table and "baseline_full_frame" in table
        assert "mean_proc_ms" in table.splitlines()[0]

    def test_height_sweep_rows(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(small_config(noise_sigma=0.0)))
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({
            "frames_per_scenario": 10,
            "occlusion_fractions": [],
            "heights_cm": [130, 140, 150],
            "timing_frames": 0,
        }))
        rc = main(["bench", "--config", str(cfg), "--scenarios", str(spec),
                   "--out", str(tmp_path / "rep"), "--quiet"])
        assert rc == 0
        rows = json.loads((tmp_path / "rep" / "comparison.json").read_text())
        heights = [r for r in rows["comparison"]
                   if r["method"].startswith("heights/")]
        assert len(heights) == 3


class TestReportCommand:
    def test_report_from_track_output(self, config_path, tmp_path):
        assert main(["simulate", "--config", config_path,
                     "--out", str(tmp_path / "f"), "--quiet"]) == 0
        assert main(["track", "--config", config_path,
                     "--frames", str(tmp_path / "f")]) == 0
        rc = main(["report", "--config", config_path,
                   "--fixes", str(tmp_path / "f" / "fixes.jsonl"),
                   "--truth", str(tmp_path / "f" / "groundtruth.jsonl"),
                   "--out", str(tmp_path / "rep"), "--quiet"])
        assert rc == 0
        summary = json.loads((tmp_path / "rep" / "summary.json").read_text())
        assert summary["summary"]["positioning_cm"]["p90"] is not None
