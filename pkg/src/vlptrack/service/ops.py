"""The work behind each service endpoint, kept HTTP-free for testing."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import bench, frameio
from ..config import (ConfigDocument, build_pipeline_config, build_scene,
                      dump_config, load_config, parse_config)
from ..errors import SchemaError
from ..pipeline import Pipeline
from ..scene import generate_sequence
from .models import (BenchRequest, BenchResponse, ReportRequest,
                     ReportResponse, ScenarioSpec, SimulateRequest,
                     SimulateResponse, TrackRequest, TrackResponse)


def resolve_config(request) -> ConfigDocument:
    if request.config_path is not None:
        return load_config(request.config_path)
    return parse_config(request.config)


def run_simulate(request: SimulateRequest) -> SimulateResponse:
    doc = resolve_config(request)
    if request.seed is not None:
        doc = doc.model_copy(deep=True)
        doc.scene.seed = request.seed
    scene = build_scene(doc)
    out = Path(request.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truths = []
    count = 0
    for frame, truth in generate_sequence(scene):
        frameio.write_frame(out, frame)
        truths.append(frameio.truth_to_dict(truth))
        count += 1
        if request.limit_frames is not None and count >= request.limit_frames:
            break
    truth_path = out / "groundtruth.jsonl"
    frameio.write_jsonl(truth_path, truths)
    config_path = out / "config.json"
    config_path.write_text(dump_config(doc))
    return SimulateResponse(out_dir=str(out), frames_written=count,
                            groundtruth_path=str(truth_path),
                            config_path=str(config_path))


def run_track(request: TrackRequest) -> TrackResponse:
    doc = resolve_config(request)
    config = build_pipeline_config(doc)
    pipeline = Pipeline(config)
    frames = frameio.read_frames(request.frames_dir, doc.scene.fps)
    records = []
    status_counts: dict[str, int] = {}
    proc = []
    for fix in pipeline.run(frames):
        records.append(frameio.fix_to_dict(fix))
        status_counts[fix.status] = status_counts.get(fix.status, 0) + 1
        proc.append(fix.proc_ms)
    out_path = Path(request.out_path) if request.out_path else (
        Path(request.frames_dir) / "fixes.jsonl")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frameio.write_jsonl(out_path, records)
    return TrackResponse(fixes_path=str(out_path), frames=len(records),
                         mean_proc_ms=float(np.mean(proc)) if proc else 0.0,
                         status_counts=status_counts)


def resolve_scenarios(request: BenchRequest) -> ScenarioSpec:
    if request.scenarios is not None and request.scenarios_path is not None:
        raise SchemaError("scenarios", "give either scenarios or scenarios_path")
    if request.scenarios is not None:
        return request.scenarios
    if request.scenarios_path is not None:
        try:
            raw = json.loads(Path(request.scenarios_path).read_text())
        except FileNotFoundError:
            raise SchemaError(str(request.scenarios_path),
                              "scenario file not found") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(str(request.scenarios_path),
                              f"invalid JSON: {exc}") from exc
        return ScenarioSpec.model_validate(raw)
    return ScenarioSpec()


def run_bench(request: BenchRequest) -> BenchResponse:
    doc = resolve_config(request)
    spec = resolve_scenarios(request)
    scene = build_scene(doc)
    config = build_pipeline_config(doc)
    out = Path(request.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comparison: list[dict] = []
    failures: dict[str, str] = {}

    if spec.timing_frames > 0:
        try:
            paired = bench.run_paired_comparison(scene, config,
                                                 spec.timing_frames)
            bench.emit_experiment(paired, out / "timing")
            comparison.extend(paired.comparison)
        except Exception as exc:  # recorded, other scenarios continue
            failures["timing"] = str(exc)

    if spec.occlusion_fractions:
        try:
            occ = bench.run_occlusion_sweep(scene, spec.occlusion_fractions,
                                            config, spec.frames_per_scenario,
                                            spec.include_both_lamps)
            bench.emit_experiment(occ, out / "occlusion")
            for scenario in occ.scenarios:
                comparison.append({
                    "method": f"occlusion/{scenario.name}",
                    "p90_tracking_cm": scenario.summary["tracking_cm"]["p90"],
                    "mean_proc_ms": scenario.summary["proc_ms"]["mean"]})
        except Exception as exc:
            failures["occlusion"] = str(exc)

    if spec.heights_cm:
        try:
            heights = bench.run_height_sweep(scene, spec.heights_cm, config,
                                             spec.frames_per_scenario)
            bench.emit_experiment(heights, out / "heights")
            for scenario in heights.scenarios:
                row = {"method": f"heights/{scenario.name}",
                       "skipped": scenario.skipped}
                if not scenario.skipped:
                    row["p90_positioning_cm"] = (
                        scenario.summary["positioning_cm"]["p90"])
                comparison.append(row)
        except Exception as exc:
            failures["heights"] = str(exc)

    table = {"comparison": comparison, "failures": failures}
    (out / "comparison.json").write_text(
        json.dumps(table, indent=2, sort_keys=True) + "\n")
    _write_comparison_csv(out / "comparison.csv", comparison)
    return BenchResponse(out_dir=str(out), comparison=comparison,
                         failures=failures)


def _write_comparison_csv(path: Path, comparison: list[dict]) -> None:
    columns: list[str] = []
    for row in comparison:
        for key in row:
            if key not in columns:
                columns.append(key)
    lines = [",".join(columns)]
    for row in comparison:
        lines.append(",".join("" if row.get(c) is None else str(row.get(c))
                              for c in columns))
    path.write_text("\n".join(lines) + "\n")


def run_report(request: ReportRequest) -> ReportResponse:
    doc = resolve_config(request)
    config = build_pipeline_config(doc)
    fixes = [frameio.fix_from_dict(r)
             for r in frameio.read_jsonl(request.fixes_path)]
    truths = {r["frame"]: frameio.truth_from_dict(r)
              for r in frameio.read_jsonl(request.groundtruth_path)}
    paired = [(fix, truths[fix.frame_index]) for fix in fixes
              if fix.frame_index in truths]
    if not paired:
        raise SchemaError(str(request.fixes_path),
                          "no overlapping frames between fixes and ground truth")
    lamp_z = None
    for lamp in doc.scene.lamps:
        if lamp.id == doc.tracker.wanted_lamp_ids[0]:
            lamp_z = lamp.position[2]
    result = bench.collect_scenario(
        "report", [f for f, _ in paired], [t for _, t in paired], config,
        lamp_z)
    files = bench.emit_report(result, request.out_dir)
    return ReportResponse(out_dir=str(request.out_dir),
                          files=[str(p) for p in files],
                          summary=result.summary)
