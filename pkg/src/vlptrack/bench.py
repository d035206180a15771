"""Experiment runners: baselines, occlusion/height sweeps, report files.

Every comparison is paired: methods consume byte-identical frame
sequences, and timing is measured around per-frame processing only
(rendering and file I/O stay outside the clock). Reports are data files,
not plots: summary.json, errors.csv (one row per frame), cdf_*.csv, and
timing.csv per scenario.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detector import acquire
from .errors import (DegenerateGeometryError, InvalidHeightError,
                     SceneValidationError)
from .geometry import empirical_cdf, percentile, positioning_error_3d
from .pipeline import (ACQUIRING, FIX, LampObservation, Pipeline,
                       PipelineConfig, PositionFix, solve_double_lamp)
from .scene import (GroundTruth, OcclusionEvent, SceneConfig, Trajectory,
                    WorldPoint, generate_sequence, project_lamp)


@dataclass
class ScenarioResult:
    name: str
    metadata: dict
    frame_rows: list[dict] = field(default_factory=list)
    samples: dict[str, list[float]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    skipped: bool = False
    warning: str | None = None


@dataclass
class ExperimentReport:
    title: str
    scenarios: list[ScenarioResult]
    comparison: list[dict] = field(default_factory=list)


def baseline_full_frame(frames, config: PipelineConfig) -> list[PositionFix]:
    """Reference positioner: full-frame detection and decoding every frame.

    No prediction, no tracking state; the whole image is searched each
    time, which is what the tracking pipeline exists to avoid.
    """
    fixes = []
    last = None
    for frame in frames:
        t0 = time.perf_counter()
        found = acquire(frame, config.id_table, set(config.wanted),
                        config.detector)
        observations = []
        for lamp_id in config.wanted:
            blob = found.get(lamp_id)
            if blob is None:
                observations.append(LampObservation(lamp_id, None, None, 0.0))
            else:
                observations.append(LampObservation(lamp_id, *blob.centroid, 1.0))
        if len(found) == len(config.wanted):
            try:
                x, y, height = solve_double_lamp(
                    found[config.wanted[0]].centroid,
                    found[config.wanted[1]].centroid, config)
                last = (x, y, height)
                fix = PositionFix(frame.frame_index, frame.timestamp, FIX,
                                  x, y, height, stale=False, lamps=observations)
            except (DegenerateGeometryError, InvalidHeightError):
                fix = PositionFix(frame.frame_index, frame.timestamp, ACQUIRING,
                                  *(last or (None, None, None)), stale=True,
                                  lamps=observations)
        else:
            fix = PositionFix(frame.frame_index, frame.timestamp, ACQUIRING,
                              *(last or (None, None, None)), stale=True,
                              lamps=observations)
        fix.proc_ms = (time.perf_counter() - t0) * 1e3
        fixes.append(fix)
    return fixes


def lamp_plane_height(truth: GroundTruth, lamp_z_cm: float) -> float:
    return lamp_z_cm - truth.terminal_position.z


def world_tracking_error_cm(obs: LampObservation, truth: GroundTruth,
                            lamp_z_cm: float, intrinsics) -> float | None:
    """Pixel tracking offset mapped onto the lamp plane, in cm."""
    lamp_truth = truth.lamps.get(obs.lamp_id)
    if obs.u is None or lamp_truth is None or lamp_truth.centroid is None:
        return None
    du = (obs.u - lamp_truth.centroid.u) * intrinsics.pixel_pitch_x_m
    dv = (obs.v - lamp_truth.centroid.v) * intrinsics.pixel_pitch_y_m
    h = lamp_plane_height(truth, lamp_z_cm)
    return math.hypot(du, dv) * h / intrinsics.focal_length_m


def collect_scenario(name: str, fixes: list[PositionFix],
                     truths: list[GroundTruth], config: PipelineConfig,
                     lamp_z_cm: float, metadata: dict | None = None) -> ScenarioResult:
    """Per-frame error rows and pooled samples for one run."""
    result = ScenarioResult(name=name, metadata=metadata or {})
    tracking, positioning, timing = [], [], []
    for fix, truth in zip(fixes, truths):
        row = {"frame": fix.frame_index, "t": round(fix.timestamp, 6),
               "status": fix.status, "proc_ms": round(fix.proc_ms or 0.0, 4)}
        timing.append(fix.proc_ms or 0.0)
        if fix.status == FIX and not fix.stale:
            t = truth.terminal_position
            err3 = positioning_error_3d(
                (fix.x_cm, fix.y_cm, fix.height_cm),
                (t.x, t.y, lamp_plane_height(truth, lamp_z_cm)))
            positioning.append(err3)
            row["positioning_cm"] = round(err3, 6)
            for obs in fix.lamps:
                err = world_tracking_error_cm(obs, truth, lamp_z_cm,
                                              config.intrinsics)
                if err is not None:
                    tracking.append(err)
                    row[f"tracking_cm_lamp{obs.lamp_id}"] = round(err, 6)
        result.frame_rows.append(row)
    result.samples = {"tracking_cm": tracking, "positioning_cm": positioning,
                      "proc_ms": timing}
    result.summary = summarize_samples(result.samples)
    result.summary["frames"] = len(fixes)
    result.summary["fix_frames"] = sum(1 for f in fixes if f.status == FIX)
    return result


def summarize_samples(samples: dict[str, list[float]]) -> dict:
    out = {}
    for metric, values in samples.items():
        if values:
            out[metric] = {"count": len(values),
                           "mean": float(np.mean(values)),
                           "p90": percentile(values, 0.9)}
        else:
            out[metric] = {"count": 0, "mean": None, "p90": None}
    return out


def render_all(scene: SceneConfig, limit: int | None = None):
    frames, truths = [], []
    for frame, truth in generate_sequence(scene):
        frames.append(frame)
        truths.append(truth)
        if limit is not None and len(frames) >= limit:
            break
    return frames, truths


def _lamp_z(scene: SceneConfig, config: PipelineConfig) -> float:
    return scene.lamps[[l.id for l in scene.lamps].index(config.wanted[0])].position.z


def run_paired_comparison(scene: SceneConfig, config: PipelineConfig,
                          n_frames: int | None = None) -> ExperimentReport:
    """Pipeline vs full-frame baseline on one identical frame sequence.

    Adds centroid-agreement statistics between the two methods and against
    ground truth (pixels), plus the timing ratio.
    """
    frames, truths = render_all(scene, n_frames)
    lamp_z = _lamp_z(scene, config)
    pipe_fixes = list(Pipeline(config).run(frames))
    base_fixes = baseline_full_frame(frames, config)

    pipeline_result = collect_scenario("pipeline", pipe_fixes, truths, config, lamp_z)
    baseline_result = collect_scenario("baseline_full_frame", base_fixes, truths,
                                       config, lamp_z)

    cross_px, truth_px = [], []
    for pf, bf, truth in zip(pipe_fixes, base_fixes, truths):
        if pf.status != FIX or bf.status != FIX:
            continue
        for po, bo in zip(pf.lamps, bf.lamps):
            if po.u is None or bo.u is None:
                continue
            cross_px.append(math.hypot(po.u - bo.u, po.v - bo.v))
            lamp_truth = truth.lamps[po.lamp_id].centroid
            truth_px.append(math.hypot(po.u - lamp_truth.u, po.v - lamp_truth.v))
    comparison = [
        {"method": "pipeline",
         "mean_proc_ms": pipeline_result.summary["proc_ms"]["mean"],
         "p90_positioning_cm": pipeline_result.summary["positioning_cm"]["p90"],
         "p90_tracking_cm": pipeline_result.summary["tracking_cm"]["p90"]},
        {"method": "baseline_full_frame",
         "mean_proc_ms": baseline_result.summary["proc_ms"]["mean"],
         "p90_positioning_cm": baseline_result.summary["positioning_cm"]["p90"],
         "p90_tracking_cm": baseline_result.summary["tracking_cm"]["p90"]},
    ]
    report = ExperimentReport("paired_comparison",
                              [pipeline_result, baseline_result], comparison)
    report.comparison.append({
        "method": "agreement",
        "mean_cross_px": float(np.mean(cross_px)) if cross_px else None,
        "mean_truth_px": float(np.mean(truth_px)) if truth_px else None,
        "timing_ratio": (baseline_result.summary["proc_ms"]["mean"]
                         / pipeline_result.summary["proc_ms"]["mean"]),
    })
    return report


def occlusion_bursts(lamp_ids, fractions, first_frame: int, last_frame: int,
                     burst_len: int = 5, gap: int = 5) -> list[OcclusionEvent]:
    """Periodic short occlusions cycling through the requested fractions.

    Bursts stay at or below the loss frame budget so the tracker is
    stressed without being declared lost.
    """
    events = []
    k = 0
    start = first_frame
    while start + burst_len - 1 <= last_frame:
        fraction = fractions[k % len(fractions)]
        for lamp_id in lamp_ids:
            events.append(OcclusionEvent(lamp_id, start, start + burst_len - 1,
                                         fraction))
        k += 1
        start += burst_len + gap
    return events


def run_occlusion_sweep(base_scene: SceneConfig, fractions: list[float],
                        config: PipelineConfig, frames_per_scenario: int = 100,
                        include_both_lamps: bool = True) -> ExperimentReport:
    """Tracking error vs occlusion severity, against the unoccluded control.

    Scenario arms: control, single-lamp below 50%, single-lamp 50-90%,
    and optionally both lamps occluded together.
    """
    for fraction in fractions:
        if not 0.2 <= fraction <= 0.9:
            raise ValueError("occlusion fractions must lie in [0.2, 0.9]")
    low = [f for f in fractions if f < 0.5]
    high = [f for f in fractions if f >= 0.5]
    lamp_z = _lamp_z(base_scene, config)
    first, last = 8, frames_per_scenario - 1

    arms: list[tuple[str, list[OcclusionEvent], dict]] = [
        ("control", [], {"fractions": []})]
    if low:
        arms.append(("single_low", occlusion_bursts([config.wanted[0]], low,
                                                    first, last),
                     {"fractions": low, "lamps": [config.wanted[0]]}))
    if high:
        arms.append(("single_high", occlusion_bursts([config.wanted[0]], high,
                                                     first, last),
                     {"fractions": high, "lamps": [config.wanted[0]]}))
    if include_both_lamps and (high or low):
        both_fracs = high or low
        arms.append(("both_lamps", occlusion_bursts(list(config.wanted),
                                                    both_fracs, first, last),
                     {"fractions": both_fracs, "lamps": list(config.wanted)}))

    scenarios = []
    for name, events, meta in arms:
        scene = replace(base_scene, occlusions=events)
        frames, truths = render_all(scene, frames_per_scenario)
        fixes = list(Pipeline(config).run(frames))
        scenarios.append(collect_scenario(name, fixes, truths, config,
                                          lamp_z, metadata=meta))
    return ExperimentReport("occlusion_sweep", scenarios)


def run_height_sweep(base_scene: SceneConfig, heights_cm: list[float],
                     config: PipelineConfig,
                     frames_per_scenario: int = 100) -> ExperimentReport:
    """Positioning error at several camera-to-lamp distances.

    Heights that push a lamp out of the field of view produce a skipped
    scenario row with a warning instead of failing the sweep.
    """
    lamp_z = _lamp_z(base_scene, config)
    scenarios = []
    aggregate: list[float] = []
    for height in heights_cm:
        if height <= 0:
            raise ValueError("heights must be positive")
        cam_z = lamp_z - height
        waypoints = [WorldPoint(w.x, w.y, cam_z)
                     for w in base_scene.trajectory.waypoints]
        trajectory = Trajectory(waypoints, base_scene.trajectory.speed_cm_s,
                                duration_s=base_scene.trajectory.duration_s)
        scene = replace(base_scene, trajectory=trajectory)
        name = f"height_{height:g}cm"
        meta = {"height_cm": height}
        try:
            _check_lamps_visible(scene, config)
            frames, truths = render_all(scene, frames_per_scenario)
        except SceneValidationError as exc:
            scenarios.append(ScenarioResult(name, meta, skipped=True,
                                            warning=str(exc)))
            continue
        fixes = list(Pipeline(config).run(frames))
        result = collect_scenario(name, fixes, truths, config, lamp_z, meta)
        aggregate.extend(result.samples["positioning_cm"])
        scenarios.append(result)
    report = ExperimentReport("height_sweep", scenarios)
    if aggregate:
        report.comparison.append({"method": "aggregate",
                                  **summarize_samples(
                                      {"positioning_cm": aggregate})["positioning_cm"]})
    return report


def _check_lamps_visible(scene: SceneConfig, config: PipelineConfig) -> None:
    for i in range(scene.frame_count):
        cam = scene.trajectory.position_at(scene.frame_time(i))
        for lamp in scene.lamps:
            if lamp.id not in config.wanted:
                continue
            if project_lamp(lamp, cam, scene.intrinsics) is None:
                raise SceneValidationError(
                    f"lamp {lamp.id} leaves the field of view at frame {i}")


def run_iteration_comparison(scene: SceneConfig, config: PipelineConfig,
                             n_frames: int | None = None) -> dict:
    """Mean Cam-shift iterations: filter-predicted starts vs previous-frame starts."""
    frames, _ = render_all(scene, n_frames)
    means = {}
    for mode in ("ukf", "previous"):
        mode_config = replace(config, start_hint_mode=mode)
        fixes = list(Pipeline(mode_config).run(frames))
        iters = [obs.iterations for fix in fixes for obs in fix.lamps
                 if fix.status == FIX and obs.u is not None]
        means[mode] = float(np.mean(iters)) if iters else float("nan")
    return means


# -- report files ------------------------------------------------------


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def emit_report(result: ScenarioResult, out_dir) -> list[Path]:
    """Write summary.json, errors.csv, cdf_<metric>.csv and timing.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    summary_path = out / "summary.json"
    payload = {"name": result.name, "metadata": result.metadata,
               "summary": result.summary, "skipped": result.skipped,
               "warning": result.warning}
    summary_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written.append(summary_path)
    if result.skipped:
        return written

    errors_path = out / "errors.csv"
    columns = ["frame", "t", "status", "proc_ms", "positioning_cm"]
    lamp_columns = sorted({key for row in result.frame_rows
                           for key in row if key.startswith("tracking_cm")})
    columns += lamp_columns
    with open(errors_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in result.frame_rows:
            writer.writerow([_csv_value(row.get(col)) for col in columns])
    written.append(errors_path)

    for metric in ("tracking_cm", "positioning_cm"):
        values = result.samples.get(metric, [])
        if not values:
            continue
        cdf = empirical_cdf(values)
        path = out / f"cdf_{metric}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "F"])
            for x, f in cdf.table():
                writer.writerow([repr(x), repr(f)])
        written.append(path)

    timing_path = out / "timing.csv"
    with open(timing_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "proc_ms"])
        for row in result.frame_rows:
            writer.writerow([row["frame"], _csv_value(row["proc_ms"])])
    written.append(timing_path)
    return written


def emit_experiment(report: ExperimentReport, out_dir) -> Path:
    """Per-scenario subdirectories plus a top-level comparison table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for scenario in report.scenarios:
        emit_report(scenario, out / scenario.name)
    table = {"title": report.title, "comparison": report.comparison,
             "scenarios": [{"name": s.name, "skipped": s.skipped,
                            "warning": s.warning, "summary": s.summary,
                            "metadata": s.metadata}
                           for s in report.scenarios]}
    path = out / "comparison.json"
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    return path
