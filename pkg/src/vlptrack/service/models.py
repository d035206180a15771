"""Request/response models for the positioning service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, model_validator


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConfigCarrier(_Model):
    """A request that brings its configuration inline or by server path."""

    config: dict | None = None
    config_path: str | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.config is None) == (self.config_path is None):
            raise ValueError("provide exactly one of config or config_path")
        return self


class SimulateRequest(ConfigCarrier):
    out_dir: str
    seed: int | None = None
    limit_frames: int | None = None


class SimulateResponse(_Model):
    out_dir: str
    frames_written: int
    groundtruth_path: str
    config_path: str


class TrackRequest(ConfigCarrier):
    frames_dir: str
    out_path: str | None = None


class TrackResponse(_Model):
    fixes_path: str
    frames: int
    mean_proc_ms: float
    status_counts: dict[str, int]


class ScenarioSpec(_Model):
    """What cmd_bench runs; every block is optional."""

    frames_per_scenario: int = 100
    occlusion_fractions: list[float] = [0.3, 0.7]
    include_both_lamps: bool = False
    heights_cm: list[float] = []
    timing_frames: int = 100


class BenchRequest(ConfigCarrier):
    out_dir: str
    scenarios: ScenarioSpec | None = None
    scenarios_path: str | None = None


class BenchResponse(_Model):
    out_dir: str
    comparison: list[dict]
    failures: dict[str, str]


class ReportRequest(ConfigCarrier):
    fixes_path: str
    groundtruth_path: str
    out_dir: str


class ReportResponse(_Model):
    out_dir: str
    files: list[str]
    summary: dict


class SessionCreateRequest(ConfigCarrier):
    pass


class SessionCreateResponse(_Model):
    session_id: str


class SessionState(_Model):
    session_id: str
    frames_processed: int
    slot_status: dict[str, str]
    last_fix: dict | None


class ErrorBody(_Model):
    error: str
    path: str | None = None
