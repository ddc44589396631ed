"""Pipeline configuration: one flat record of every tunable, loadable from
JSON, with key=value overrides coerced to the field's type."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

from .errors import SchemaError, ValidationError
from .orchestrator import FOVConfig, RolloutConfig
from .remote import RemoteConfig
from .world import WorldGenParams


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0

    # synthetic world generation
    room_count: int = 3
    episode_count: int = 10
    room_size_min: float = 2.5
    room_size_max: float = 4.0
    corridor_width: float = 0.8
    corridor_length: float = 0.8
    grid_resolution: float = 0.05
    margin: float = 0.2
    waypoint_spacing: float = 1.0
    min_start_goal_separation: float = 1.5

    # demonstration collection
    error_probability: float = 0.1
    deviation_threshold_m: float = 1.0
    step_cap: int = 2000

    # node detection
    k_debounce: int = 2
    success_radius_m: float = 3.0

    # supervision
    window: int = 16
    stride: int = 2
    frames_k: int = 8
    global_frame_budget: int = 32
    triplet_retries: int = 2

    # rollouts
    step_budget: int = 500
    fov_radius_m: float = 3.0
    fov_half_angle_deg: float = 60.0

    # remote services
    endpoint: str = ""
    timeout_s: float = 10.0
    remote_retries: int = 2
    backoff_base_s: float = 1.0

    # execution
    jobs: int = 1

    def validate(self) -> None:
        if self.jobs < 1:
            raise ValidationError(f"jobs={self.jobs} must be at least 1")
        if self.step_budget < 1:
            raise ValidationError(f"step_budget={self.step_budget} must be positive")
        if self.step_cap < 1:
            raise ValidationError(f"step_cap={self.step_cap} must be positive")
        if not (0.0 <= self.error_probability <= 1.0):
            raise ValidationError(
                f"error_probability={self.error_probability} outside [0, 1]"
            )

    def to_json(self) -> dict:
        return asdict(self)

    def world_params(self) -> WorldGenParams:
        return WorldGenParams(
            room_count=self.room_count,
            room_size_min=self.room_size_min,
            room_size_max=self.room_size_max,
            corridor_width=self.corridor_width,
            corridor_length=self.corridor_length,
            resolution=self.grid_resolution,
            episode_count=self.episode_count,
            margin=self.margin,
            min_start_goal_separation=self.min_start_goal_separation,
            waypoint_spacing=self.waypoint_spacing,
        )

    def fov(self) -> FOVConfig:
        return FOVConfig(
            radius_m=self.fov_radius_m, half_angle_deg=self.fov_half_angle_deg
        )

    def rollout(self) -> RolloutConfig:
        return RolloutConfig(
            step_budget=self.step_budget, frames_k=self.frames_k, fov=self.fov()
        )

    def remote(self) -> RemoteConfig:
        return RemoteConfig(
            endpoint=self.endpoint,
            timeout_s=self.timeout_s,
            retries=self.remote_retries,
            backoff_base_s=self.backoff_base_s,
        )


def config_from_json(obj: dict) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(obj) - known
    if unknown:
        raise SchemaError(f"unknown config keys: {sorted(unknown)}")
    cfg = replace(PipelineConfig(), **obj)
    cfg.validate()
    return cfg


def load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise SchemaError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"config {path} must hold a JSON object")
    return config_from_json(obj)


def _coerce(name: str, raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise SchemaError(f"override {name}: {raw!r} is not a boolean")
    try:
        return target_type(raw)
    except ValueError as exc:
        raise SchemaError(
            f"override {name}: {raw!r} is not a {target_type.__name__}"
        ) from exc


def apply_overrides(cfg: PipelineConfig, pairs: list[str]) -> PipelineConfig:
    """Apply key=value strings on top of a config, with type coercion."""
    by_name = {f.name: f for f in fields(PipelineConfig)}
    updates: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise SchemaError(f"override {pair!r} is not of the form key=value")
        name, raw = pair.split("=", 1)
        name = name.strip()
        if name not in by_name:
            raise SchemaError(f"unknown config key {name!r}")
        updates[name] = _coerce(name, raw, type(getattr(PipelineConfig(), name)))
    out = replace(cfg, **updates)
    out.validate()
    return out
