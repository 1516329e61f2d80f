"""Layered configuration: dataclass defaults, a YAML file, then overrides.

The dataclasses below are the schema; ``defaults.yaml`` next to this module
documents the same values for humans and is kept in sync by the tests.
Overrides use ``key=value`` strings where ``key`` is either a dotted path
(``train.lambda_other``) or a bare leaf name that is unique across the tree
(``lambda_other``). Every problem found while loading is collected and raised
together in a single ``ConfigError``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, fields, is_dataclass, asdict
from pathlib import Path
from typing import Any, Iterable, Optional

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "ACTIVE_MANIP_OUTPUT_ROOT"
THREADS_ENV = "ACTIVE_MANIP_THREADS"

ROOM_TYPES = ("kitchen", "living", "dining", "bathroom")
MODALITIES = ("visual_centering", "spatial_directive", "common_sense")
CAMERA_CONFIGS = ("fixed", "fixed+wrist", "active", "active+wrist")
VISIBILITY_MODES = (
    "unoccluded",
    "occluded_truncation",
    "occluded_physical",
    "out_of_view",
)


@dataclass
class CameraConfig:
    pitch_limits: tuple[float, float] = (-60.0, 60.0)
    yaw_limits: tuple[float, float] = (-90.0, 90.0)
    fov_h: float = 90.0
    raster: tuple[int, int] = (48, 48)


@dataclass
class SceneConfig:
    object_count: tuple[int, int] = (4, 8)
    container_count: tuple[int, int] = (0, 2)
    room_probs: dict[str, float] = field(
        default_factory=lambda: {
            "kitchen": 0.32,
            "living": 0.18,
            "dining": 0.29,
            "bathroom": 0.21,
        }
    )
    excluded_categories: tuple[str, ...] = ()
    required_categories: tuple[str, ...] = ()
    layout_jitter: float = 0.03
    layout_shift: tuple[float, float] = (0.0, 0.0)
    interior_probability: float = 0.7
    max_placement_attempts: int = 1000
    head_pivot: tuple[float, float, float] = (0.0, 0.0, 1.25)


@dataclass
class ArmConfig:
    base: tuple[float, float, float] = (0.0, 0.0, 0.80)
    # riser, upper arm, forearm, wrist-to-fingertip
    link_lengths: tuple[float, float, float, float] = (0.05, 0.32, 0.28, 0.10)
    joint_limits: tuple[tuple[float, float], ...] = (
        (-1.6, 1.6),
        (-1.4, 1.4),
        (-2.4, 2.4),
        (-2.0, 2.0),
    )
    wrist_camera_offset: tuple[float, float, float] = (-0.10, 0.0, 0.05)


@dataclass
class WorldConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    arm: ArmConfig = field(default_factory=ArmConfig)


@dataclass
class ViewgenConfig:
    chunk_horizon: int = 8
    per_step_cap: float = 6.0
    centering_range: tuple[float, float] = (12.0, 12.0)
    search_range: tuple[float, float] = (60.0, 90.0)
    modality_mix: dict[str, float] = field(
        default_factory=lambda: {
            "visual_centering": 0.4,
            "spatial_directive": 0.3,
            "common_sense": 0.3,
        }
    )
    test_fraction: float = 0.2
    val_fraction: float = 0.1
    heldout_categories: tuple[str, ...] = ("teapot", "lemon")
    reserved_layout_shift: tuple[float, float] = (0.08, 0.06)
    max_rejections: int = 500
    max_task_attempts: int = 32
    max_instruction_tokens: int = 24


@dataclass
class ModelConfig:
    width: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    base_blocks: int = 2
    dit_blocks: int = 2
    patch: int = 8
    adapter_rank: int = 4
    adapter_alpha: float = 8.0
    diffusion_levels: int = 50
    sampling_steps: int = 16
    deterministic_sampling: bool = True
    objective: str = "denoise"
    unified_head: bool = False
    spatial_injection: bool = True
    beta_init: float = 0.1
    wrist_view: bool = False
    pretrain_grid: int = 3
    global_mlp_layers: int = 4
    geo_channels: int = 8


@dataclass
class StageConfig:
    steps: int = 1000
    batch_size: int = 32
    learning_rate: float = 3e-4
    weight_decay: float = 0.0
    eval_every: int = 200
    checkpoint_every: int = 1000
    seed: int = 0


@dataclass
class TrainConfig:
    lambda_head: float = 1.0
    lambda_other: float = 10.0
    mixture_ratio: float = 0.3
    grad_clip: float = 1.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    skip_stage1: bool = False
    skip_stage2: bool = False
    base_trainable: bool = False
    stage2_decoders_only: bool = False
    stage2_freeze_spatial: bool = False
    pretrain: StageConfig = field(
        default_factory=lambda: StageConfig(steps=2000, learning_rate=1e-3)
    )
    stage1: StageConfig = field(
        default_factory=lambda: StageConfig(steps=10000, learning_rate=3e-4)
    )
    stage2: StageConfig = field(
        default_factory=lambda: StageConfig(steps=10000, learning_rate=3e-4)
    )


@dataclass
class EnvConfig:
    hold_duration: int = 20
    horizon_atomic: int = 300
    horizon_short: int = 600
    horizon_long: int = 1200
    arm_step_cap: float = 0.06
    gripper_step_cap: float = 0.25
    head_step_cap: float = 6.0
    ik_iterations: int = 50
    stagnation_steps: int = 100
    grasp_radius: float = 0.03
    velocity_eps: float = 0.002
    truncation_visible_max: float = 0.5
    occlusion_min_coverage: float = 0.7
    central_fraction: float = 0.7
    max_reset_attempts: int = 500
    wrist_camera: bool = False
    demo_stride: int = 4
    occluder_clearance: float = 0.15


@dataclass
class EvalConfig:
    tolerance: float = 5.0
    max_chunks: int = 6
    min_chunk_motion: float = 0.5
    n_episodes: int = 20
    camera_config: str = "active"
    tasks: tuple[str, ...] = ("pick",)
    visibility: tuple[str, ...] = ("unoccluded", "out_of_view")
    jitter: float = 0.1
    seed: int = 0


@dataclass
class PipelineConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    viewgen: ViewgenConfig = field(default_factory=ViewgenConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict[str, Any]:
        return _plain(asdict(self))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        problems: list[str] = []
        config = _build(cls(), data, "", problems)
        problems.extend(validate(config))
        if problems:
            raise ConfigError(problems)
        return config


@dataclass
class RunConfig:
    """Options of one CLI invocation, snapshotted beside its outputs."""

    command: str
    config_path: Optional[str]
    seed: int
    out_dir: str
    overrides: list[str] = field(default_factory=list)
    workers: int = 1

    def to_dict(self) -> dict[str, Any]:
        return _plain(asdict(self))


def _plain(value: Any) -> Any:
    """Turn tuples into lists recursively so YAML/JSON dumps stay plain."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _coerce(default: Any, value: Any, key: str, problems: list[str]) -> Any:
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, tuple):
        if isinstance(value, (list, tuple)):
            variable = not default or isinstance(default[0], str)
            if variable:
                return tuple(
                    _coerce("", v, f"{key}[{i}]", problems)
                    for i, v in enumerate(value)
                )
            if len(value) != len(default):
                problems.append(
                    f"{key}: expected {len(default)} elements, got {len(value)}"
                )
                return default
            return tuple(
                _coerce(d, v, f"{key}[{i}]", problems)
                for i, (d, v) in enumerate(zip(default, value))
            )
    elif isinstance(default, dict):
        if isinstance(value, dict):
            unknown = sorted(set(value) - set(default))
            for name in unknown:
                problems.append(f"unknown key: {key}.{name}")
            merged = dict(default)
            for name in value:
                if name in default:
                    merged[name] = _coerce(
                        default[name], value[name], f"{key}.{name}", problems
                    )
            return merged
    problems.append(
        f"{key}: expected {type(default).__name__}, got {value!r}"
    )
    return default


def _build(default: Any, data: dict[str, Any], prefix: str, problems: list[str]) -> Any:
    if not isinstance(data, dict):
        problems.append(f"{prefix.rstrip('.') or '<root>'}: expected a mapping")
        return default
    known = {f.name: f for f in fields(default)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            problems.append(f"unknown key: {prefix}{key}")
            continue
        current = getattr(default, key)
        if is_dataclass(current):
            kwargs[key] = _build(current, value, f"{prefix}{key}.", problems)
        else:
            kwargs[key] = _coerce(current, value, f"{prefix}{key}", problems)
    values = {f.name: getattr(default, f.name) for f in fields(default)}
    values.update(kwargs)
    return type(default)(**values)


def leaf_paths(config: Any, prefix: str = "") -> list[str]:
    """Dotted paths of every leaf field of a (nested) config dataclass."""
    paths: list[str] = []
    for f in fields(config):
        value = getattr(config, f.name)
        if is_dataclass(value):
            paths.extend(leaf_paths(value, f"{prefix}{f.name}."))
        else:
            paths.append(f"{prefix}{f.name}")
    return paths


def _resolve_key(key: str, paths: list[str]) -> list[str]:
    if key in paths:
        return [key]
    return [p for p in paths if p.split(".")[-1] == key or p.endswith("." + key)]


def parse_overrides(
    overrides: Iterable[str], config: Optional[PipelineConfig] = None
) -> tuple[dict[str, Any], list[str]]:
    """Parse ``key=value`` overrides into a nested dict keyed by full paths."""
    config = config or PipelineConfig()
    paths = leaf_paths(config)
    nested: dict[str, Any] = {}
    problems: list[str] = []
    for raw in overrides:
        if "=" not in raw:
            problems.append(f"override without '=': {raw!r}")
            continue
        key, text = raw.split("=", 1)
        key = key.strip()
        matches = _resolve_key(key, paths)
        if not matches:
            problems.append(f"unknown key: {key}")
            continue
        if len(matches) > 1:
            problems.append(
                f"ambiguous key: {key} (matches {', '.join(sorted(matches))})"
            )
            continue
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as e:
            problems.append(f"{key}: unparseable value {text!r} ({e})")
            continue
        cursor = nested
        parts = matches[0].split(".")
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
    return nested, problems


def _deep_merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def validate(config: PipelineConfig) -> list[str]:
    """Semantic checks that typing alone cannot express."""
    problems: list[str] = []
    cam = config.world.camera
    if not 10.0 < cam.fov_h < 170.0:
        problems.append(f"world.camera.fov_h: must lie in (10, 170), got {cam.fov_h}")
    for name, (lo, hi) in (("pitch_limits", cam.pitch_limits), ("yaw_limits", cam.yaw_limits)):
        if not lo < hi:
            problems.append(f"world.camera.{name}: lower bound must be below upper")
    if min(cam.raster) < 2:
        problems.append("world.camera.raster: both dims must be >= 2")

    scene = config.world.scene
    for name in ("object_count", "container_count"):
        lo, hi = getattr(scene, name)
        if lo < 0 or lo > hi:
            problems.append(f"world.scene.{name}: invalid range [{lo}, {hi}]")
    if abs(sum(scene.room_probs.values()) - 1.0) > 1e-9:
        problems.append("world.scene.room_probs: probabilities must sum to 1")

    vg = config.viewgen
    if vg.chunk_horizon < 1:
        problems.append("viewgen.chunk_horizon: must be >= 1")
    if vg.per_step_cap <= 0:
        problems.append("viewgen.per_step_cap: must be > 0")
    if abs(sum(vg.modality_mix.values()) - 1.0) > 1e-9:
        problems.append("viewgen.modality_mix: fractions must sum to 1")
    if not 0.0 <= vg.test_fraction < 1.0 or not 0.0 <= vg.val_fraction < 1.0:
        problems.append("viewgen: split fractions must lie in [0, 1)")

    model = config.model
    if model.width % model.heads:
        problems.append("model.width: must be divisible by model.heads")
    for dim in cam.raster:
        if dim % model.patch:
            problems.append("model.patch: must divide both raster dims")
            break
    if model.objective not in ("denoise", "regress"):
        problems.append(f"model.objective: unknown objective {model.objective!r}")
    if model.adapter_rank < 0:
        problems.append("model.adapter_rank: must be >= 0")
    if model.sampling_steps < 1 or model.sampling_steps > model.diffusion_levels:
        problems.append("model.sampling_steps: must lie in [1, diffusion_levels]")

    train = config.train
    if train.lambda_head <= 0 or train.lambda_other <= 0:
        problems.append("train: lambda_head and lambda_other must be positive")
    if not 0.0 <= train.mixture_ratio <= 1.0:
        problems.append("train.mixture_ratio: must lie in [0, 1]")

    ev = config.eval
    if ev.camera_config not in CAMERA_CONFIGS:
        problems.append(f"eval.camera_config: unknown value {ev.camera_config!r}")
    for mode in ev.visibility:
        if mode not in VISIBILITY_MODES:
            problems.append(f"eval.visibility: unknown mode {mode!r}")
    if ev.tolerance <= 0 or ev.max_chunks < 1:
        problems.append("eval: tolerance must be > 0 and max_chunks >= 1")
    return problems


def load_config(
    path: Optional[str | Path] = None, overrides: Iterable[str] = ()
) -> PipelineConfig:
    """Resolve defaults, an optional YAML file and overrides into a config."""
    data: dict[str, Any] = {}
    problems: list[str] = []
    if path is not None:
        logger.debug(f"Loading config file: {path}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        data = loaded

    override_data, override_problems = parse_overrides(overrides)
    problems.extend(override_problems)
    merged = _deep_merge(data, override_data)

    config = _build(PipelineConfig(), merged, "", problems)
    problems.extend(validate(config))
    if problems:
        logger.error(f"Config validation failed with {len(problems)} problem(s)")
        raise ConfigError(problems)
    return config


def config_diff(a: PipelineConfig, b: PipelineConfig) -> set[str]:
    """Dotted paths of the leaves whose values differ."""
    flat_a = _flatten(a.to_dict())
    flat_b = _flatten(b.to_dict())
    return {k for k in flat_a.keys() | flat_b.keys() if flat_a.get(k) != flat_b.get(k)}


def _flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict) and key not in ("room_probs", "modality_mix"):
            flat.update(_flatten(value, f"{prefix}{key}."))
        else:
            flat[f"{prefix}{key}"] = value
    return flat


def resolve_out_dir(out: str | Path) -> Path:
    """Relative output paths land under ``$ACTIVE_MANIP_OUTPUT_ROOT`` if set."""
    path = Path(out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def thread_hint() -> Optional[int]:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return None
    return value if value > 0 else None


def write_snapshot(
    out_dir: Path, run: RunConfig, config: PipelineConfig
) -> Path:
    """Write ``resolved_config.yaml`` with the run options and full config."""
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "run": run.to_dict(),
        "overrides": list(run.overrides),
        "config": config.to_dict(),
        "fingerprint": config.fingerprint(),
    }
    target = out_dir / "resolved_config.yaml"
    target.write_text(yaml.safe_dump(snapshot, sort_keys=True), encoding="utf-8")
    return target


def defaults_path() -> Path:
    """Location of the shipped, documented defaults file."""
    return Path(__file__).with_name("defaults.yaml")
