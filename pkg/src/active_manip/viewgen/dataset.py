"""Viewpoint dataset generation, manifest and blob I/O.

A dataset directory holds ``manifest.jsonl`` (one header line, then one line
per record in index order) and ``observations.bin`` (see ``codec``). Each
record owns its RNG streams, derived from ``(seed, index, attempt)``, so the
output does not depend on how many workers produced it.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import repeat
from pathlib import Path
from typing import Any, Iterator, Optional

import numpy as np
from tqdm import tqdm

from ..config import MODALITIES, PipelineConfig
from ..errors import DataError, GenerationError, RejectionError
from ..world.camera import CameraState
from ..world.render import render_view
from ..world.scene import Scene, drive_container, sample_scene
from . import codec
from .instruct import Instruction, bind_template, instantiate_template
from .templates import templates_for
from .views import is_clamp_limited, make_gt_chunk, optimal_view, perturb_view
from .vocab import default_vocabulary

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
BLOB_NAME = "observations.bin"
FORMAT_NAME = "active-manip-views"
SPLIT_STREAM = 1_000_003
# Scene seeds at or above this base are never used for training data; the
# generalization sweep draws its unseen layouts from there.
RESERVED_LAYOUT_SEED_BASE = 2**62
SPLITS = ("train", "val", "test1", "test2")


@dataclass
class DatasetRecord:
    """One image-to-camera-motion training pair."""

    index: int
    split: str
    scene_seed: int
    room_type: str
    template_id: str
    atomic_action: str
    modality: str
    augmentation: Optional[str]
    target_id: str
    anchor: tuple[float, float, float]
    initial_camera: tuple[float, float]
    target_camera: tuple[float, float]
    total_delta: tuple[float, float]
    gt_chunk: list[list[float]]
    saturated: bool
    clamp_limited: bool
    instruction: Instruction
    instance_ids: tuple[str, ...]
    blob_offset: int = 0
    scene_edits: tuple[tuple[str, float], ...] = ()
    stage2_target_id: Optional[str] = None

    @property
    def record_id(self) -> str:
        return f"r{self.index:07d}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "record",
            "index": self.index,
            "record_id": self.record_id,
            "split": self.split,
            "scene_seed": self.scene_seed,
            "room_type": self.room_type,
            "scene_edits": [list(e) for e in self.scene_edits],
            "template_id": self.template_id,
            "atomic_action": self.atomic_action,
            "modality": self.modality,
            "augmentation": self.augmentation,
            "target_id": self.target_id,
            "stage2_target_id": self.stage2_target_id,
            "anchor": list(self.anchor),
            "initial_camera": list(self.initial_camera),
            "target_camera": list(self.target_camera),
            "total_delta": list(self.total_delta),
            "gt_chunk": self.gt_chunk,
            "saturated": self.saturated,
            "clamp_limited": self.clamp_limited,
            "instruction": self.instruction.to_dict(),
            "instance_ids": list(self.instance_ids),
            "blob_offset": self.blob_offset,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DatasetRecord":
        return cls(
            index=int(data["index"]),
            split=data["split"],
            scene_seed=int(data["scene_seed"]),
            room_type=data["room_type"],
            template_id=data["template_id"],
            atomic_action=data["atomic_action"],
            modality=data["modality"],
            augmentation=data.get("augmentation"),
            target_id=data["target_id"],
            anchor=tuple(data["anchor"]),
            initial_camera=tuple(data["initial_camera"]),
            target_camera=tuple(data["target_camera"]),
            total_delta=tuple(data["total_delta"]),
            gt_chunk=[list(step) for step in data["gt_chunk"]],
            saturated=bool(data["saturated"]),
            clamp_limited=bool(data["clamp_limited"]),
            instruction=Instruction.from_dict(data["instruction"]),
            instance_ids=tuple(data["instance_ids"]),
            blob_offset=int(data["blob_offset"]),
            scene_edits=tuple((e[0], float(e[1])) for e in data.get("scene_edits", [])),
            stage2_target_id=data.get("stage2_target_id"),
        )


@dataclass
class GeneratedDataset:
    header: dict[str, Any]
    records: list[DatasetRecord]
    planes: list[np.ndarray] = field(repr=False, default_factory=list)


def generation_scene_config(config: PipelineConfig):
    """Scene settings for training data: held-out categories never appear."""
    scene = config.world.scene
    excluded = tuple(sorted(set(scene.excluded_categories) | set(config.viewgen.heldout_categories)))
    return replace(scene, excluded_categories=excluded)


def record_scene(record: DatasetRecord, config: PipelineConfig) -> Scene:
    """Rebuild the exact scene a record was generated in."""
    scene = sample_scene(generation_scene_config(config), record.scene_seed)
    for container_id, value in record.scene_edits:
        current = scene.container(container_id).joint.value
        scene = drive_container(scene, container_id, value - current)
    return scene


def _assign_split(config: PipelineConfig, seed: int, index: int, modality: str) -> str:
    vg = config.viewgen
    rng = np.random.default_rng([seed, index, SPLIT_STREAM])
    draw = rng.uniform()
    if modality == "spatial_directive" and draw < vg.test_fraction:
        return "test1"
    if modality == "common_sense" and draw < vg.test_fraction:
        return "test2"
    return "val" if rng.uniform() < vg.val_fraction else "train"


def scene_seed(seed: int, index: int, attempt: int) -> int:
    """Seed of the scene behind attempt ``attempt`` of record ``index``.

    Hashed from all three values and kept below ``RESERVED_LAYOUT_SEED_BASE``.
    """
    state = np.random.SeedSequence([seed, index, attempt, 0]).generate_state(1, np.uint64)[0]
    return int(state) >> 2


def generate_record(index: int, config: PipelineConfig, seed: int) -> tuple[DatasetRecord, np.ndarray]:
    """Generate record ``index``; retries with fresh scenes on rejection.

    Raises:
        RejectionError: when ``max_task_attempts`` attempts all failed,
            naming the last template tried.
    """
    vg = config.viewgen
    camera_config = config.world.camera
    scene_config = generation_scene_config(config)
    mix = np.array([vg.modality_mix[m] for m in MODALITIES], dtype=np.float64)
    last_error: Optional[Exception] = None
    last_template: Optional[str] = None
    for attempt in range(vg.max_task_attempts):
        rng = np.random.default_rng([seed, index, attempt])
        modality = MODALITIES[int(rng.choice(len(MODALITIES), p=mix / mix.sum()))]
        options = templates_for(modality)
        template = options[int(rng.integers(len(options)))]
        last_template = template.id
        try:
            scene = sample_scene(scene_config, scene_seed(seed, index, attempt))
            bound = bind_template(template, scene, [seed, index, attempt, 1], camera_config)
            scene = bound.scene
            target = optimal_view(scene, bound, camera_config)
            ranges = vg.centering_range if modality == "visual_centering" else vg.search_range
            initial = perturb_view(
                target, ranges, modality, [seed, index, attempt, 2], scene, bound.target_id, vg.max_rejections
            )
            total = (target.pitch - initial.pitch, target.yaw - initial.yaw)
            chunk, saturated = make_gt_chunk(total, vg.chunk_horizon, vg.per_step_cap)
            instruction = instantiate_template(
                template,
                scene,
                [seed, index, attempt, 3],
                total_delta=total,
                bound=bound,
                max_tokens=vg.max_instruction_tokens,
            )
        except (RejectionError, GenerationError) as e:
            logger.debug(f"Record {index} attempt {attempt} rejected: {e}")
            last_error = e
            continue
        obs = render_view(scene, initial)
        record = DatasetRecord(
            index=index,
            split=_assign_split(config, seed, index, modality),
            scene_seed=scene.rng_seed,
            room_type=scene.room_type,
            template_id=template.id,
            atomic_action=template.atomic_action,
            modality=modality,
            augmentation=template.augmentation,
            target_id=bound.target_id,
            anchor=tuple(float(a) for a in bound.anchor),
            initial_camera=(initial.pitch, initial.yaw),
            target_camera=(target.pitch, target.yaw),
            total_delta=(float(total[0]), float(total[1])),
            gt_chunk=chunk.tolist(),
            saturated=saturated,
            clamp_limited=is_clamp_limited(target, bound.anchor),
            instruction=instruction,
            instance_ids=obs.instance_ids,
            scene_edits=bound.scene_edits,
            stage2_target_id=bound.stage2_target_id,
        )
        return record, codec.encode_observation(obs)
    raise RejectionError(
        f"Record {index}: {vg.max_task_attempts} attempts exhausted (last template {last_template}): {last_error}",
        template_id=last_template,
    )


def dataset_header(config: PipelineConfig, seed: int, count: int) -> dict[str, Any]:
    cam = config.world.camera
    vg = config.viewgen
    return {
        "kind": "header",
        "format": FORMAT_NAME,
        "version": codec.VIEWS_VERSION,
        "count": count,
        "seed": seed,
        "raster": list(cam.raster),
        "fov_h": cam.fov_h,
        "pitch_limits": list(cam.pitch_limits),
        "yaw_limits": list(cam.yaw_limits),
        "head_pivot": list(config.world.scene.head_pivot),
        "chunk_horizon": vg.chunk_horizon,
        "per_step_cap": vg.per_step_cap,
        "planes": list(codec.PLANE_NAMES),
        "vocabulary_size": len(default_vocabulary()),
        "heldout_categories": list(vg.heldout_categories),
        "reserved_layout_shift": list(vg.reserved_layout_shift),
        "reserved_layout_seed_base": RESERVED_LAYOUT_SEED_BASE,
        "config_fingerprint": config.fingerprint(),
    }


def generate_dataset(
    n_records: int, config: PipelineConfig, seed: int, workers: int = 1
) -> GeneratedDataset:
    """Generate ``n_records`` records; byte-identical for a fixed seed.

    Records are produced by a process pool when ``workers > 1`` and always
    reduced in index order.
    """
    if n_records < 1:
        raise ValueError(f"n_records must be >= 1, got {n_records}")
    logger.info(f"Generating {n_records} view records with seed={seed} workers={workers}")
    indices = range(n_records)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                tqdm(
                    pool.map(generate_record, indices, repeat(config), repeat(seed), chunksize=max(1, n_records // (8 * workers))),
                    total=n_records,
                    desc="views",
                    disable=None,
                )
            )
    else:
        results = [generate_record(i, config, seed) for i in tqdm(indices, desc="views", disable=None)]

    header = dataset_header(config, seed, n_records)
    record_size = codec.planes_nbytes(config.world.camera.raster)
    records, planes = [], []
    for record, record_planes in results:
        record.blob_offset = codec.HEADER_SIZE + record.index * record_size
        records.append(record)
        planes.append(record_planes)
    unknown = sum(r.instruction.unknown_count for r in records)
    if unknown:
        logger.warning(f"{unknown} instruction words fell back to UNK")
    return GeneratedDataset(header=header, records=records, planes=planes)


def write_dataset(dataset: GeneratedDataset, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / MANIFEST_NAME
    blob_path = out_dir / BLOB_NAME
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(dataset.header, sort_keys=True) + "\n")
        for record in dataset.records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    with open(blob_path, "wb") as fh:
        codec.write_header(fh, codec.VIEWS_VERSION, len(dataset.records))
        for planes in dataset.planes:
            fh.write(np.ascontiguousarray(planes, dtype="<f4").tobytes())
    logger.info(f"Wrote {len(dataset.records)} records to {out_dir}")
    return manifest_path, blob_path


def read_manifest(manifest_path: Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    try:
        lines = manifest_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"Cannot read manifest {manifest_path}: {e}") from e
    if not lines:
        raise DataError(f"Manifest {manifest_path} is empty")
    try:
        entries = [json.loads(line) for line in lines if line.strip()]
    except json.JSONDecodeError as e:
        raise DataError(f"Manifest {manifest_path} is not valid JSON lines: {e}") from e
    header, rows = entries[0], entries[1:]
    if header.get("kind") != "header":
        raise DataError(f"Manifest {manifest_path} has no header line")
    return header, rows


@dataclass
class ViewDataset:
    """A dataset reopened from disk."""

    header: dict[str, Any]
    records: list[DatasetRecord]
    blob_path: Path

    def __len__(self) -> int:
        return len(self.records)

    @property
    def raster_dims(self) -> tuple[int, int]:
        return tuple(self.header["raster"])

    def camera(self, pose: tuple[float, float]) -> CameraState:
        return CameraState(
            pitch=float(pose[0]),
            yaw=float(pose[1]),
            limits=(*self.header["pitch_limits"], *self.header["yaw_limits"]),
            fov_h=float(self.header["fov_h"]),
            raster_dims=self.raster_dims,
            pivot=tuple(self.header["head_pivot"]),
        )

    def planes(self, i: int) -> np.ndarray:
        return codec.read_planes(self.blob_path, self.records[i].blob_offset, self.raster_dims)

    def observation(self, i: int):
        record = self.records[i]
        return codec.decode_observation(self.planes(i), self.camera(record.initial_camera), record.instance_ids)

    def split(self, name: str) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.split == name]

    def scene_seeds(self, split: str) -> set[int]:
        return {r.scene_seed for r in self.records if r.split == split}

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self.records)


def resolve_manifest(path: str | Path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_dataset(path: str | Path) -> ViewDataset:
    """Reopen a dataset from its directory or manifest path.

    Raises:
        DataError: on a missing or foreign blob, or inconsistent counts or
            offsets.
    """
    manifest_path = resolve_manifest(path)
    header, rows = read_manifest(manifest_path)
    if header.get("format") != FORMAT_NAME:
        raise DataError(f"{manifest_path}: not a view dataset (format {header.get('format')!r})")
    blob_path = manifest_path.with_name(BLOB_NAME)
    if not blob_path.exists():
        raise DataError(f"Blob {blob_path} is missing")
    version, count = codec.read_header(blob_path)
    if version != codec.VIEWS_VERSION:
        raise DataError(f"{blob_path}: unsupported blob version {version}")
    records = [DatasetRecord.from_dict(row) for row in rows]
    if count != len(records) or count != header["count"]:
        raise DataError(
            f"Record count mismatch: blob {count}, manifest {len(records)}, header {header['count']}"
        )
    record_size = codec.planes_nbytes(header["raster"])
    for i, record in enumerate(records):
        expected = codec.HEADER_SIZE + i * record_size
        if record.index != i or record.blob_offset != expected:
            raise DataError(f"Record {i} has offset {record.blob_offset}, expected {expected}")
    if blob_path.stat().st_size != codec.HEADER_SIZE + count * record_size:
        raise DataError(f"Blob {blob_path} size does not match {count} records")
    return ViewDataset(header=header, records=records, blob_path=blob_path)
