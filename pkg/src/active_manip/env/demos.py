"""Oracle demonstrations in the view-dataset blob layout plus action sections.

A demo directory holds ``manifest.jsonl`` (header line, then one line per
record), ``demos.bin`` and ``yield.json``. Every record in ``demos.bin`` is a
run of little-endian float32 values:

    head planes   N_PLANES x H x W
    wrist planes  N_PLANES x H x W      (only when the header says ``wrist``)
    head chunk    k x 2                 degrees
    body chunk    k x D_BODY            radians, gripper fraction
    proprio       PROPRIO_DIM

Chunks are the actions the oracle executed from the record's step on,
zero-padded past the end of the episode.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import repeat
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..config import VISIBILITY_MODES, PipelineConfig
from ..errors import DataError, GenerationError, RejectionError
from ..viewgen import codec
from ..viewgen.dataset import MANIFEST_NAME, read_manifest, resolve_manifest
from ..viewgen.instruct import Instruction
from ..world.arm import D_BODY, PROPRIO_DIM
from ..world.camera import CameraState
from .oracle import OraclePolicy
from .rollout import EpisodeResult, rollout
from .tasks import TASK_FAMILIES, sample_task, visibility_modes

logger = logging.getLogger(__name__)

BLOB_NAME = "demos.bin"
YIELD_NAME = "yield.json"
FORMAT_NAME = "active-manip-demos"
LOW_YIELD = 0.5
WRIST_LIMITS = (-180.0, 180.0, -180.0, 180.0)


@dataclass
class DemoRecord:
    """One demonstration step: what the head saw and what the oracle did next."""

    index: int
    episode: int
    family: str
    visibility: str
    task_seed: int
    step: int
    camera: tuple[float, float]
    instruction: Instruction
    instance_ids: tuple[str, ...]
    wrist_camera: Optional[tuple[float, ...]] = None
    wrist_instance_ids: tuple[str, ...] = ()
    blob_offset: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "episode": self.episode,
            "family": self.family,
            "visibility": self.visibility,
            "task_seed": self.task_seed,
            "step": self.step,
            "camera": list(self.camera),
            "instruction": self.instruction.to_dict(),
            "instance_ids": list(self.instance_ids),
            "wrist_camera": list(self.wrist_camera) if self.wrist_camera is not None else None,
            "wrist_instance_ids": list(self.wrist_instance_ids),
            "blob_offset": self.blob_offset,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DemoRecord":
        wrist = data.get("wrist_camera")
        return cls(
            index=int(data["index"]),
            episode=int(data["episode"]),
            family=data["family"],
            visibility=data["visibility"],
            task_seed=int(data["task_seed"]),
            step=int(data["step"]),
            camera=tuple(data["camera"]),
            instruction=Instruction.from_dict(data["instruction"]),
            instance_ids=tuple(data["instance_ids"]),
            wrist_camera=tuple(wrist) if wrist is not None else None,
            wrist_instance_ids=tuple(data.get("wrist_instance_ids", ())),
            blob_offset=int(data["blob_offset"]),
        )


@dataclass
class EpisodeOutcome:
    family: str
    visibility: str
    task_seed: int
    verdict: str = "rejected"
    oracle_failure: bool = False
    records: list[DemoRecord] = field(default_factory=list)
    payloads: list[np.ndarray] = field(default_factory=list)


@dataclass
class DemoCollection:
    header: dict[str, Any]
    records: list[DemoRecord]
    payloads: list[np.ndarray]
    yields: dict[str, dict[str, Any]]


def record_floats(raster_dims: Sequence[int], horizon: int, wrist: bool) -> int:
    h, w = raster_dims
    planes = codec.N_PLANES * h * w * (2 if wrist else 1)
    return planes + horizon * 2 + horizon * D_BODY + PROPRIO_DIM


def action_chunk(actions: Sequence[np.ndarray], start: int, horizon: int, width: int) -> np.ndarray:
    """``horizon`` actions from ``start``, zero-padded past the end."""
    chunk = np.zeros((horizon, width), dtype=np.float32)
    window = actions[start : start + horizon]
    if window:
        chunk[: len(window)] = np.asarray(window, dtype=np.float32)
    return chunk


def demo_records(result: EpisodeResult, episode: int, horizon: int, wrist: bool) -> tuple[list[DemoRecord], list[np.ndarray]]:
    """Slice a finished oracle episode into demonstration records."""
    records, payloads = [], []
    for sample in result.samples:
        obs = sample.observation
        parts = [codec.encode_observation(obs).ravel()]
        wrist_camera, wrist_ids = None, ()
        if wrist:
            wrist_obs = obs.wrist_observation
            parts.append(codec.encode_observation(wrist_obs).ravel())
            pitch, yaw, pivot = wrist_obs.camera_pose
            wrist_camera = (pitch, yaw, *pivot)
            wrist_ids = wrist_obs.instance_ids
        parts.append(action_chunk(result.head_actions, sample.step, horizon, 2).ravel())
        parts.append(action_chunk(result.body_actions, sample.step, horizon, D_BODY).ravel())
        parts.append(np.asarray(sample.proprio, dtype=np.float32))
        payloads.append(np.concatenate(parts).astype("<f4"))
        records.append(
            DemoRecord(
                index=-1,
                episode=episode,
                family=result.task.family,
                visibility=result.task.visibility,
                task_seed=result.task.seed,
                step=sample.step,
                camera=sample.camera,
                instruction=result.task.instruction,
                instance_ids=obs.instance_ids,
                wrist_camera=wrist_camera,
                wrist_instance_ids=tuple(wrist_ids),
            )
        )
    return records, payloads


def task_seed(seed: int, family: str, visibility: str, index: int) -> int:
    sequence = np.random.SeedSequence(
        [seed, TASK_FAMILIES.index(family), VISIBILITY_MODES.index(visibility), index]
    )
    return int(sequence.generate_state(1)[0])


def run_demo_episode(job: tuple[str, str, int, int], config: PipelineConfig, seed: int) -> EpisodeOutcome:
    family, visibility, index, episode = job
    tseed = task_seed(seed, family, visibility, index)
    outcome = EpisodeOutcome(family, visibility, tseed)
    try:
        task = sample_task(family, visibility, tseed, config)
    except (RejectionError, GenerationError) as e:
        logger.debug(f"No task for {family}/{visibility} #{index}: {e}")
        return outcome
    wrist = config.env.wrist_camera
    result = rollout(
        task,
        OraclePolicy(config),
        config,
        camera_config="active+wrist" if wrist else "active",
        record_every=config.env.demo_stride,
    )
    outcome.verdict, outcome.oracle_failure = result.verdict, result.oracle_failure
    if result.success:
        outcome.records, outcome.payloads = demo_records(result, episode, config.viewgen.chunk_horizon, wrist)
    return outcome


def demos_header(config: PipelineConfig, seed: int, count: int) -> dict[str, Any]:
    cam = config.world.camera
    return {
        "kind": "header",
        "format": FORMAT_NAME,
        "version": codec.DEMOS_VERSION,
        "count": count,
        "seed": seed,
        "raster": list(cam.raster),
        "fov_h": cam.fov_h,
        "pitch_limits": list(cam.pitch_limits),
        "yaw_limits": list(cam.yaw_limits),
        "head_pivot": list(config.world.scene.head_pivot),
        "chunk_horizon": config.viewgen.chunk_horizon,
        "d_body": D_BODY,
        "proprio_dim": PROPRIO_DIM,
        "wrist": config.env.wrist_camera,
        "planes": list(codec.PLANE_NAMES),
        "record_floats": record_floats(cam.raster, config.viewgen.chunk_horizon, config.env.wrist_camera),
        "demo_stride": config.env.demo_stride,
        "config_fingerprint": config.fingerprint(),
    }


def _yield_table(outcomes: list[EpisodeOutcome]) -> dict[str, dict[str, Any]]:
    table: dict[str, Counter] = {}
    for o in outcomes:
        counts = table.setdefault(f"{o.family}/{o.visibility}", Counter())
        counts["attempted"] += 1
        counts["rejected"] += o.verdict == "rejected"
        counts["oracle_failures"] += o.oracle_failure
        counts["successes"] += o.verdict == "success"
    report = {}
    for key, counts in sorted(table.items()):
        run = counts["attempted"] - counts["rejected"]
        report[key] = {**counts, "yield": counts["successes"] / run if run else 0.0}
    return report


def generate_demos(
    families: Sequence[str],
    visibilities: Sequence[str],
    n_per_task: int,
    config: PipelineConfig,
    seed: int,
    workers: int = 1,
) -> DemoCollection:
    """Run ``n_per_task`` oracle episodes per (family, visibility) pair.

    Only successful episodes become records. Each episode derives its task
    seed from ``(seed, family, visibility, index)`` and results are reduced
    in job order, so output is identical for any worker count.
    """
    if n_per_task < 1:
        raise ValueError(f"n_per_task must be >= 1, got {n_per_task}")
    jobs = []
    for family in families:
        for visibility in visibilities:
            if visibility not in visibility_modes(family):
                logger.info(f"Skipping {family}/{visibility}: mode not available for this family")
                continue
            jobs.extend((family, visibility, i) for i in range(n_per_task))
    jobs = [(f, v, i, episode) for episode, (f, v, i) in enumerate(jobs)]
    logger.info(f"Running {len(jobs)} oracle episodes with seed={seed} workers={workers}")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                tqdm(
                    pool.map(run_demo_episode, jobs, repeat(config), repeat(seed)),
                    total=len(jobs),
                    desc="demos",
                    disable=None,
                )
            )
    else:
        outcomes = [run_demo_episode(job, config, seed) for job in tqdm(jobs, desc="demos", disable=None)]

    records, payloads = [], []
    size = record_floats(config.world.camera.raster, config.viewgen.chunk_horizon, config.env.wrist_camera) * 4
    for outcome in outcomes:
        for record, payload in zip(outcome.records, outcome.payloads):
            record.index = len(records)
            record.blob_offset = codec.HEADER_SIZE + record.index * size
            records.append(record)
            payloads.append(payload)
    yields = _yield_table(outcomes)
    for key, row in yields.items():
        if row["yield"] < LOW_YIELD:
            logger.warning(f"Low oracle yield for {key}: {row['successes']}/{row['attempted'] - row['rejected']}")
    return DemoCollection(demos_header(config, seed, len(records)), records, payloads, yields)


def export_demos(collection: DemoCollection, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / MANIFEST_NAME
    blob_path = out_dir / BLOB_NAME
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(collection.header, sort_keys=True) + "\n")
        for record in collection.records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    with open(blob_path, "wb") as fh:
        codec.write_header(fh, codec.DEMOS_VERSION, len(collection.records))
        for payload in collection.payloads:
            fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())
    (out_dir / YIELD_NAME).write_text(json.dumps(collection.yields, sort_keys=True, indent=2), encoding="utf-8")
    logger.info(f"Wrote {len(collection.records)} demonstration records to {out_dir}")
    return manifest_path, blob_path


@dataclass
class DemoSet:
    """Demonstrations reopened from disk."""

    header: dict[str, Any]
    records: list[DemoRecord]
    blob_path: Path

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[DemoRecord]:
        return iter(self.records)

    @property
    def raster_dims(self) -> tuple[int, int]:
        return tuple(self.header["raster"])

    @property
    def horizon(self) -> int:
        return int(self.header["chunk_horizon"])

    @property
    def wrist(self) -> bool:
        return bool(self.header["wrist"])

    def camera(self, pose: tuple[float, float]) -> CameraState:
        return CameraState(
            pitch=float(pose[0]),
            yaw=float(pose[1]),
            limits=(*self.header["pitch_limits"], *self.header["yaw_limits"]),
            fov_h=float(self.header["fov_h"]),
            raster_dims=self.raster_dims,
            pivot=tuple(self.header["head_pivot"]),
        )

    def _values(self, i: int) -> np.ndarray:
        count = int(self.header["record_floats"])
        data = np.fromfile(self.blob_path, dtype="<f4", count=count, offset=self.records[i].blob_offset)
        if data.size != count:
            raise DataError(f"{self.blob_path}: record {i} is truncated")
        return data

    def unpack(self, i: int) -> dict[str, np.ndarray]:
        """Split record ``i`` into its sections."""
        h, w = self.raster_dims
        k = self.horizon
        plane_size = codec.N_PLANES * h * w
        values = self._values(i)
        sections = {"planes": values[:plane_size].reshape(codec.N_PLANES, h, w)}
        offset = plane_size
        if self.wrist:
            sections["wrist_planes"] = values[offset : offset + plane_size].reshape(codec.N_PLANES, h, w)
            offset += plane_size
        sections["head"] = values[offset : offset + 2 * k].reshape(k, 2)
        offset += 2 * k
        sections["body"] = values[offset : offset + D_BODY * k].reshape(k, D_BODY)
        offset += D_BODY * k
        sections["proprio"] = values[offset : offset + PROPRIO_DIM]
        return sections

    def observation(self, i: int):
        record = self.records[i]
        sections = self.unpack(i)
        obs = codec.decode_observation(sections["planes"], self.camera(record.camera), record.instance_ids)
        if not self.wrist:
            return obs
        pitch, yaw, *pivot = record.wrist_camera
        wrist_camera = CameraState(
            pitch=pitch,
            yaw=yaw,
            limits=WRIST_LIMITS,
            fov_h=float(self.header["fov_h"]),
            raster_dims=self.raster_dims,
            pivot=tuple(pivot),
        )
        wrist_obs = codec.decode_observation(sections["wrist_planes"], wrist_camera, record.wrist_instance_ids)
        return replace(obs, wrist_observation=wrist_obs)


def read_demos(path: str | Path) -> DemoSet:
    """Reopen demonstrations from their directory or manifest path.

    Raises:
        DataError: on a foreign or inconsistent manifest or blob.
    """
    manifest_path = resolve_manifest(path)
    header, rows = read_manifest(manifest_path)
    if header.get("format") != FORMAT_NAME:
        raise DataError(f"{manifest_path}: not a demonstration set (format {header.get('format')!r})")
    blob_path = manifest_path.with_name(BLOB_NAME)
    if not blob_path.exists():
        raise DataError(f"Blob {blob_path} is missing")
    version, count = codec.read_header(blob_path)
    if version != codec.DEMOS_VERSION:
        raise DataError(f"{blob_path}: unsupported blob version {version}")
    records = [DemoRecord.from_dict(row) for row in rows]
    if count != len(records) or count != header["count"]:
        raise DataError(f"Record count mismatch: blob {count}, manifest {len(records)}, header {header['count']}")
    expected = codec.HEADER_SIZE + count * int(header["record_floats"]) * 4
    if blob_path.stat().st_size != expected:
        raise DataError(f"{blob_path}: size {blob_path.stat().st_size} does not match {count} records")
    return DemoSet(header=header, records=records, blob_path=blob_path)
