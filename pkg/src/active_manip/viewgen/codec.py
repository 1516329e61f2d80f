"""Binary observation blobs.

Layout (little-endian):

    offset 0   magic   4 bytes  b"AVPK"
    offset 4   version u32      1 = view records, 2 = demonstrations
    offset 8   count   u64      number of records
    offset 16  records          fixed-size, back to back

A view record is ``N_PLANES`` float32 planes of ``H x W`` values, row-major:
category index + 1, colour index + 1, graspable flag, depth (metres, 0 where
empty) and instance index + 1 into the record's ``instance_ids`` list. Ray
directions are not stored; they follow from the raster size and field of view.
"""

from __future__ import annotations

from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from ..errors import DataError
from ..world import catalog
from ..world.camera import CameraState, pixel_rays
from ..world.render import EMPTY_INSTANCE, Observation

BLOB_MAGIC = b"AVPK"
VIEWS_VERSION = 1
DEMOS_VERSION = 2
HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("count", "<u8")])
HEADER_SIZE = HEADER_DTYPE.itemsize
PLANE_NAMES = ("category", "color", "graspable", "depth", "instance")
N_PLANES = len(PLANE_NAMES)


def planes_nbytes(raster_dims: Sequence[int]) -> int:
    h, w = raster_dims
    return N_PLANES * h * w * 4


def write_header(fh: BinaryIO, version: int, count: int) -> None:
    header = np.array([(BLOB_MAGIC, version, count)], dtype=HEADER_DTYPE)
    fh.write(header.tobytes())


def read_header(path: Path) -> tuple[int, int]:
    """Return ``(version, count)``; raises DataError on a foreign file."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise DataError(f"{path}: truncated blob header")
    header = np.frombuffer(raw, dtype=HEADER_DTYPE)[0]
    if header["magic"] != BLOB_MAGIC:
        raise DataError(f"{path}: bad magic {header['magic']!r}")
    return int(header["version"]), int(header["count"])


def encode_observation(obs: Observation) -> np.ndarray:
    """Pack an observation into ``(N_PLANES, H, W)`` float32 planes."""
    layout = catalog.semantic_channel_layout()
    semantic = obs.semantic_raster
    valid = obs.valid_mask
    cat_lo, cat_hi = layout["category"]
    col_lo, col_hi = layout["color"]
    grasp = layout["graspable"][0]
    planes = np.zeros((N_PLANES,) + obs.raster_dims, dtype=np.float32)
    planes[0] = np.where(valid, np.argmax(semantic[..., cat_lo:cat_hi], axis=-1) + 1, 0)
    planes[1] = np.where(valid, np.argmax(semantic[..., col_lo:col_hi], axis=-1) + 1, 0)
    planes[2] = semantic[..., grasp]
    planes[3] = obs.depth_raster
    planes[4] = obs.instance_raster + 1
    return planes


def decode_observation(
    planes: np.ndarray, camera: CameraState, instance_ids: Sequence[str]
) -> Observation:
    """Rebuild an ``Observation`` from stored planes and the view's camera."""
    if planes.shape != (N_PLANES,) + tuple(camera.raster_dims):
        raise DataError(
            f"Stored planes {planes.shape} do not match raster {camera.raster_dims}"
        )
    layout = catalog.semantic_channel_layout()
    h, w = camera.raster_dims
    semantic = np.zeros((h, w, catalog.N_SEMANTIC_CHANNELS), dtype=np.float32)
    category = planes[0].astype(np.int64)
    color = planes[1].astype(np.int64)
    rows, cols = np.nonzero(category > 0)
    semantic[rows, cols, layout["category"][0] + category[rows, cols] - 1] = 1.0
    semantic[rows, cols, layout["color"][0] + color[rows, cols] - 1] = 1.0
    semantic[..., layout["graspable"][0]] = planes[2]
    instance = planes[4].astype(np.int32) - 1
    instance[instance < 0] = EMPTY_INSTANCE
    return Observation(
        semantic_raster=semantic,
        depth_raster=planes[3].astype(np.float64),
        ray_dirs=pixel_rays(camera),
        intrinsics=camera.intrinsics,
        camera_pose=camera.pose(),
        instance_raster=instance,
        instance_ids=tuple(instance_ids),
    )


def read_planes(path: Path, offset: int, raster_dims: Sequence[int]) -> np.ndarray:
    h, w = raster_dims
    count = N_PLANES * h * w
    data = np.fromfile(path, dtype="<f4", count=count, offset=offset)
    if data.size != count:
        raise DataError(f"{path}: record at offset {offset} is truncated")
    return data.reshape(N_PLANES, h, w)
