"""Training samples drawn from view datasets and demonstration sets.

Every sample is a dict of numpy arrays: the model inputs produced by
``observation_arrays`` plus the targets ``head``, ``body`` and
``body_mask``. ``make_batch`` splits a list of samples back into
``ModelInputs`` and ``ActionTargets``.

Batches are chosen per step from an RNG seeded with ``(seed, step)``, so a
run restarted at step ``n`` sees exactly the batches an uninterrupted run
would have seen.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
import torch

from ..errors import DataError, DimensionError
from ..model import ActionTargets, ModelDims, ModelInputs, blank_wrist_arrays, collate, observation_arrays
from ..world.camera import in_frame, project_point

logger = logging.getLogger(__name__)

TARGET_KEYS = ("head", "body", "body_mask")
# Separate streams for batch indices and mixture sources.
INDEX_STREAM = 17
MIXTURE_STREAM = 29


def step_rng(seed: int, step: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(step), int(stream)])


def step_generator(seed: int, step: int) -> torch.Generator:
    """Torch generator for diffusion steps and noise at one training step."""
    return torch.Generator().manual_seed(int(seed) * 1_000_003 + int(step))


class PerceptionDataset:
    """Image-to-camera-motion records; body targets are masked out.

    Args:
        views: A dataset opened with ``viewgen.read_dataset``.
        dims: Model dimensions the samples must fit.
        splits: Record splits to use; ``None`` uses every record.
        wrist: Emit an empty wrist view for models with a wrist slot.
    """

    source = "perception"

    def __init__(self, views, dims: ModelDims, splits: Optional[Sequence[str]] = ("train",), wrist: bool = False):
        if tuple(views.raster_dims) != tuple(dims.raster):
            raise DimensionError(f"Dataset raster {views.raster_dims} != model raster {dims.raster}", layer="patch_embed")
        if int(views.header["chunk_horizon"]) != dims.horizon:
            raise DimensionError(
                f"Dataset chunk horizon {views.header['chunk_horizon']} != model horizon {dims.horizon}",
                layer="dit.in_proj",
            )
        self.views = views
        self.dims = dims
        self.wrist = wrist
        wanted = None if splits is None else set(splits)
        self.indices = [i for i, r in enumerate(views.records) if wanted is None or r.split in wanted]

    def __len__(self) -> int:
        return len(self.indices)

    def record(self, j: int):
        return self.views.records[self.indices[j]]

    def head_targets(self) -> np.ndarray:
        """Every ground-truth head row, for fitting the normalizer."""
        if not self.indices:
            return np.zeros((0, 2))
        return np.concatenate([np.asarray(self.record(j).gt_chunk, dtype=np.float64) for j in range(len(self))])

    def sample(self, j: int) -> dict[str, np.ndarray]:
        i = self.indices[j]
        record = self.views.records[i]
        obs = self.views.observation(i)
        arrays = observation_arrays(obs, record.instruction.tokens, None, self.dims)
        if self.wrist:
            arrays = blank_wrist_arrays(arrays)
        arrays["head"] = np.asarray(record.gt_chunk, dtype=np.float32)
        arrays["body"] = np.zeros((self.dims.horizon, self.dims.d_body), dtype=np.float32)
        arrays["body_mask"] = np.float32(0.0)
        return arrays


class DemoDataset:
    """Oracle demonstration steps with both head and body targets."""

    source = "manipulation"

    def __init__(self, demos, dims: ModelDims, wrist: bool = False):
        if tuple(demos.raster_dims) != tuple(dims.raster):
            raise DimensionError(f"Demo raster {demos.raster_dims} != model raster {dims.raster}", layer="patch_embed")
        if demos.horizon != dims.horizon:
            raise DimensionError(f"Demo chunk horizon {demos.horizon} != model horizon {dims.horizon}", layer="dit.in_proj")
        if wrist and not demos.wrist:
            raise DimensionError("Model expects a wrist view but the demos carry none", layer="wrist_patch_embed")
        self.demos = demos
        self.dims = dims
        self.wrist = wrist

    def __len__(self) -> int:
        return len(self.demos)

    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        heads, bodies = [], []
        for i in range(len(self.demos)):
            sections = self.demos.unpack(i)
            heads.append(sections["head"])
            bodies.append(sections["body"])
        if not heads:
            return np.zeros((0, 2)), np.zeros((0, self.dims.d_body))
        return np.concatenate(heads), np.concatenate(bodies)

    def sample(self, j: int) -> dict[str, np.ndarray]:
        record = self.demos.records[j]
        sections = self.demos.unpack(j)
        obs = self.demos.observation(j)
        arrays = observation_arrays(obs, record.instruction.tokens, None, self.dims, wrist=self.wrist)
        arrays["proprio"] = np.asarray(sections["proprio"], dtype=np.float32)
        arrays["head"] = np.asarray(sections["head"], dtype=np.float32)
        arrays["body"] = np.asarray(sections["body"], dtype=np.float32)
        arrays["body_mask"] = np.float32(1.0)
        return arrays


def target_cell(camera, anchor, visible_pixels: int, grid: int) -> int:
    """Coarse grid cell of the projected anchor; ``grid**2`` when not visible."""
    not_visible = grid * grid
    if visible_pixels <= 0:
        return not_visible
    projected = project_point(camera, anchor)
    if projected is None or not in_frame(camera, projected[0], projected[1]):
        return not_visible
    h, w = camera.raster_dims
    col = min(grid - 1, max(0, int((projected[0] + 0.5) / w * grid)))
    row = min(grid - 1, max(0, int((projected[1] + 0.5) / h * grid)))
    return row * grid + col


class PretrainDataset:
    """Records labelled with the grid cell holding the referenced target.

    ``shuffle_seed`` permutes the labels across records, giving the control
    run whose accuracy should stay near chance.
    """

    def __init__(
        self,
        views,
        dims: ModelDims,
        grid: int,
        splits: Optional[Sequence[str]] = ("train",),
        shuffle_seed: Optional[int] = None,
        wrist: bool = False,
    ):
        self.inner = PerceptionDataset(views, dims, splits, wrist=wrist)
        self.grid = grid
        self.labels = np.asarray([self._label(j) for j in range(len(self.inner))], dtype=np.int64)
        if shuffle_seed is not None:
            self.labels = np.random.default_rng(shuffle_seed).permutation(self.labels)

    @property
    def n_classes(self) -> int:
        return self.grid * self.grid + 1

    def _label(self, j: int) -> int:
        i = self.inner.indices[j]
        record = self.inner.views.records[i]
        obs = self.inner.views.observation(i)
        camera = self.inner.views.camera(record.initial_camera)
        return target_cell(camera, record.anchor, obs.pixel_count(record.target_id), self.grid)

    def __len__(self) -> int:
        return len(self.inner)

    def sample(self, j: int) -> dict[str, np.ndarray]:
        arrays = self.inner.sample(j)
        for key in TARGET_KEYS:
            arrays.pop(key)
        arrays["label"] = self.labels[j]
        return arrays


def make_batch(samples: Sequence[dict[str, np.ndarray]]) -> tuple[ModelInputs, ActionTargets]:
    """Split collated samples into model inputs and action targets."""
    inputs, targets = [], {k: [] for k in TARGET_KEYS}
    for sample in samples:
        inputs.append({k: v for k, v in sample.items() if k not in TARGET_KEYS})
        for key in TARGET_KEYS:
            targets[key].append(sample[key])
    stacked = {k: torch.from_numpy(np.stack(v).astype(np.float32)) for k, v in targets.items()}
    return collate(inputs), ActionTargets(**stacked)


class IndexSampler:
    """Uniform draws with replacement from one dataset, fixed per step."""

    def __init__(self, dataset, batch_size: int, seed: int):
        if len(dataset) == 0:
            raise DataError(f"No records to train on in the {getattr(dataset, 'source', 'given')} dataset")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed

    def indices(self, step: int) -> np.ndarray:
        return step_rng(self.seed, step, INDEX_STREAM).integers(0, len(self.dataset), self.batch_size)

    def samples(self, step: int) -> list[dict[str, np.ndarray]]:
        return [self.dataset.sample(int(j)) for j in self.indices(step)]

    def batch(self, step: int) -> tuple[ModelInputs, ActionTargets]:
        return make_batch(self.samples(step))


class MixtureSampler:
    """Batches whose records come i.i.d. from perception or manipulation data.

    Each slot of a batch is a perception record with probability ``ratio``
    and a manipulation record otherwise. The draws for step ``n`` depend
    only on ``(seed, n)``.
    """

    def __init__(self, perception, manipulation, ratio: float, seed: int, batch_size: int):
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"Mixture ratio must lie in [0, 1], got {ratio}")
        if len(perception) == 0:
            raise DataError("Perception dataset for the mixture is empty")
        if len(manipulation) == 0:
            raise DataError("Manipulation dataset for the mixture is empty")
        self.perception = perception
        self.manipulation = manipulation
        self.ratio = float(ratio)
        self.seed = seed
        self.batch_size = batch_size

    def draws(self, step: int) -> list[tuple[str, int]]:
        """``(source, index)`` for every slot of the batch at ``step``."""
        rng = step_rng(self.seed, step, MIXTURE_STREAM)
        from_perception = rng.random(self.batch_size) < self.ratio
        p_idx = rng.integers(0, len(self.perception), self.batch_size)
        m_idx = rng.integers(0, len(self.manipulation), self.batch_size)
        return [
            ("perception", int(p)) if flag else ("manipulation", int(m))
            for flag, p, m in zip(from_perception, p_idx, m_idx)
        ]

    def samples(self, step: int) -> list[dict[str, np.ndarray]]:
        out = []
        for source, j in self.draws(step):
            dataset = self.perception if source == "perception" else self.manipulation
            out.append(dataset.sample(j))
        return out

    def batch(self, step: int) -> tuple[ModelInputs, ActionTargets]:
        return make_batch(self.samples(step))

    def __iter__(self):
        step = 0
        while True:
            yield self.batch(step)
            step += 1


def mix_datasets(perception, manipulation, ratio: float, seed: int, batch_size: int = 32) -> MixtureSampler:
    """Batch stream mixing perception and manipulation records by ``ratio``."""
    sampler = MixtureSampler(perception, manipulation, ratio, seed, batch_size)
    logger.info(
        f"Mixing {len(perception)} perception and {len(manipulation)} manipulation records at ratio {ratio}"
    )
    return sampler
