"""Small builders shared by the test modules."""

import dataclasses

import torch

from active_manip.config import ModelConfig, PipelineConfig
from active_manip.env.demos import DemoCollection, demo_records, demos_header, export_demos, record_floats
from active_manip.env.oracle import OraclePolicy
from active_manip.env.rollout import rollout
from active_manip.env.tasks import FAMILY_PHASES, TaskSpec
from active_manip.model import ActionTargets, ModelDims, ModelInputs
from active_manip.viewgen import codec
from active_manip.viewgen.instruct import Instruction
from active_manip.world.articulation import Container
from active_manip.world.camera import CameraState
from active_manip.world.layout import BASE_SURFACES, CONTAINER_SLOTS
from active_manip.world.scene import ObjectInstance, Scene


def make_object(object_id="o1", category="apple", position=(0.5, 0.0, 0.75), **kwargs):
    defaults = {"color": "red", "size": 0.04, "yaw": 0.0}
    defaults.update(kwargs)
    return ObjectInstance(id=object_id, category=category, position=tuple(position), **defaults)


def make_scene(objects=(), containers=(), room_type="kitchen"):
    return Scene(
        room_type=room_type,
        surfaces=BASE_SURFACES,
        objects=tuple(objects),
        containers=tuple(containers),
        head_pivot=(0.0, 0.0, 1.25),
        rng_seed=0,
    )


def make_drawer(value=0.0, slot_index=0, interior=()):
    drawer = Container.mounted(f"drawer{slot_index}", CONTAINER_SLOTS[slot_index], "white", value)
    return dataclasses.replace(drawer, interior_objects=tuple(interior))


def make_cabinet(value=0.0, slot_index=2, interior=()):
    cabinet = Container.mounted(f"cabinet{slot_index}", CONTAINER_SLOTS[slot_index], "blue", value)
    return dataclasses.replace(cabinet, interior_objects=tuple(interior))


def tiny_model_config(**overrides):
    """A model with fewer than 1k parameters, small enough for float64 gradient checks."""
    values = dict(
        width=4,
        heads=1,
        mlp_ratio=1,
        base_blocks=1,
        dit_blocks=1,
        patch=2,
        adapter_rank=1,
        adapter_alpha=2.0,
        diffusion_levels=10,
        sampling_steps=4,
        pretrain_grid=1,
        global_mlp_layers=2,
        geo_channels=1,
    )
    values.update(overrides)
    return ModelConfig(**values)


def tiny_dims():
    return ModelDims(channels=3, raster=(4, 4), vocab_size=6, max_tokens=3, horizon=2, d_body=2, proprio_dim=3)


def random_inputs(dims, batch=2, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    h, w = dims.raster
    rays = torch.randn(batch, 3, h, w, generator=g, dtype=dtype)
    tokens = [
        [1] + [3 + (i + j) % (dims.vocab_size - 3) for j in range(dims.max_tokens - 1)]
        for i in range(batch)
    ]
    return ModelInputs(
        semantic=torch.rand(batch, dims.channels, h, w, generator=g, dtype=dtype),
        tokens=torch.tensor(tokens, dtype=torch.long),
        proprio=torch.randn(batch, dims.proprio_dim, generator=g, dtype=dtype),
        depth=torch.rand(batch, 1, h, w, generator=g, dtype=dtype) + 0.1,
        rays=rays / rays.norm(dim=1, keepdim=True),
        globals_=torch.randn(batch, dims.global_dim, generator=g, dtype=dtype),
    )


def random_targets(dims, batch=2, seed=1, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return ActionTargets(
        head=torch.randn(batch, dims.horizon, 2, generator=g, dtype=dtype),
        body=torch.randn(batch, dims.horizon, dims.d_body, generator=g, dtype=dtype),
        body_mask=torch.ones(batch, dtype=dtype),
    )


def make_task(scene, family="pick", bindings=None, goals=None, camera=None, anchor_id=None, **kwargs):
    """A hand-built ``TaskSpec`` for tests that must not depend on task sampling."""
    bindings = dict(bindings or {"object": scene.objects[0].id})
    anchor_id = anchor_id or bindings.get("container") or bindings.get("holder") or bindings["object"]
    task_goals = {"velocity_eps": 0.002, "support_height": 0.72}
    task_goals.update(goals or {})
    values = dict(
        family=family,
        visibility="unoccluded",
        seed=0,
        scene=scene,
        camera=camera or CameraState(pivot=scene.head_pivot),
        anchor_id=anchor_id,
        bindings=bindings,
        goals=task_goals,
        phases=FAMILY_PHASES[family],
        hold_duration=20,
        horizon=300,
        instruction=Instruction(text="pick up the red apple", tokens=(1, 4, 5), modality="visual_centering", target_object_id=anchor_id),
    )
    values.update(kwargs)
    return TaskSpec(**values)


def make_apple_task(pitch=0.0, yaw=0.0, raster=(48, 48), **kwargs):
    """A pick task with one apple resting on the table within easy reach."""
    apple = make_object("apple")
    apple = dataclasses.replace(apple, position=(0.45, 0.1, 0.72 + apple.half_extents[2]))
    scene = make_scene([apple])
    camera = CameraState(pitch=pitch, yaw=yaw, raster_dims=tuple(raster), pivot=scene.head_pivot)
    return make_task(scene, bindings={"object": "apple"}, camera=camera, **kwargs)


def make_tiny_config():
    """Small but complete configuration for fast end-to-end tests."""
    config = PipelineConfig()
    config.world.camera.raster = (16, 16)
    config.world.scene.object_count = (3, 5)
    config.model.width = 16
    config.model.heads = 2
    config.model.mlp_ratio = 2
    config.model.base_blocks = 1
    config.model.dit_blocks = 1
    config.model.patch = 8
    config.model.adapter_rank = 2
    config.model.adapter_alpha = 4.0
    config.model.diffusion_levels = 10
    config.model.sampling_steps = 4
    config.model.geo_channels = 4
    config.viewgen.chunk_horizon = 4
    for name in ("pretrain", "stage1", "stage2"):
        stage = getattr(config.train, name)
        setattr(
            config.train,
            name,
            dataclasses.replace(stage, steps=4, batch_size=4, eval_every=2, checkpoint_every=2),
        )
    config.env.horizon_atomic = 120
    config.env.horizon_short = 160
    config.env.horizon_long = 240
    config.env.hold_duration = 5
    config.eval.n_episodes = 2
    config.eval.max_chunks = 2
    return config


def write_demo_set(config, out_dir, horizon=12, record_every=2):
    """Export the oracle's first steps on the apple task as a demonstration set."""
    task = make_apple_task(pitch=-30.0, yaw=10.0, raster=config.world.camera.raster, horizon=horizon)
    result = rollout(task, OraclePolicy(config), config, record_every=record_every)
    k = config.viewgen.chunk_horizon
    records, payloads = demo_records(result, 0, k, wrist=False)
    size = record_floats(config.world.camera.raster, k, False) * 4
    for i, record in enumerate(records):
        record.index = i
        record.blob_offset = codec.HEADER_SIZE + i * size
    export_demos(DemoCollection(demos_header(config, 0, len(records)), records, payloads, {}), out_dir)
    return out_dir
