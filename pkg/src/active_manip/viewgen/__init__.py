"""Viewpoint dataset generation: templates, views, instructions and records."""

from .dataset import (
    DatasetRecord,
    ViewDataset,
    generate_dataset,
    read_dataset,
    record_scene,
    write_dataset,
)
from .instruct import BoundTask, Instruction, bind_template, instantiate_template
from .templates import TEMPLATES, TaskTemplate
from .views import make_gt_chunk, optimal_view, perturb_view
from .vocab import Vocabulary, default_vocabulary, detokenize, tokenize

__all__ = [
    "BoundTask",
    "DatasetRecord",
    "Instruction",
    "TEMPLATES",
    "TaskTemplate",
    "ViewDataset",
    "Vocabulary",
    "bind_template",
    "default_vocabulary",
    "detokenize",
    "generate_dataset",
    "instantiate_template",
    "make_gt_chunk",
    "optimal_view",
    "perturb_view",
    "read_dataset",
    "record_scene",
    "tokenize",
    "write_dataset",
]
