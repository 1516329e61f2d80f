"""Object catalog: categories, colours and their primitive shapes.

The category order fixes the one-hot channel layout of the semantic raster,
so entries are only ever appended.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

Shape = Literal["sphere", "box"]


@dataclass(frozen=True)
class CategorySpec:
    """Static description of an object category.

    Attributes:
        name: Category name, also the word used in instructions.
        shape: Rendering primitive.
        size_range: Bounding-sphere radius range in metres.
        aspect: Box proportions (x, y, z); scaled so the half-extent vector
            has the bounding-sphere radius as its norm. Ignored for spheres.
        graspable: Whether the gripper may attach to it.
        capacity: Liquid units it can hold (0 = none).
        rooms: Room types where the category is sampled with boosted weight.
    """

    name: str
    shape: Shape
    size_range: tuple[float, float]
    aspect: tuple[float, float, float] = (1.0, 1.0, 1.0)
    graspable: bool = True
    capacity: int = 0
    rooms: tuple[str, ...] = ()


CATEGORIES: tuple[CategorySpec, ...] = (
    CategorySpec("cup", "box", (0.035, 0.045), (0.6, 0.6, 1.0), capacity=10, rooms=("kitchen", "dining")),
    CategorySpec("mug", "box", (0.035, 0.045), (0.7, 0.6, 0.9), capacity=10, rooms=("kitchen", "living")),
    CategorySpec("plate", "box", (0.05, 0.07), (1.0, 1.0, 0.15), rooms=("kitchen", "dining")),
    CategorySpec("bowl", "box", (0.045, 0.06), (1.0, 1.0, 0.45), capacity=12, rooms=("kitchen", "dining")),
    CategorySpec("apple", "sphere", (0.03, 0.045), rooms=("kitchen", "dining")),
    CategorySpec("lemon", "sphere", (0.025, 0.035), rooms=("kitchen",)),
    CategorySpec("orange", "sphere", (0.03, 0.04), rooms=("kitchen", "dining")),
    CategorySpec("banana", "box", (0.05, 0.07), (1.0, 0.25, 0.2), rooms=("kitchen", "dining")),
    CategorySpec("bottle", "box", (0.06, 0.08), (0.35, 0.35, 1.0), capacity=10, rooms=("kitchen", "dining", "bathroom")),
    CategorySpec("can", "box", (0.04, 0.05), (0.55, 0.55, 1.0), rooms=("kitchen", "living")),
    CategorySpec("basket", "box", (0.06, 0.08), (1.0, 0.8, 0.6), rooms=("kitchen", "living", "bathroom")),
    CategorySpec("box", "box", (0.05, 0.10), (0.5, 1.0, 1.2), rooms=("living",)),
    CategorySpec("book", "box", (0.06, 0.08), (0.8, 1.0, 0.25), rooms=("living",)),
    CategorySpec("teapot", "sphere", (0.05, 0.065), capacity=10, rooms=("kitchen", "dining")),
    CategorySpec("jar", "box", (0.04, 0.055), (0.7, 0.7, 1.0), capacity=12, rooms=("kitchen", "bathroom")),
    CategorySpec("sponge", "box", (0.03, 0.04), (1.0, 0.7, 0.4), rooms=("kitchen", "bathroom")),
    CategorySpec("soap", "box", (0.025, 0.035), (1.0, 0.6, 0.4), rooms=("bathroom",)),
    CategorySpec("towel", "box", (0.06, 0.08), (1.0, 0.8, 0.3), rooms=("bathroom",)),
    CategorySpec("remote", "box", (0.05, 0.07), (1.0, 0.3, 0.15), rooms=("living",)),
    CategorySpec("vase", "box", (0.06, 0.08), (0.5, 0.5, 1.0), capacity=12, rooms=("living", "dining")),
    CategorySpec("pitcher", "box", (0.05, 0.065), (0.6, 0.6, 1.0), capacity=10, rooms=("kitchen", "dining")),
    CategorySpec("candle", "box", (0.03, 0.045), (0.5, 0.5, 1.0), rooms=("living", "dining", "bathroom")),
)

# Fixture categories are rendered (drawer fronts, cabinet doors) but never
# sampled as loose objects.
FIXTURE_CATEGORIES: tuple[str, ...] = ("drawer", "cabinet")

CATEGORY_NAMES: tuple[str, ...] = tuple(c.name for c in CATEGORIES) + FIXTURE_CATEGORIES

COLORS: tuple[str, ...] = (
    "red",
    "green",
    "blue",
    "yellow",
    "white",
    "black",
    "orange",
    "purple",
)

# Liquid holders can be poured from; receptacles can be poured into.
HOLDER_CATEGORIES: tuple[str, ...] = ("cup", "mug", "bottle", "pitcher", "teapot")
RECEPTACLE_CATEGORIES: tuple[str, ...] = ("bowl", "jar", "vase")

# Tall, wide categories that can hide a smaller object behind them.
OCCLUDER_CATEGORIES: tuple[str, ...] = ("box", "book", "basket")

N_SEMANTIC_CHANNELS = len(CATEGORY_NAMES) + len(COLORS) + 1

_BY_NAME = {c.name: c for c in CATEGORIES}


def category(name: str) -> CategorySpec:
    """Return the spec for ``name``; raises KeyError for fixtures/unknowns."""
    try:
        return _BY_NAME[name]
    except KeyError:
        raise KeyError(f"Unknown object category: {name}") from None


def category_index(name: str) -> int:
    return CATEGORY_NAMES.index(name)


def color_index(name: str) -> int:
    return COLORS.index(name)


def semantic_channel_layout() -> dict[str, tuple[int, int]]:
    """Half-open channel ranges of the three one-hot groups."""
    n_cat = len(CATEGORY_NAMES)
    n_col = len(COLORS)
    return {
        "category": (0, n_cat),
        "color": (n_cat, n_cat + n_col),
        "graspable": (n_cat + n_col, n_cat + n_col + 1),
    }


def room_weights(room_type: str, excluded: tuple[str, ...] = ()) -> dict[str, float]:
    """Sampling weight per category for one room type."""
    weights: dict[str, float] = {}
    for spec in CATEGORIES:
        if spec.name in excluded:
            continue
        weights[spec.name] = 3.0 if room_type in spec.rooms else 1.0
    return weights
