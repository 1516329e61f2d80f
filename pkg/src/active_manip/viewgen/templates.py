"""Instruction templates and the phrase banks they are built from.

Every template phrase uses up to three slots: ``[Object]`` (the entity being
handled), ``[target]`` (a destination, receptacle or container) and
``[position]`` (a head-motion directive). Paraphrases of one template carry
exactly the same slots.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Literal, Optional

AtomicAction = Literal["pick", "reorient", "open", "close", "pour", "place"]
Modality = Literal["visual_centering", "spatial_directive", "common_sense"]
Augmentation = Literal["conditional_reasoning", "container_interaction"]
Reasoning = Literal["ordinal", "superlative", "color"]

ATOMIC_ACTIONS: tuple[str, ...] = ("pick", "reorient", "open", "close", "pour", "place")
SLOT_PATTERN = re.compile(r"\[(Object|position|target)\]")


@dataclass(frozen=True)
class TaskTemplate:
    """A parameterized instruction plus its paraphrase bank.

    Attributes:
        id: Stable identifier, ``action.modality[.variant]``.
        atomic_action: What the robot is asked to do.
        modality: How the target is referred to.
        augmentation: Optional reasoning or two-stage variant.
        phrase: Canonical surface form with slots.
        paraphrases: Alternative surface forms; the first equals ``phrase``.
        reasoning: Referring-expression kind for conditional reasoning.
    """

    id: str
    atomic_action: AtomicAction
    modality: Modality
    phrase: str
    paraphrases: tuple[str, ...]
    augmentation: Optional[Augmentation] = None
    reasoning: Optional[Reasoning] = None
    slots: frozenset[str] = field(init=False)

    def __post_init__(self) -> None:
        slots = frozenset(SLOT_PATTERN.findall(self.phrase))
        object.__setattr__(self, "slots", slots)
        if len(self.paraphrases) < 4:
            raise ValueError(f"Template {self.id} needs at least 4 paraphrases")
        for text in self.paraphrases:
            if frozenset(SLOT_PATTERN.findall(text)) != slots:
                raise ValueError(f"Template {self.id}: paraphrase {text!r} changes the slot set")
        if self.modality == "spatial_directive" and "position" not in slots:
            raise ValueError(f"Template {self.id}: directive phrase needs a [position] slot")


# Verb phrases per action; index-aligned with the modality wrappers below.
ACTION_PHRASES: dict[str, tuple[str, ...]] = {
    "pick": (
        "pick up the [Object]",
        "grab the [Object]",
        "lift the [Object]",
        "take the [Object]",
    ),
    "reorient": (
        "rotate the [Object]",
        "turn the [Object] around",
        "reorient the [Object]",
        "spin the [Object]",
    ),
    "place": (
        "put the [Object] on the [target]",
        "place the [Object] on the [target]",
        "move the [Object] to the [target]",
        "set the [Object] down on the [target]",
    ),
    "open": (
        "open the [Object]",
        "pull the [Object] open",
        "open up the [Object]",
        "get the [Object] open",
    ),
    "close": (
        "close the [Object]",
        "shut the [Object]",
        "push the [Object] closed",
        "close up the [Object]",
    ),
    "pour": (
        "pour the [Object] into the [target]",
        "empty the [Object] into the [target]",
        "fill the [target] from the [Object]",
        "tip the [Object] over the [target]",
    ),
}

CONTAINER_PHRASES: tuple[str, ...] = (
    "take the [Object] out of the [target]",
    "fetch the [Object] from the [target]",
    "get the [Object] from inside the [target]",
    "retrieve the [Object] from the [target]",
)

MODALITY_WRAPPERS: dict[str, tuple[str, ...]] = {
    "visual_centering": ("{}", "please {}", "can you {} ?", "{} now"),
    "spatial_directive": (
        "look [position] and {}",
        "turn [position] , then {}",
        "the target is [position] . {}",
        "{} . it is [position]",
    ),
    "common_sense": ("{}", "please {}", "could you {} ?", "go and {}"),
}

# Head-motion directives bound to [position].
POSITION_WORDS: tuple[str, ...] = (
    "left",
    "right",
    "up",
    "down",
    "up and left",
    "up and right",
    "down and left",
    "down and right",
)

ORDINALS: tuple[str, ...] = ("first", "second", "third", "fourth", "fifth")
SUPERLATIVES: tuple[str, ...] = ("biggest", "smallest")

# Generic names used when the modality does not call for room knowledge.
SURFACE_NAMES: dict[str, str] = {
    "table": "table",
    "left_counter": "left counter",
    "right_counter": "right counter",
    "shelf": "shelf",
}

# Room-specific names of the same fixtures, used by common-sense prompts.
ROOM_SURFACE_CUES: dict[str, dict[str, str]] = {
    "kitchen": {
        "table": "kitchen table",
        "left_counter": "sink counter",
        "right_counter": "stove counter",
        "shelf": "spice shelf",
    },
    "living": {
        "table": "coffee table",
        "left_counter": "side table",
        "right_counter": "tv stand",
        "shelf": "bookshelf",
    },
    "dining": {
        "table": "dining table",
        "left_counter": "sideboard",
        "right_counter": "serving counter",
        "shelf": "china shelf",
    },
    "bathroom": {
        "table": "vanity table",
        "left_counter": "sink counter",
        "right_counter": "bath ledge",
        "shelf": "medicine shelf",
    },
}

CONTAINER_PREPOSITIONS: dict[str, str] = {"drawer": "under", "cabinet": "beside"}

# Extra words that appear in bound slot values.
FILLER_WORDS: tuple[str, ...] = ("from", "to", "on", "the", "inside")


def _template(
    action: str,
    modality: str,
    bank: tuple[str, ...],
    augmentation: Optional[str] = None,
    reasoning: Optional[str] = None,
) -> TaskTemplate:
    wrappers = MODALITY_WRAPPERS[modality]
    paraphrases = tuple(w.format(p) for w, p in zip(wrappers, bank))
    suffix = reasoning or ("container" if augmentation == "container_interaction" else None)
    template_id = f"{action}.{modality}" + (f".{suffix}" if suffix else "")
    return TaskTemplate(
        id=template_id,
        atomic_action=action,
        modality=modality,
        phrase=paraphrases[0],
        paraphrases=paraphrases,
        augmentation=augmentation,
        reasoning=reasoning,
    )


def build_templates() -> tuple[TaskTemplate, ...]:
    """The full bank: every action in every modality, plus augmentations."""
    templates: list[TaskTemplate] = []
    for modality in MODALITY_WRAPPERS:
        for action in ATOMIC_ACTIONS:
            templates.append(_template(action, modality, ACTION_PHRASES[action]))
        for reasoning in ("ordinal", "superlative", "color"):
            templates.append(
                _template("pick", modality, ACTION_PHRASES["pick"], "conditional_reasoning", reasoning)
            )
        templates.append(_template("pick", modality, CONTAINER_PHRASES, "container_interaction"))
    return tuple(templates)


TEMPLATES: tuple[TaskTemplate, ...] = build_templates()
_BY_ID = {t.id: t for t in TEMPLATES}


def template(template_id: str) -> TaskTemplate:
    try:
        return _BY_ID[template_id]
    except KeyError:
        raise KeyError(f"Unknown template: {template_id}") from None


def templates_for(modality: str) -> list[TaskTemplate]:
    return [t for t in TEMPLATES if t.modality == modality]
