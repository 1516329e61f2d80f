"""Closed instruction vocabulary and tokenizer."""

from __future__ import annotations

import functools
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..errors import DimensionError
from ..world import catalog
from . import templates

logger = logging.getLogger(__name__)

PAD = "<pad>"
BOS = "<bos>"
UNK = "<unk>"
SPECIAL_TOKENS = (PAD, BOS, UNK)
PAD_ID, BOS_ID, UNK_ID = 0, 1, 2

TOKEN_PATTERN = re.compile(r"[a-z0-9]+|[.,?!]")
_PUNCTUATION = frozenset(".,?!")


def tokenize(text: str) -> list[str]:
    """Lower-case word and punctuation tokens; everything else is dropped."""
    return TOKEN_PATTERN.findall(text.lower())


def join_words(words: Iterable[str]) -> str:
    out = ""
    for word in words:
        if not out:
            out = word
        elif word in _PUNCTUATION:
            out += word
        else:
            out += " " + word
    return out


def normalize(text: str) -> str:
    """Canonical spelling of ``text``: what ``detokenize`` gives back."""
    return join_words(tokenize(text))


@dataclass
class Vocabulary:
    words: tuple[str, ...]
    unknown_count: int = 0
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.words[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError("Vocabulary must start with PAD, BOS and UNK")
        self._index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: object) -> bool:
        return word in self._index

    def encode(self, text: str, max_tokens: int | None = None) -> list[int]:
        """BOS followed by word ids; unknown words become UNK and are counted.

        Raises:
            DimensionError: more than ``max_tokens`` ids.
        """
        ids = [BOS_ID]
        for word in tokenize(text):
            index = self._index.get(word)
            if index is None:
                self.unknown_count += 1
                logger.debug(f"Unknown instruction word: {word!r}")
                index = UNK_ID
            ids.append(index)
        if max_tokens is not None and len(ids) > max_tokens:
            raise DimensionError(
                f"Instruction {text!r} needs {len(ids)} tokens, more than the limit of {max_tokens}", layer="token_embed"
            )
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        words = [self.words[i] for i in ids if i not in (PAD_ID, BOS_ID)]
        return join_words(words)

    def pad(self, ids: Sequence[int], length: int) -> list[int]:
        if len(ids) > length:
            raise DimensionError(f"{len(ids)} token ids do not fit in {length}", layer="token_embed")
        return list(ids) + [PAD_ID] * (length - len(ids))


def _bank_words() -> set[str]:
    words: set[str] = set()
    texts: list[str] = []
    for t in templates.TEMPLATES:
        texts.extend(templates.SLOT_PATTERN.sub(" ", p) for p in t.paraphrases)
    texts.extend(templates.POSITION_WORDS)
    texts.extend(templates.ORDINALS)
    texts.extend(templates.SUPERLATIVES)
    texts.extend(templates.SURFACE_NAMES.values())
    for cues in templates.ROOM_SURFACE_CUES.values():
        texts.extend(cues.values())
    texts.extend(templates.CONTAINER_PREPOSITIONS.values())
    texts.extend(templates.FILLER_WORDS)
    texts.extend(catalog.CATEGORY_NAMES)
    texts.extend(catalog.COLORS)
    for text in texts:
        words.update(tokenize(text))
    return words


@functools.lru_cache(maxsize=1)
def default_vocabulary() -> Vocabulary:
    """Vocabulary covering every word the template bank can produce."""
    return Vocabulary(SPECIAL_TOKENS + tuple(sorted(_bank_words())))


def detokenize(ids: Sequence[int], vocabulary: Vocabulary | None = None) -> str:
    return (vocabulary or default_vocabulary()).decode(ids)
