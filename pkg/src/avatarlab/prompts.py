"""Controlled prompt grammar: phrase vocabulary, parser, caption templates
and the learned per-slot prompt embedder.

The vocabulary is phrase-based ("green hair" and "green eyes" are distinct
entries, so color words never collide across slots). Parsing is total:
unknown tokens are collected, never fatal, and a later mention of a slot
overrides an earlier one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .attributes import SLOTS, SLOT_NAMES, AttributeVector

VOCAB_VERSION = 1

# Words templates may use that carry no attribute content.
STOPWORDS = frozenset(
    "a an the with and has have having is this that person their his her"
    " of portrait avatar 3d render rendering headshot face picture photo".split()
)

# (slot, value) -> caption phrase. Phrases are matched on token tuples,
# longest first; every phrase maps to exactly one slot.
_PHRASES: dict[tuple[str, object], str] = {}


def _add(slot, value, phrase):
    _PHRASES[(slot, value)] = phrase


for _v in SLOTS["age"]:
    _add("age", _v, {"child": "child-aged"}.get(_v, _v))
_add("gender", "man", "man")
_add("gender", "woman", "woman")
for _v in SLOTS["skin_tone"]:
    _add("skin_tone", _v, f"{_v} skin")
for _v in SLOTS["hair_color"]:
    _add("hair_color", _v, f"{_v} hair")
for _v in SLOTS["hair_style"]:
    _add("hair_style", _v, _v)
for _v in SLOTS["eye_color"]:
    _add("eye_color", _v, f"{_v} eyes")
for _v in SLOTS["face_shape"]:
    _add("face_shape", _v, f"{_v} face")
_add("facial_hair", "none", "clean-shaven")
_add("facial_hair", "mustache", "mustache")
_add("facial_hair", "goatee", "goatee")
_add("facial_hair", "full-beard", "full beard")
for _v in SLOTS["nose_size"]:
    _add("nose_size", _v, f"{_v} nose")
for _v in SLOTS["lip_size"]:
    _add("lip_size", _v, f"{_v} lips")
_add("glasses", True, "wearing glasses")
_add("glasses", False, "without glasses")
_add("headwear", True, "wearing a hat")
_add("headwear", False, "bareheaded")

# Extra surface forms accepted by the parser.
_SYNONYMS: dict[str, tuple[str, object]] = {
    "male": ("gender", "man"),
    "gentleman": ("gender", "man"),
    "female": ("gender", "woman"),
    "lady": ("gender", "woman"),
    "kid": ("age", "child"),
    "old": ("age", "elderly"),
    "spectacles": ("glasses", True),
    "bespectacled": ("glasses", True),
    "hat": ("headwear", True),
    "cap": ("headwear", True),
    "beard": ("facial_hair", "full-beard"),
    "blond hair": ("hair_color", "blonde"),
    "grey hair": ("hair_color", "gray"),
    "grey eyes": ("eye_color", "gray"),
}


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


class Vocabulary:
    """Phrase -> (slot, value) table with the no-double-mapping invariant."""

    def __init__(self):
        self.entries: dict[tuple[str, ...], tuple[str, object]] = {}
        for (slot, value), phrase in _PHRASES.items():
            self._insert(phrase, slot, value)
        for phrase, (slot, value) in _SYNONYMS.items():
            self._insert(phrase, slot, value)
        self.max_len = max(len(k) for k in self.entries)

    def _insert(self, phrase: str, slot: str, value):
        key = tuple(_tokens(phrase))
        if key in self.entries and self.entries[key][0] != slot:
            raise ValueError(f"phrase {phrase!r} would map to two slots")
        self.entries[key] = (slot, value)

    def phrase(self, slot: str, value) -> str:
        return _PHRASES[(slot, value)]

    def to_file(self, path) -> None:
        lines = [f"# prompt vocabulary v{VOCAB_VERSION}"]
        for key, (slot, value) in sorted(self.entries.items()):
            lines.append(f"{' '.join(key)}\t{slot}\t{value}")
        Path(path).write_text("\n".join(lines) + "\n")


VOCAB = Vocabulary()


@dataclass
class ParsedAttributes:
    """Partial attribute assignment plus whatever the parser did not know."""

    slots: dict = field(default_factory=dict)
    unrecognized: list = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.slots

    def to_vector(self) -> AttributeVector:
        return AttributeVector.from_dict(self.slots)

    @classmethod
    def from_vector(cls, attrs: AttributeVector) -> "ParsedAttributes":
        return cls(slots=attrs.as_dict())


def parse(text: str) -> ParsedAttributes:
    """Total, case-insensitive phrase matching; later mentions override."""
    toks = _tokens(text)
    out = ParsedAttributes()
    i = 0
    while i < len(toks):
        matched = False
        for length in range(min(VOCAB.max_len, len(toks) - i), 0, -1):
            key = tuple(toks[i : i + length])
            if key in VOCAB.entries:
                slot, value = VOCAB.entries[key]
                out.slots[slot] = value
                i += length
                matched = True
                break
        if matched:
            continue
        if toks[i] not in STOPWORDS:
            out.unrecognized.append(toks[i])
        i += 1
    return out


def _article(word: str) -> str:
    return "an" if word[0] in "aeiou" else "a"


def _fh_phrase(value: str) -> str:
    if value == "none":
        return "clean-shaven"
    noun = VOCAB.phrase("facial_hair", value)
    return f"{_article(noun)} {noun}"


def render_caption(attrs: AttributeVector, template: int) -> str:
    """Deterministic sentence for a full attribute vector."""
    p = {slot: VOCAB.phrase(slot, getattr(attrs, slot)) for slot in SLOT_NAMES}
    age, gender = p["age"], p["gender"]
    hair = f"{p['hair_style']} {p['hair_color']}"
    fh = _fh_phrase(attrs.facial_hair)
    if template % 3 == 0:
        return (
            f"{_article(age)} {age} {gender} with {p['skin_tone']}, {hair}, "
            f"{p['eye_color']}, {_article(attrs.face_shape)} {p['face_shape']}, "
            f"{_article(attrs.nose_size)} {p['nose_size']}, {p['lip_size']}, "
            f"{fh}, {p['glasses']}, {p['headwear']}"
        )
    if template % 3 == 1:
        return (
            f"this {age} {gender} has {p['eye_color']}, {hair}, "
            f"{_article(attrs.nose_size)} {p['nose_size']}, {p['lip_size']}, "
            f"{p['skin_tone']}, {_article(attrs.face_shape)} {p['face_shape']}, "
            f"{fh}, {p['glasses']}, {p['headwear']}"
        )
    return (
        f"{p['glasses']} and {p['headwear']}: {_article(age)} {age} {gender}, "
        f"{p['skin_tone']}, {_article(attrs.face_shape)} {p['face_shape']}, "
        f"{hair}, {p['eye_color']}, {_article(attrs.nose_size)} {p['nose_size']}, "
        f"{p['lip_size']}, {fh}"
    )


# --- prompt embedding ----------------------------------------------------

# Per-slot embedding widths; they sum to the fixed prompt dimension.
SLOT_DIMS = {
    "age": 6, "gender": 4, "skin_tone": 6, "hair_color": 6, "hair_style": 6,
    "eye_color": 6, "face_shape": 6, "facial_hair": 6, "nose_size": 6,
    "lip_size": 6, "glasses": 3, "headwear": 3,
}
PROMPT_DIM = sum(SLOT_DIMS.values())


class PromptEmbedder(nn.Module):
    """Concatenated per-slot lookup tables with a learned "unspecified" row.

    The all-unset embedding doubles as the null conditioning vector for
    classifier-free guidance.
    """

    def __init__(self, seed: int = 0, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        self.tables = nn.ParameterDict()
        for slot in SLOT_NAMES:
            rows = len(SLOTS[slot]) + 1  # final row = unspecified
            init = torch.randn(rows, SLOT_DIMS[slot], generator=gen, dtype=dtype) * 0.5
            self.tables[slot] = nn.Parameter(init)

    def row_indices(self, parsed: ParsedAttributes | None) -> list[int]:
        idx = []
        slots = {} if parsed is None else parsed.slots
        for slot in SLOT_NAMES:
            if slot in slots:
                idx.append(SLOTS[slot].index(slots[slot]))
            else:
                idx.append(len(SLOTS[slot]))
        return idx

    def forward(self, parsed: ParsedAttributes | None) -> torch.Tensor:
        return self.embed_batch([parsed])[0]

    def embed_batch(self, parsed_list) -> torch.Tensor:
        rows = torch.as_tensor(
            [self.row_indices(p) for p in parsed_list], dtype=torch.long
        )
        parts = [self.tables[slot][rows[:, j]] for j, slot in enumerate(SLOT_NAMES)]
        return torch.cat(parts, dim=1)

    def null_embedding(self) -> np.ndarray:
        """Embedding of the all-unspecified parse; the guidance null vector."""
        return embed(None, self)


def embed(parsed: ParsedAttributes | None, embedder: PromptEmbedder) -> np.ndarray:
    """Deterministic fixed-width embedding of a (possibly partial) parse."""
    with torch.no_grad():
        return embedder(parsed).cpu().numpy().astype(np.float32)


def embed_text(text: str, embedder: PromptEmbedder) -> np.ndarray:
    return embed(parse(text), embedder)
