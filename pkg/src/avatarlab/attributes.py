"""Closed attribute schema shared by the capture generator, the prompt
grammar and the evaluation probe."""

from __future__ import annotations

from dataclasses import dataclass, fields

# Slot name -> canonical value tuple, in canonical order. Booleans are the
# two-value slots; everything else is categorical/ordinal over strings.
SLOTS: dict[str, tuple] = {
    "age": ("child", "young", "middle-aged", "elderly"),
    "gender": ("man", "woman"),
    "skin_tone": ("porcelain", "fair", "golden", "tan", "brown", "ebony"),
    "hair_color": ("black", "brown", "blonde", "red", "gray", "green"),
    "hair_style": ("straight", "wavy", "curly", "cropped"),
    "eye_color": ("brown", "blue", "green", "gray"),
    "face_shape": ("narrow", "average", "wide"),
    "facial_hair": ("none", "mustache", "goatee", "full-beard"),
    "nose_size": ("small", "medium", "large"),
    "lip_size": ("thin", "medium", "full"),
    "glasses": (False, True),
    "headwear": (False, True),
}

SLOT_NAMES = tuple(SLOTS)


class UnknownAttributeError(ValueError):
    """Raised when a slot holds a value outside its closed vocabulary."""


@dataclass(frozen=True)
class AttributeVector:
    """A total assignment: every slot holds a value from its vocabulary."""

    age: str
    gender: str
    skin_tone: str
    hair_color: str
    hair_style: str
    eye_color: str
    face_shape: str
    facial_hair: str
    nose_size: str
    lip_size: str
    glasses: bool
    headwear: bool

    def __post_init__(self):
        for slot in SLOT_NAMES:
            value = getattr(self, slot)
            if value not in SLOTS[slot]:
                raise UnknownAttributeError(f"slot {slot!r}: unknown value {value!r}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, mapping: dict) -> "AttributeVector":
        missing = [s for s in SLOT_NAMES if s not in mapping]
        if missing:
            raise UnknownAttributeError(f"missing slots: {missing}")
        return cls(**{s: mapping[s] for s in SLOT_NAMES})

    def value_index(self, slot: str) -> int:
        return SLOTS[slot].index(getattr(self, slot))
