import pytest

from avatarlab.attributes import SLOT_NAMES, SLOTS, AttributeVector, UnknownAttributeError
from avatarlab.synthcap import sample_attributes


def test_slot_schema_is_closed_and_ordered():
    assert SLOT_NAMES == tuple(SLOTS)
    assert SLOTS["gender"] == ("man", "woman")
    assert SLOTS["glasses"] == (False, True)
    assert len(SLOTS) == 12


def test_vector_rejects_out_of_vocabulary_values():
    attrs = sample_attributes(0)
    with pytest.raises(UnknownAttributeError):
        AttributeVector(**{**attrs.as_dict(), "hair_color": "chartreuse"})
    with pytest.raises(UnknownAttributeError):
        AttributeVector(**{**attrs.as_dict(), "glasses": "yes"})


def test_dict_round_trip():
    attrs = sample_attributes(3)
    assert AttributeVector.from_dict(attrs.as_dict()) == attrs


def test_value_index_matches_schema_order():
    attrs = sample_attributes(5)
    for slot in SLOT_NAMES:
        assert SLOTS[slot][attrs.value_index(slot)] == getattr(attrs, slot)


def test_sampling_is_deterministic_and_covers_every_value():
    assert sample_attributes(123) == sample_attributes(123)
    seen = {slot: set() for slot in SLOT_NAMES}
    for seed in range(400):
        attrs = sample_attributes(seed)
        for slot in SLOT_NAMES:
            seen[slot].add(getattr(attrs, slot))
    for slot in SLOT_NAMES:
        assert seen[slot] == set(SLOTS[slot]), f"{slot} never sampled some values"


def test_children_never_have_facial_hair():
    for seed in range(300):
        attrs = sample_attributes(seed)
        if attrs.age == "child":
            assert attrs.facial_hair == "none"
