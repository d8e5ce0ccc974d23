import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avatarlab.tensorio import (
    ContainerError,
    config_hash,
    load_state_dict,
    read_uvt,
    save_state_dict,
    state_sha,
    write_uvt,
)


def test_uvt_round_trip_bit_exact(tmp_path):
    arr = np.random.default_rng(0).normal(size=(17, 9, 3)).astype(np.float32)
    arr[0, 0, 0] = -0.0
    arr[1, 2, 1] = np.float32(1e-38)
    path = tmp_path / "m.uvt"
    write_uvt(path, arr)
    back = read_uvt(path)
    assert back.dtype == np.float32
    assert back.shape == arr.shape
    assert arr.tobytes() == back.tobytes()  # including -0.0 sign bits


@settings(max_examples=25, deadline=None)
@given(
    arrays(
        np.float32,
        st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 4)),
        elements=st.floats(-1e6, 1e6, width=32),
    )
)
def test_uvt_round_trip_property(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("uvt") / "x.uvt"
    write_uvt(path, arr)
    assert np.array_equal(read_uvt(path), arr)


def test_uvt_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.uvt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ContainerError):
        read_uvt(path)


def test_uvt_rejects_truncated(tmp_path):
    path = tmp_path / "trunc.uvt"
    write_uvt(path, np.zeros((4, 4, 3), np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 7])
    with pytest.raises(ContainerError):
        read_uvt(path)


def test_config_hash_is_key_order_invariant():
    a = {"x": 1, "y": {"b": 2, "a": [1, 2]}}
    b = {"y": {"a": [1, 2], "b": 2}, "x": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({"x": 1, "y": {"b": 2, "a": [2, 1]}})


def test_state_sha_depends_on_values_not_insertion_order():
    w1 = np.arange(6, dtype=np.float32).reshape(2, 3)
    w2 = np.ones(4, np.float32)
    assert state_sha({"a": w1, "b": w2}) == state_sha({"b": w2, "a": w1})
    assert state_sha({"a": w1, "b": w2}) != state_sha({"a": w1 + 1, "b": w2})


def test_state_dict_round_trip(tmp_path):
    state = {
        "enc.weight": np.random.default_rng(1).normal(size=(5, 5)).astype(np.float32),
        "enc.bias": np.zeros(5, np.float32),
    }
    meta = {"kind": "caae", "epochs": 3}
    save_state_dict(tmp_path / "ck", state, meta)
    state2, meta2 = load_state_dict(tmp_path / "ck")
    assert set(state2) == set(state)
    for name in state:
        assert np.array_equal(state[name], state2[name])
    assert meta2["kind"] == "caae" and meta2["epochs"] == 3
