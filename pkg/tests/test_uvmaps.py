import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avatarlab.uvmaps import (
    MapError,
    blend_masked,
    box_resample,
    displacement_from_position,
    lerp,
    normal_from_position,
    require_finite,
    require_shape,
)


def test_require_finite_rejects_nan_and_inf():
    with pytest.raises(MapError):
        require_finite(np.array([1.0, np.nan], np.float32))
    with pytest.raises(MapError):
        require_finite(np.array([np.inf], np.float32))
    arr = np.ones((2, 2, 3), np.float32)
    assert require_finite(arr) is arr


def test_require_shape_enforces_channel_count():
    require_shape(np.zeros((4, 4, 3), np.float32), 3)
    with pytest.raises(MapError):
        require_shape(np.zeros((4, 4, 4), np.float32), 3)
    with pytest.raises(MapError):
        require_shape(np.zeros((4, 4), np.float32), 3)


def test_box_resample_averages_exact_blocks():
    arr = np.arange(16, dtype=np.float32).reshape(4, 4, 1)
    out = box_resample(arr, 2, 2)
    # each output texel is the mean of its 2x2 block
    expect = np.array([[2.5, 4.5], [10.5, 12.5]], np.float32).reshape(2, 2, 1)
    assert np.allclose(out, expect)


def test_box_resample_preserves_constant_fields():
    arr = np.full((64, 64, 3), 0.37, np.float32)
    for h, w in [(16, 16), (8, 8), (64, 64)]:
        out = box_resample(arr, h, w)
        assert out.shape == (h, w, 3)
        assert np.allclose(out, 0.37, atol=1e-6)


def test_box_resample_rejects_non_integer_factors():
    arr = np.zeros((64, 64, 1), np.float32)
    with pytest.raises(MapError):
        box_resample(arr, 7, 5)


def test_box_resample_conserves_mean():
    rng = np.random.default_rng(3)
    arr = rng.uniform(size=(32, 32, 2)).astype(np.float32)
    out = box_resample(arr, 8, 8)
    assert abs(float(arr.mean()) - float(out.mean())) < 1e-6


def test_lerp_endpoints_are_exact():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 16, 16)).astype(np.float32)
    b = rng.normal(size=(4, 16, 16)).astype(np.float32)
    assert np.array_equal(lerp(a, b, 0.0), a)
    assert np.array_equal(lerp(a, b, 1.0), b)
    mid = lerp(a, b, 0.5)
    assert np.allclose(mid, (a + b) / 2, atol=1e-6)


def test_blend_masked_zero_mask_region_is_bit_identical():
    rng = np.random.default_rng(2)
    src = rng.uniform(-1, 1, size=(16, 16, 3)).astype(np.float32)
    src[0, 0] = -0.0  # sign bit must survive the blend
    gen = rng.uniform(-1, 1, size=(16, 16, 3)).astype(np.float32)
    mask = np.zeros((16, 16, 1), np.float32)
    mask[4:9, 3:7] = 1.0
    out = blend_masked(src, gen, mask)
    outside = mask[..., 0] == 0.0
    assert out[outside].tobytes() == src[outside].tobytes()
    assert np.array_equal(out[~outside], gen[~outside])


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float32, (8, 8, 3), elements=st.floats(-2, 2, width=32)),
    arrays(np.float32, (8, 8, 3), elements=st.floats(-2, 2, width=32)),
    arrays(np.float32, (8, 8, 1), elements=st.sampled_from([0.0, 0.25, 0.5, 1.0])),
)
def test_blend_masked_convexity_property(src, gen, mask):
    out = blend_masked(src, gen, mask)
    zero = np.broadcast_to(mask == 0.0, src.shape)
    assert out[zero].tobytes() == src[zero].tobytes()
    lo = np.minimum(src, gen) - 1e-5
    hi = np.maximum(src, gen) + 1e-5
    assert ((out >= lo) & (out <= hi)).all()


def test_blend_masked_validates_mask_range():
    src = np.zeros((4, 4, 3), np.float32)
    bad = np.full((4, 4, 1), 1.5, np.float32)
    with pytest.raises(MapError):
        blend_masked(src, src, bad)
    with pytest.raises(MapError):
        blend_masked(src, src, np.zeros((5, 4, 1), np.float32))


def test_normals_of_a_flat_plane_point_along_z():
    h = w = 9
    u, v = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h))
    pos = np.stack([u, v, np.zeros_like(u)], axis=-1).astype(np.float32)
    normals, flipped = normal_from_position(pos)
    assert normals.shape == (h, w, 3)
    assert np.allclose(np.abs(normals[..., 2]), 1.0, atol=1e-5)
    assert np.allclose(np.linalg.norm(normals, axis=-1), 1.0, atol=1e-5)


def test_normals_are_unit_length_on_curved_surfaces():
    h = w = 16
    u, v = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h))
    z = 0.2 * np.sin(4 * u) * np.cos(3 * v)
    pos = np.stack([u, v, z], axis=-1).astype(np.float32)
    normals, _ = normal_from_position(pos)
    assert np.allclose(np.linalg.norm(normals, axis=-1), 1.0, atol=1e-4)


def test_displacement_of_reference_surface_is_zero():
    rng = np.random.default_rng(4)
    pos = rng.normal(size=(12, 12, 3)).astype(np.float32)
    normals, _ = normal_from_position(pos)
    disp = displacement_from_position(pos, pos, normals)
    assert disp.shape == (12, 12, 1)
    assert np.allclose(disp, 0.0, atol=1e-6)


def test_displacement_measures_offset_along_reference_normal():
    h = w = 9
    u, v = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h))
    ref = np.stack([u, v, np.zeros_like(u)], axis=-1).astype(np.float32)
    normals, _ = normal_from_position(ref)
    lifted = (ref + 0.05 * normals).astype(np.float32)
    disp = displacement_from_position(lifted, ref, normals)
    assert np.allclose(np.abs(disp), 0.05, atol=1e-4)
