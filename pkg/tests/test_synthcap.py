import numpy as np
import pytest

from avatarlab.attributes import AttributeVector
from avatarlab.synthcap import (
    EXP_NAMES,
    N_EXP,
    REGION_BOXES,
    apply_expression,
    build_dataset,
    build_identity,
    capture_identity,
    caption_of,
    in_green_band,
    load_dataset,
    region_mask,
    sample_attributes,
    write_dataset,
)
from avatarlab.uvmaps import MapError


def _region_slice(name, h=64, w=64):
    u0, u1, v0, v1 = REGION_BOXES[name]
    return slice(int(v0 * h), int(v1 * h)), slice(int(u0 * w), int(u1 * w))


def test_identity_maps_are_deterministic():
    attrs = sample_attributes(42)
    a = build_identity(attrs, seed=42)
    b = build_identity(attrs, seed=42)
    assert np.array_equal(a.g_neu, b.g_neu)
    assert np.array_equal(a.t_neu, b.t_neu)
    c = build_identity(attrs, seed=43)
    assert not np.array_equal(a.t_neu, c.t_neu)


def test_map_shapes_and_ranges():
    ident = build_identity(sample_attributes(1), seed=1)
    assert ident.g_neu.shape == (64, 64, 3)
    assert ident.t_neu.shape == (64, 64, 3)
    assert ident.t_neu.min() >= 0.0 and ident.t_neu.max() <= 1.0
    assert np.isfinite(ident.g_neu).all()


def test_region_boxes_lie_inside_the_unit_square():
    for name, (u0, u1, v0, v1) in REGION_BOXES.items():
        assert 0.0 <= u0 < u1 <= 1.0, name
        assert 0.0 <= v0 < v1 <= 1.0, name


def test_region_mask_is_binary_and_matches_its_box():
    m = region_mask("mouth", 64, 64)
    assert m.shape == (64, 64, 1)
    assert set(np.unique(m)) <= {0.0, 1.0}
    # texel (i, j) is inside iff its grid coordinate i/(n-1) is
    u = np.linspace(0.0, 1.0, 64)
    v = np.linspace(0.0, 1.0, 64)
    u0, u1, v0, v1 = REGION_BOXES["mouth"]
    expect = ((u[None, :] >= u0) & (u[None, :] <= u1)
              & (v[:, None] >= v0) & (v[:, None] <= v1))
    assert np.array_equal(m[..., 0] > 0, expect)
    with pytest.raises(MapError):
        region_mask("earlobe", 64, 64)


def test_green_band_predicate():
    assert in_green_band(np.array([0.16, 0.55, 0.22]))
    assert not in_green_band(np.array([0.5, 0.5, 0.5]))
    assert not in_green_band(np.array([0.0, 0.1, 0.0]))  # too dark
    assert not in_green_band(np.array([0.2, 0.25, 0.2]))  # not green enough


def test_green_hair_lands_in_the_green_band():
    attrs = sample_attributes(11)
    attrs = AttributeVector(**{**attrs.as_dict(), "hair_color": "green",
                               "headwear": False})
    ident = build_identity(attrs, seed=11)
    rows, cols = _region_slice("hair_core")
    mean = ident.t_neu[rows, cols].reshape(-1, 3).mean(axis=0)
    assert in_green_band(mean)


def test_skin_tone_orders_luminance():
    base = sample_attributes(5).as_dict()
    base.update({"age": "young", "facial_hair": "none", "glasses": False})
    lum = []
    for tone in ("porcelain", "golden", "ebony"):
        ident = build_identity(AttributeVector(**{**base, "skin_tone": tone}), seed=5)
        rows, cols = _region_slice("forehead")
        lum.append(float(ident.t_neu[rows, cols].mean()))
    assert lum[0] > lum[1] > lum[2]


def test_face_shape_moves_cheek_extent():
    base = sample_attributes(9).as_dict()
    widths = []
    for shape in ("narrow", "average", "wide"):
        ident = build_identity(AttributeVector(**{**base, "face_shape": shape}), seed=9)
        rows, cols = _region_slice("jaw")
        xs = ident.g_neu[rows, cols, 0]
        widths.append(float(xs.max() - xs.min()))
    assert widths[0] < widths[1] < widths[2]


def test_hairline_styles_separate_by_frequency():
    # wavy and curly hairlines oscillate at different spatial frequencies
    base = sample_attributes(21).as_dict()
    base.update({"headwear": False, "hair_color": "black", "age": "young"})
    profiles = {}
    for style in ("straight", "wavy", "curly"):
        ident = build_identity(AttributeVector(**{**base, "hair_style": style}), seed=21)
        t = ident.t_neu
        h = t.shape[0]
        cols = []
        for ui in range(8, 56):
            col = t[: int(0.42 * h), ui].mean(axis=-1)
            cols.append(float(np.argmin(np.abs(np.diff(col))) if col.size else 0))
        profiles[style] = np.asarray(cols)
    assert profiles["straight"].std() <= profiles["wavy"].std() + 1e-6


def test_apply_expression_zero_params_is_identity():
    ident = build_identity(sample_attributes(2), seed=2)
    frame = apply_expression(ident, np.zeros(N_EXP, np.float32))
    assert np.array_equal(frame.g_exp, ident.g_neu)
    assert np.array_equal(frame.t_exp, ident.t_neu)


def test_apply_expression_rejects_bad_params():
    ident = build_identity(sample_attributes(2), seed=2)
    with pytest.raises(MapError):
        apply_expression(ident, np.zeros(N_EXP - 1, np.float32))
    with pytest.raises(MapError):
        apply_expression(ident, np.full(N_EXP, 1.5, np.float32))


def test_expression_axes_move_their_regions():
    ident = build_identity(sample_attributes(3), seed=3)
    jaw = np.zeros(N_EXP, np.float32)
    jaw[EXP_NAMES.index("jaw")] = 0.9
    frame = apply_expression(ident, jaw)
    rows, cols = _region_slice("jaw")
    moved = np.abs(frame.g_exp - ident.g_neu).sum(axis=-1)
    brow_rows, brow_cols = _region_slice("brows")
    assert moved[rows, cols].mean() > moved[brow_rows, brow_cols].mean()


def test_multiview_has_four_frames_phone_has_one():
    _, frames_mv = capture_identity(sample_attributes(1), 1, source="multiview")
    _, frames_ph = capture_identity(sample_attributes(1), 1, source="phone")
    assert len(frames_mv) == 4
    assert len(frames_ph) == 1
    assert np.array_equal(frames_mv[0].g_exp, frames_ph[0].g_exp)


def test_caption_of_varies_by_template_seed_but_same_content():
    from avatarlab.prompts import parse

    attrs = sample_attributes(8)
    caps = {caption_of(attrs, seed=s) for s in range(6)}
    assert len(caps) > 1  # several surface templates
    parsed = [parse(c).slots for c in caps]
    assert all(p == parsed[0] for p in parsed)


def test_dataset_write_load_round_trip(tmp_path):
    sets = build_dataset(2, 1, seed=0)
    write_dataset(sets, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert len(back) == 3
    for orig, loaded in zip(sets, back):
        assert loaded.identity.attrs == orig.identity.attrs
        assert np.array_equal(loaded.identity.g_neu, orig.identity.g_neu)
        assert np.array_equal(loaded.identity.t_neu, orig.identity.t_neu)
        assert loaded.identity.caption == orig.identity.caption
        assert loaded.identity.source == orig.identity.source
        assert len(loaded.frames) == len(orig.frames)
        assert np.array_equal(loaded.frames[-1].t_exp, orig.frames[-1].t_exp)
