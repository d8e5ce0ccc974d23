import numpy as np
import pytest

from avatarlab.editing import (
    global_retexture,
    load_mask,
    local_edit,
    mask_to_png_bytes,
)
from avatarlab.synthcap import region_mask
from avatarlab.uvmaps import MapError


@pytest.fixture(scope="module")
def base_identity(tiny_caae, tiny_diffusion):
    from avatarlab.pipeline import generate_identity

    gm, gctm, embedder = tiny_diffusion
    return generate_identity(tiny_caae, gm, gctm, embedder,
                             "a young woman with red hair", seed=3, steps=4)


def test_global_retexture_changes_texture_only(tiny_caae, tiny_diffusion, base_identity):
    _, gctm, embedder = tiny_diffusion
    out = global_retexture(tiny_caae, gctm, embedder, base_identity.z_geo,
                           base_identity.z_tex, "ebony skin", seed=1, steps=4)
    assert np.array_equal(out.z_geo, base_identity.z_geo)
    assert np.array_equal(out.g_map, base_identity.g_map)
    assert not np.array_equal(out.t_map, base_identity.t_map)
    assert out.parsed_slots == {"skin_tone": "ebony"}
    assert out.changed


def test_unparseable_prompt_warns_and_uses_null_conditioning(
    tiny_caae, tiny_diffusion, base_identity
):
    _, gctm, embedder = tiny_diffusion
    with pytest.warns(UserWarning, match="null embedding"):
        out = global_retexture(tiny_caae, gctm, embedder, base_identity.z_geo,
                               base_identity.z_tex, "zorp blarg", seed=1, steps=4)
    assert out.parsed_slots == {}
    assert set(out.unrecognized) == {"zorp", "blarg"}


def test_local_texture_edit_is_bit_exact_outside_the_mask(
    tiny_caae, tiny_diffusion, base_identity
):
    gm, gctm, embedder = tiny_diffusion
    mask = region_mask("hair", 64, 64)
    out = local_edit(tiny_caae, gctm, embedder, base_identity.z_geo,
                     base_identity.z_tex, mask, "green hair", which="tex",
                     seed=2, steps=4)
    outside = mask[..., 0] == 0.0
    assert out.t_map[outside].tobytes() == base_identity.t_map[outside].tobytes()
    assert not np.array_equal(out.t_map[~outside], base_identity.t_map[~outside])
    assert np.array_equal(out.g_map, base_identity.g_map)  # texture edit
    assert out.changed


def test_local_geometry_edit_uses_the_geometry_model(
    tiny_caae, tiny_diffusion, base_identity
):
    gm, _, embedder = tiny_diffusion
    mask = region_mask("jaw", 64, 64)
    out = local_edit(tiny_caae, gm, embedder, base_identity.z_geo,
                     base_identity.z_tex, mask, "wide face", which="geo",
                     seed=2, steps=4)
    outside = mask[..., 0] == 0.0
    assert out.g_map[outside].tobytes() == base_identity.g_map[outside].tobytes()
    assert np.array_equal(out.t_map, base_identity.t_map)
    assert out.changed


def test_empty_mask_is_the_identity_edit(tiny_caae, tiny_diffusion, base_identity):
    _, gctm, embedder = tiny_diffusion
    empty = np.zeros((64, 64, 1), np.float32)
    out = local_edit(tiny_caae, gctm, embedder, base_identity.z_geo,
                     base_identity.z_tex, empty, "green hair", which="tex",
                     seed=2, steps=4)
    assert not out.changed
    assert np.array_equal(out.z_tex, base_identity.z_tex)
    assert np.array_equal(out.t_map, base_identity.t_map)


def test_model_kind_must_match_edit_channel(tiny_caae, tiny_diffusion, base_identity):
    gm, gctm, embedder = tiny_diffusion
    mask = region_mask("hair", 64, 64)
    with pytest.raises(MapError):
        local_edit(tiny_caae, gm, embedder, base_identity.z_geo,
                   base_identity.z_tex, mask, "green hair", which="tex",
                   seed=0, steps=4)
    with pytest.raises(MapError):
        local_edit(tiny_caae, gctm, embedder, base_identity.z_geo,
                   base_identity.z_tex, mask, "wide face", which="geo",
                   seed=0, steps=4)


def test_mask_png_round_trip_is_exact():
    rng = np.random.default_rng(0)
    mask = (rng.uniform(size=(64, 64, 1)) > 0.6).astype(np.float32)
    blob = mask_to_png_bytes(mask)
    back = load_mask(blob)
    assert np.array_equal(back, mask)


def test_load_mask_validates_shape_and_range(tmp_path):
    with pytest.raises(MapError):
        load_mask(np.full((8, 8, 1), 2.0, np.float32))
    with pytest.raises(MapError):
        load_mask(np.zeros((8, 8, 4), np.float32))
    # uvt path round trip
    from avatarlab.tensorio import write_uvt

    m = np.zeros((16, 16, 1), np.float32)
    m[2:5, 3:9] = 1.0
    write_uvt(tmp_path / "m.uvt", m)
    assert np.array_equal(load_mask(str(tmp_path / "m.uvt")), m)


def test_edit_determinism(tiny_caae, tiny_diffusion, base_identity):
    _, gctm, embedder = tiny_diffusion
    mask = region_mask("mouth", 64, 64)
    a = local_edit(tiny_caae, gctm, embedder, base_identity.z_geo,
                   base_identity.z_tex, mask, "full lips", which="tex",
                   seed=5, steps=4)
    b = local_edit(tiny_caae, gctm, embedder, base_identity.z_geo,
                   base_identity.z_tex, mask, "full lips", which="tex",
                   seed=5, steps=4)
    assert np.array_equal(a.t_map, b.t_map)
