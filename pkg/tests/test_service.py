"""HTTP surface, exercised in-process against tiny checkpoints."""

import base64
import dataclasses
import io
from concurrent.futures import ThreadPoolExecutor
from types import SimpleNamespace

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from avatarlab.autoencoder import save_caae
from avatarlab.config import CAAEConfig, DiffusionConfig, PipelineConfig
from avatarlab.diffusion import diffusion_meta, save_denoiser
from avatarlab.service import create_app, load_runtime
from avatarlab.tensorio import state_sha, write_uvt

PROMPT = "a young woman with red hair and green eyes"


def _mask_png_b64(value: float) -> str:
    arr = np.full((64, 64), int(round(value * 255)), np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


@pytest.fixture(scope="module")
def svc(tmp_path_factory, tiny_caae, tiny_diffusion):
    """Running app plus its runtime and on-disk layout."""
    root = tmp_path_factory.mktemp("svc")
    ckpt = root / "ckpts"
    gm, gctm, embedder = tiny_diffusion
    caae_hash = state_sha(tiny_caae.state_dict())
    dcfg = DiffusionConfig(steps=40, batch_size=8, lr=3e-4, sample_steps=4)
    save_caae(tiny_caae, CAAEConfig(epochs=2), [], ckpt / "caae")
    save_denoiser(
        gm,
        diffusion_meta("gm", dcfg, [0.0], caae_hash, extra={"embedder_seed": embedder.seed}),
        ckpt / "gm",
    )
    save_denoiser(
        gctm,
        diffusion_meta(
            "gctm", dcfg, [0.0], caae_hash,
            extra={"cond_mode": dcfg.cond_mode, "embedder_seed": embedder.seed},
        ),
        ckpt / "gctm",
    )
    cfg = PipelineConfig()
    cfg = dataclasses.replace(
        cfg,
        gm=dcfg,
        gctm=dcfg,
        service=dataclasses.replace(
            cfg.service, ckpt_dir=str(ckpt), store_dir=str(root / "store")
        ),
    )
    rt = load_runtime(cfg)
    client = TestClient(create_app(rt))
    return SimpleNamespace(client=client, rt=rt, cfg=cfg, root=root)


@pytest.fixture(scope="module")
def seeded_avatar(svc):
    r = svc.client.post("/generate", json={"prompt": PROMPT, "seed": 5, "steps": 4})
    assert r.status_code == 200, r.text
    return r.json()


# ---------------------------------------------------------------------------
# health and degraded mode


def test_health_reports_ready(svc):
    doc = svc.client.get("/health").json()
    assert doc["ready"] is True
    assert doc["models"] == {"caae": True, "gm": True, "gctm": True}
    assert doc["checkpoint"] != "none"


def test_missing_checkpoints_yield_503(tmp_path):
    cfg = PipelineConfig()
    cfg = dataclasses.replace(
        cfg,
        service=dataclasses.replace(
            cfg.service, ckpt_dir=str(tmp_path / "none"), store_dir=str(tmp_path / "store")
        ),
    )
    client = TestClient(create_app(load_runtime(cfg)))
    assert client.get("/health").json()["ready"] is False
    r = client.post("/generate", json={"prompt": "x"})
    assert r.status_code == 503
    assert "checkpoints missing" in r.json()["detail"]
    assert client.post("/render", json={"avatar_id": "abc"}).status_code == 503


# ---------------------------------------------------------------------------
# generate


def test_generate_parses_and_dedups(svc, seeded_avatar):
    assert len(seeded_avatar["avatar_id"]) == 16
    assert seeded_avatar["attrs_parsed"]["hair_color"] == "red"
    assert seeded_avatar["attrs_parsed"]["eye_color"] == "green"
    assert seeded_avatar["unrecognized_tokens"] == []
    again = svc.client.post("/generate", json={"prompt": PROMPT, "seed": 5, "steps": 4})
    assert again.json()["avatar_id"] == seeded_avatar["avatar_id"]


def test_generate_seed_changes_identity(svc, seeded_avatar):
    other = svc.client.post("/generate", json={"prompt": PROMPT, "seed": 6, "steps": 4})
    assert other.json()["avatar_id"] != seeded_avatar["avatar_id"]


@pytest.mark.parametrize(
    "body",
    [
        {"prompt": 7},
        {"prompt": "x", "seed": -1},
        {"prompt": "x", "seed": True},
        {"prompt": "x", "steps": 0},
        {"prompt": "x", "guidance": 99.0},
    ],
)
def test_generate_rejects_bad_fields(svc, body):
    assert svc.client.post("/generate", json=body).status_code == 400


def test_malformed_body_is_a_clean_400(svc):
    r = svc.client.post("/generate", content=b"not json{", headers={"content-type": "application/json"})
    assert r.status_code == 400
    assert "malformed" in r.json()["detail"]


# ---------------------------------------------------------------------------
# render


def test_render_returns_stable_png(svc, seeded_avatar):
    body = {"avatar_id": seeded_avatar["avatar_id"]}
    r1 = svc.client.post("/render", json=body)
    assert r1.status_code == 200
    assert r1.headers["content-type"] == "image/png"
    assert r1.headers["X-Avatar-Id"] == seeded_avatar["avatar_id"]
    assert r1.headers["X-Expression"] == "neutral"
    assert r1.content[:8] == b"\x89PNG\r\n\x1a\n"
    r2 = svc.client.post("/render", json=body)
    assert r2.content == r1.content


def test_render_presets_and_custom_exp(svc, seeded_avatar):
    base = {"avatar_id": seeded_avatar["avatar_id"]}
    neutral = svc.client.post("/render", json=base).content
    smile = svc.client.post("/render", json={**base, "exp": "smile"})
    assert smile.headers["X-Expression"] == "smile"
    assert smile.content != neutral
    custom = svc.client.post("/render", json={**base, "exp": [0.5] + [0.0] * 15})
    assert custom.headers["X-Expression"] == "custom"
    assert custom.status_code == 200


def test_render_camera_controls(svc, seeded_avatar):
    base = {"avatar_id": seeded_avatar["avatar_id"]}
    front = svc.client.post("/render", json=base).content
    side = svc.client.post(
        "/render", json={**base, "camera": {"yaw": 35.0, "size": [96, 96]}}
    )
    assert side.status_code == 200
    assert Image.open(io.BytesIO(side.content)).size == (96, 96)
    assert side.content != front


@pytest.mark.parametrize(
    "body",
    [
        {"exp": "grimace"},
        {"exp": [0.5] * 15},
        {"exp": [26.0] * 16},
        {"camera": {"size": [8, 8]}},
        {"camera": {"distance": 0.1}},
        {"camera": "front"},
    ],
)
def test_render_rejects_bad_requests(svc, seeded_avatar, body):
    r = svc.client.post("/render", json={"avatar_id": seeded_avatar["avatar_id"], **body})
    assert r.status_code == 400


def test_render_unknown_avatar_404(svc):
    r = svc.client.post("/render", json={"avatar_id": "f" * 16})
    assert r.status_code == 404


def test_concurrent_renders_are_byte_identical(svc, seeded_avatar):
    body = {"avatar_id": seeded_avatar["avatar_id"], "exp": "jaw-open"}
    with ThreadPoolExecutor(max_workers=8) as pool:
        blobs = list(pool.map(lambda _: svc.client.post("/render", json=body).content, range(8)))
    assert all(b == blobs[0] for b in blobs)


# ---------------------------------------------------------------------------
# edit


def test_global_edit_appends_with_provenance(svc, seeded_avatar):
    r = svc.client.post(
        "/edit",
        json={"avatar_id": seeded_avatar["avatar_id"], "prompt": "ebony skin",
              "which": "global", "seed": 2, "steps": 4},
    )
    doc = r.json()
    assert r.status_code == 200, r.text
    assert doc["changed"] is True
    assert doc["avatar_id"] != seeded_avatar["avatar_id"]
    info = svc.client.get(f"/avatar/{doc['avatar_id']}").json()
    assert info["provenance"]["kind"] == "edit"
    assert info["roots"] == [seeded_avatar["avatar_id"]]
    assert [c["avatar_id"] for c in info["chain"]][-1] == seeded_avatar["avatar_id"]


def test_local_edit_touches_only_the_mask(svc, seeded_avatar):
    r = svc.client.post(
        "/edit",
        json={"avatar_id": seeded_avatar["avatar_id"], "prompt": "green hair",
              "which": "tex", "mask_region": "hair_core", "seed": 3, "steps": 4},
    )
    doc = r.json()
    assert r.status_code == 200, r.text
    assert doc["changed"] is True
    src = svc.rt.store.get(seeded_avatar["avatar_id"])
    new = svc.rt.store.get(doc["avatar_id"])
    assert new.mask is not None
    outside = new.mask[..., 0] == 0
    assert np.array_equal(new.t_map[outside], src.t_map[outside])
    assert np.array_equal(new.g_map, src.g_map)


def test_empty_mask_dedups_to_source(svc, seeded_avatar):
    r = svc.client.post(
        "/edit",
        json={"avatar_id": seeded_avatar["avatar_id"], "prompt": "green hair",
              "which": "tex", "mask_png_b64": _mask_png_b64(0.0), "steps": 4},
    )
    doc = r.json()
    assert doc["changed"] is False
    assert doc["avatar_id"] == seeded_avatar["avatar_id"]


def test_painted_mask_round_trips(svc, seeded_avatar):
    r = svc.client.post(
        "/edit",
        json={"avatar_id": seeded_avatar["avatar_id"], "prompt": "green hair",
              "which": "tex", "mask_png_b64": _mask_png_b64(1.0), "seed": 1, "steps": 4},
    )
    assert r.status_code == 200, r.text
    assert r.json()["changed"] is True


@pytest.mark.parametrize(
    "body",
    [
        {"which": "tex"},  # no mask at all
        {"which": "tex", "mask_region": "hair_core", "mask_png_b64": "aa=="},
        {"which": "tex", "mask_region": "earlobe"},
        {"which": "tex", "mask_png_b64": "!!notbase64!!"},
        {"which": "sideways", "mask_region": "hair_core"},
    ],
)
def test_edit_rejects_bad_requests(svc, seeded_avatar, body):
    r = svc.client.post(
        "/edit",
        json={"avatar_id": seeded_avatar["avatar_id"], "prompt": "green hair", **body},
    )
    assert r.status_code == 400


# ---------------------------------------------------------------------------
# invert and interpolate


def test_invert_multipart_round_trip(svc, tmp_path, tiny_sets):
    ident = tiny_sets[0].identity
    paths = {}
    for name, arr in (("t_neu", ident.t_neu), ("g_neu", ident.g_neu)):
        p = tmp_path / f"{name}.uvt"
        write_uvt(p, arr)
        paths[name] = p
    with open(paths["t_neu"], "rb") as ft, open(paths["g_neu"], "rb") as fg:
        r = svc.client.post(
            "/invert",
            files={"t_neu": ("t.uvt", ft), "g_neu": ("g.uvt", fg)},
            data={"steps": "10", "seed": "0"},
        )
    doc = r.json()
    assert r.status_code == 200, r.text
    assert np.isfinite(doc["final_loss"])
    info = svc.client.get(f"/avatar/{doc['avatar_id']}").json()
    assert info["provenance"]["kind"] == "inversion"


def test_invert_rejects_garbage_maps(svc):
    r = svc.client.post(
        "/invert",
        files={"t_neu": ("t.uvt", b"garbage"), "g_neu": ("g.uvt", b"garbage")},
        data={"steps": "5"},
    )
    assert r.status_code == 400


def test_interpolate_endpoints_dedup(svc, seeded_avatar):
    other = svc.client.post(
        "/generate", json={"prompt": "an old man with a grey beard", "seed": 9, "steps": 4}
    ).json()
    a, b = seeded_avatar["avatar_id"], other["avatar_id"]
    at0 = svc.client.get("/interpolate", params={"id_a": a, "id_b": b, "alpha": 0.0}).json()
    assert at0["avatar_id"] == a
    mid = svc.client.get("/interpolate", params={"id_a": a, "id_b": b, "alpha": 0.5}).json()
    assert mid["avatar_id"] not in (a, b)
    info = svc.client.get(f"/avatar/{mid['avatar_id']}").json()
    assert sorted(info["roots"]) == sorted([a, b])
    out_of_range = svc.client.get(
        "/interpolate", params={"id_a": a, "id_b": b, "alpha": 1.5}
    )
    assert out_of_range.status_code == 400


# ---------------------------------------------------------------------------
# checkpoint pinning and restart


def test_foreign_checkpoint_is_conflict(svc, tiny_caae):
    rng = np.random.default_rng(40)
    zg = rng.normal(size=(4, 16, 16)).astype(np.float32)
    zt = rng.normal(size=(4, 16, 16)).astype(np.float32)
    g, t = tiny_caae.decode_maps_np(zg, zt)
    rec = svc.rt.store.add(zg, zt, g, t, "forged-checkpoint", {"kind": "prompt"})
    r = svc.client.get(f"/avatar/{rec.avatar_id}")
    assert r.status_code == 409
    assert "checkpoint" in r.json()["detail"]


def test_restart_preserves_store_and_renders(svc, seeded_avatar):
    before = svc.client.post(
        "/render", json={"avatar_id": seeded_avatar["avatar_id"]}
    ).content
    rt2 = load_runtime(svc.cfg)  # re-runs decode verification on every record
    client2 = TestClient(create_app(rt2))
    assert rt2.checkpoint == svc.rt.checkpoint
    doc = client2.get(f"/avatar/{seeded_avatar['avatar_id']}").json()
    assert doc["avatar_id"] == seeded_avatar["avatar_id"]
    after = client2.post("/render", json={"avatar_id": seeded_avatar["avatar_id"]}).content
    assert after == before


def test_avatars_listing_contains_history(svc, seeded_avatar):
    docs = svc.client.get("/avatars").json()["avatars"]
    assert seeded_avatar["avatar_id"] in {d["avatar_id"] for d in docs}
    assert all("provenance" in d for d in docs)
