"""HTTP surface over the avatar pipeline.

Model weights are immutable after load; store writes are serialized by
the store's own lock, so read endpoints (render, metadata) run fully
concurrent. Every response carries the combined checkpoint hash, and
any operation that would mix avatars from a different checkpoint set is
rejected.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .autoencoder import CAAE, load_caae
from .config import PipelineConfig
from .diffusion import GeoDenoiser, TexDenoiser, load_gctm, load_gm
from .editing import global_retexture, load_mask, local_edit
from .invert import InversionConfig, InversionTargets, invert
from .pipeline import generate_identity
from .prompts import PromptEmbedder
from .render import image_to_png_bytes, look_at_camera, mesh_from_position, rasterize
from .store import AvatarRecord, AvatarStore
from .synthcap import EXP_NAMES, REGION_BOXES, region_mask
from .tensorio import read_uvt, state_sha
from .uvmaps import MapError, lerp

MAX_RENDER_SIZE = 256
PRESET_RECIPES = {
    "neutral": {},
    "smile": {"smile": 0.9, "cheek": 0.35},
    "jaw-open": {"jaw": 0.9, "mouth_open": 0.6},
    "blink": {"blink": 0.95},
    "tongue": {"mouth_open": 0.65, "tongue": 0.9},
}


@dataclass
class Runtime:
    config: PipelineConfig
    store: AvatarStore
    caae: CAAE | None = None
    gm: GeoDenoiser | None = None
    gctm: TexDenoiser | None = None
    embedder: PromptEmbedder | None = None
    checkpoint: str = "none"
    presets: dict = field(default_factory=dict)

    @property
    def ready(self) -> bool:
        return None not in (self.caae, self.gm, self.gctm, self.embedder)


def load_runtime(cfg: PipelineConfig) -> Runtime:
    """Load whatever checkpoints exist; missing models leave the service
    answering 503 on generation routes."""
    store = AvatarStore(cfg.service.store_dir)
    rt = Runtime(config=cfg, store=store)
    ckpt = cfg.service.ckpt_dir
    hashes = {}
    try:
        rt.caae, caae_meta = load_caae(os.path.join(ckpt, "caae"))
        hashes["caae"] = state_sha(rt.caae.state_dict())
    except (OSError, KeyError, MapError):
        rt.caae = None
    try:
        rt.gm, gm_meta = load_gm(os.path.join(ckpt, "gm"))
        hashes["gm"] = state_sha(rt.gm.state_dict())
        rt.embedder = PromptEmbedder(seed=int(gm_meta.get("embedder_seed", 0)))
    except (OSError, KeyError, MapError):
        rt.gm = None
    try:
        rt.gctm, _ = load_gctm(os.path.join(ckpt, "gctm"))
        hashes["gctm"] = state_sha(rt.gctm.state_dict())
    except (OSError, KeyError, MapError):
        rt.gctm = None
    if hashes:
        rt.checkpoint = hashlib.sha256(
            json.dumps(hashes, sort_keys=True).encode()
        ).hexdigest()[:16]
    if rt.caae is not None:
        rt.presets = _build_presets(rt.caae)
    _verify_store(rt)
    return rt


def _verify_store(rt: Runtime) -> None:
    if rt.caae is None:
        return
    for avatar_id in rt.store.ids():
        record = rt.store.get(avatar_id)
        if record.checkpoint == rt.checkpoint:
            rt.store.verify_decode(avatar_id, rt.caae)


def _build_presets(caae: CAAE) -> dict:
    """Expression codes for the named presets, measured through the
    expression encoder on a canonical identity."""
    from .synthcap import apply_expression, build_identity, sample_attributes

    ident = build_identity(sample_attributes(11), seed=11)
    presets = {}
    for name, recipe in PRESET_RECIPES.items():
        params = np.zeros(16, np.float32)
        for axis, amount in recipe.items():
            params[EXP_NAMES.index(axis)] = amount
        frame = apply_expression(ident, params)
        presets[name] = caae.encode_exp_np(frame.t_exp, frame.g_exp)
    return presets


class ApiError(Exception):
    def __init__(self, status: int, detail: str):
        self.status = status
        self.detail = detail


def _require_ready(rt: Runtime, *parts: str) -> None:
    missing = [p for p in parts if getattr(rt, p) is None]
    if missing:
        raise ApiError(503, f"checkpoints missing: {', '.join(missing)}")


def _get_avatar(rt: Runtime, avatar_id) -> AvatarRecord:
    if not isinstance(avatar_id, str) or not avatar_id:
        raise ApiError(400, "avatar_id must be a non-empty string")
    try:
        record = rt.store.get(avatar_id)
    except KeyError:
        raise ApiError(404, f"unknown avatar {avatar_id!r}") from None
    if record.checkpoint != rt.checkpoint:
        raise ApiError(
            409,
            f"avatar {avatar_id} belongs to checkpoint {record.checkpoint}, "
            f"service runs {rt.checkpoint}",
        )
    return record


def _as_int(body: dict, key: str, default: int, lo: int, hi: int) -> int:
    value = body.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or not lo <= value <= hi:
        raise ApiError(400, f"{key} must be an integer in [{lo}, {hi}]")
    return value


def _as_float(body: dict, key: str, default: float, lo: float, hi: float) -> float:
    value = body.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ApiError(400, f"{key} must be a number")
    if not lo <= float(value) <= hi:
        raise ApiError(400, f"{key} must be in [{lo}, {hi}]")
    return float(value)


def _camera_from(body: dict):
    spec = body.get("camera") or {}
    if not isinstance(spec, dict):
        raise ApiError(400, "camera must be an object")
    yaw = _as_float(spec, "yaw", 0.0, -180.0, 180.0)
    pitch = _as_float(spec, "pitch", 0.0, -89.0, 89.0)
    distance = _as_float(spec, "distance", 3.0, 1.2, 20.0)
    f = _as_float(spec, "f", 68.0, 8.0, 512.0)
    size = spec.get("size", [64, 64])
    if (
        not isinstance(size, (list, tuple))
        or len(size) != 2
        or not all(isinstance(s, int) and 16 <= s <= MAX_RENDER_SIZE for s in size)
    ):
        raise ApiError(400, f"camera.size must be two ints in [16, {MAX_RENDER_SIZE}]")
    return look_at_camera(yaw, pitch, distance=distance, f=f, size=(size[0], size[1]))


def _exp_code(rt: Runtime, body: dict) -> tuple[np.ndarray | None, str]:
    exp = body.get("exp", "neutral")
    if isinstance(exp, str):
        if exp not in rt.presets:
            raise ApiError(400, f"unknown expression preset {exp!r}; have {sorted(rt.presets)}")
        return (None, "neutral") if exp == "neutral" else (rt.presets[exp], exp)
    if isinstance(exp, (list, tuple)):
        if len(exp) != 16 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in exp):
            raise ApiError(400, "exp must be 16 numbers or a preset name")
        arr = np.asarray(exp, np.float32)
        if not np.isfinite(arr).all() or float(np.abs(arr).max()) > 25.0:
            raise ApiError(400, "exp values out of range")
        return arr, "custom"
    raise ApiError(400, "exp must be 16 numbers or a preset name")


def _render_record(rt: Runtime, record: AvatarRecord, camera, z_exp: np.ndarray | None) -> bytes:
    if z_exp is None:
        g, t = record.g_map, record.t_map
    else:
        g, t = rt.caae.decode_expression_np(z_exp, record.g_map, record.t_map)
    image = rasterize(mesh_from_position(g), t, camera).color
    return image_to_png_bytes(image)


def _mask_from(body: dict, res: int):
    b64 = body.get("mask_png_b64")
    region = body.get("mask_region")
    if b64 is not None and region is not None:
        raise ApiError(400, "give mask_png_b64 or mask_region, not both")
    if b64 is not None:
        if not isinstance(b64, str):
            raise ApiError(400, "mask_png_b64 must be a base64 string")
        try:
            raw = base64.b64decode(b64, validate=True)
            return load_mask(raw)
        except (binascii.Error, OSError, MapError) as exc:
            raise ApiError(400, f"bad mask: {exc}") from None
    if region is not None:
        if region == "align_patch" or region in REGION_BOXES:
            return region_mask(region, res, res)
        raise ApiError(400, f"unknown mask region {region!r}")
    return None


def create_app(rt: Runtime) -> FastAPI:
    app = FastAPI(title="avatarlab", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            {"detail": exc.detail, "checkpoint": rt.checkpoint}, status_code=exc.status
        )

    @app.exception_handler(RequestValidationError)
    async def _bad_body(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            {"detail": "malformed body", "checkpoint": rt.checkpoint}, status_code=400
        )

    def _json(payload: dict, status: int = 200) -> JSONResponse:
        return JSONResponse({**payload, "checkpoint": rt.checkpoint}, status_code=status)

    @app.get("/health")
    async def health():
        return _json(
            {
                "ready": rt.ready,
                "models": {
                    "caae": rt.caae is not None,
                    "gm": rt.gm is not None,
                    "gctm": rt.gctm is not None,
                },
                "avatars": len(rt.store.ids()),
            }
        )

    @app.post("/generate")
    async def generate(request: Request):
        body = await _body(request)
        _require_ready(rt, "caae", "gm", "gctm", "embedder")
        prompt = body.get("prompt", "")
        if not isinstance(prompt, str):
            raise ApiError(400, "prompt must be a string")
        seed = _as_int(body, "seed", 0, 0, 2**31 - 1)
        steps = _as_int(body, "steps", rt.config.gm.sample_steps, 1, 250)
        guidance = _as_float(body, "guidance", rt.config.gm.guidance_scale, 0.0, 20.0)
        gen = generate_identity(
            rt.caae, rt.gm, rt.gctm, rt.embedder, prompt, seed=seed, steps=steps,
            guidance=guidance,
        )
        record = rt.store.add(
            gen.z_geo, gen.z_tex, gen.g_map, gen.t_map, rt.checkpoint,
            provenance={"kind": "prompt", "prompt": prompt, "seed": seed},
            meta={"attrs_parsed": _jsonable(gen.parsed_slots), "unrecognized": gen.unrecognized},
        )
        return _json(
            {
                "avatar_id": record.avatar_id,
                "attrs_parsed": _jsonable(gen.parsed_slots),
                "unrecognized_tokens": gen.unrecognized,
            }
        )

    @app.post("/render")
    async def render(request: Request):
        body = await _body(request)
        _require_ready(rt, "caae")
        record = _get_avatar(rt, body.get("avatar_id"))
        camera = _camera_from(body)
        z_exp, exp_name = _exp_code(rt, body)
        png = _render_record(rt, record, camera, z_exp)
        return Response(
            content=png,
            media_type="image/png",
            headers={
                "X-Checkpoint-Hash": rt.checkpoint,
                "X-Avatar-Id": record.avatar_id,
                "X-Expression": exp_name,
            },
        )

    @app.post("/edit")
    async def edit(request: Request):
        body = await _body(request)
        _require_ready(rt, "caae", "gm", "gctm", "embedder")
        record = _get_avatar(rt, body.get("avatar_id"))
        prompt = body.get("prompt", "")
        if not isinstance(prompt, str):
            raise ApiError(400, "prompt must be a string")
        which = body.get("which", "global")
        if which not in ("global", "tex", "geo"):
            raise ApiError(400, "which must be one of global, tex, geo")
        seed = _as_int(body, "seed", 0, 0, 2**31 - 1)
        steps = _as_int(body, "steps", rt.config.gm.sample_steps, 1, 250)
        guidance = _as_float(body, "guidance", rt.config.gm.guidance_scale, 0.0, 20.0)
        mask = _mask_from(body, record.t_map.shape[0])

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # null-conditioning warning -> response field
            if which == "global":
                result = global_retexture(
                    rt.caae, rt.gctm, rt.embedder, record.z_geo, record.z_tex, prompt,
                    seed=seed, steps=steps, guidance=guidance,
                )
                recipe, mask_out = {"kind": "decode"}, None
            else:
                if mask is None:
                    raise ApiError(400, "local edits need mask_png_b64 or mask_region")
                model = rt.gctm if which == "tex" else rt.gm
                try:
                    result = local_edit(
                        rt.caae, model, rt.embedder, record.z_geo, record.z_tex, mask,
                        prompt, which=which, seed=seed, steps=steps, guidance=guidance,
                    )
                except MapError as exc:
                    raise ApiError(400, str(exc)) from None
                if result.changed:
                    recipe = {"kind": "blend", "which": which, "source": record.avatar_id}
                    mask_out = mask
                else:
                    recipe, mask_out = {"kind": "decode"}, None

        if not result.changed:
            # empty mask: identity edit dedups onto the source avatar
            return _json(
                {
                    "avatar_id": record.avatar_id,
                    "changed": False,
                    "attrs_parsed": _jsonable(result.parsed_slots),
                    "unrecognized_tokens": result.unrecognized,
                }
            )
        new = rt.store.add(
            result.z_geo, result.z_tex, result.g_map, result.t_map, rt.checkpoint,
            provenance={
                "kind": "edit",
                "source": record.avatar_id,
                "prompt": prompt,
                "which": which,
                "seed": seed,
            },
            recipe=recipe,
            mask=mask_out,
            meta={
                "attrs_parsed": _jsonable(result.parsed_slots),
                "unrecognized": result.unrecognized,
            },
        )
        return _json(
            {
                "avatar_id": new.avatar_id,
                "changed": True,
                "attrs_parsed": _jsonable(result.parsed_slots),
                "unrecognized_tokens": result.unrecognized,
            }
        )

    @app.post("/invert")
    async def invert_route(
        t_neu: UploadFile = File(...),
        g_neu: UploadFile = File(...),
        steps: int = Form(120),
        seed: int = Form(0),
    ):
        _require_ready(rt, "caae")
        if not 1 <= steps <= 2000:
            raise ApiError(400, "steps must be in [1, 2000]")
        try:
            t_map = _read_uvt_upload(await t_neu.read())
            g_map = _read_uvt_upload(await g_neu.read())
        except (MapError, ValueError) as exc:
            raise ApiError(400, f"bad target maps: {exc}") from None
        torch.manual_seed(seed)
        targets = InversionTargets(g_map=g_map, t_map=t_map)
        result = invert(rt.caae, targets, cfg=InversionConfig(steps=steps))
        g_hat, t_hat = rt.caae.decode_maps_np(result.z_geo, result.z_tex)
        record = rt.store.add(
            result.z_geo, result.z_tex, g_hat, t_hat, rt.checkpoint,
            provenance={"kind": "inversion", "steps": steps, "seed": seed},
            meta={"final_loss": result.trace[result.best_step]},
        )
        return _json(
            {"avatar_id": record.avatar_id, "final_loss": result.trace[result.best_step]}
        )

    @app.get("/interpolate")
    async def interpolate(id_a: str, id_b: str, alpha: float):
        _require_ready(rt, "caae")
        if not 0.0 <= alpha <= 1.0:
            raise ApiError(400, "alpha must be in [0, 1]")
        rec_a = _get_avatar(rt, id_a)
        rec_b = _get_avatar(rt, id_b)
        z_geo = lerp(rec_a.z_geo, rec_b.z_geo, alpha)
        z_tex = lerp(rec_a.z_tex, rec_b.z_tex, alpha)
        g, t = rt.caae.decode_maps_np(z_geo, z_tex)
        record = rt.store.add(
            z_geo, z_tex, g, t, rt.checkpoint,
            provenance={"kind": "interp", "parents": [id_a, id_b], "alpha": alpha},
        )
        return _json({"avatar_id": record.avatar_id, "alpha": alpha})

    @app.get("/avatar/{avatar_id}")
    async def avatar_info(avatar_id: str):
        record = _get_avatar(rt, avatar_id)
        return _json(
            {
                **record.summary(),
                "roots": rt.store.roots(avatar_id),
                "chain": rt.store.chain(avatar_id),
            }
        )

    @app.get("/avatars")
    async def avatars():
        return _json({"avatars": [rt.store.get(i).summary() for i in rt.store.ids()]})

    return app


async def _body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise ApiError(400, "malformed body: expected a JSON object") from None
    if not isinstance(body, dict):
        raise ApiError(400, "malformed body: expected a JSON object")
    return body


def _read_uvt_upload(raw: bytes) -> np.ndarray:
    with tempfile.NamedTemporaryFile(suffix=".uvt") as fh:
        fh.write(raw)
        fh.flush()
        arr = read_uvt(fh.name)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise MapError(f"expected an (H, W, 3) map, got {arr.shape}")
    return np.asarray(arr, np.float32)


def _jsonable(slots: dict) -> dict:
    return {k: (v if not isinstance(v, (np.bool_,)) else bool(v)) for k, v in slots.items()}


def main(cfg: PipelineConfig) -> None:
    import uvicorn

    rt = load_runtime(cfg)
    app = create_app(rt)
    uvicorn.run(app, host=cfg.service.host, port=cfg.service.port, log_level="warning")
