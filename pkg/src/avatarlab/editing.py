"""Prompt-driven avatar edits.

Two operations on an existing identity code:

* global retexture — resample the texture latent conditioned on the
  avatar's unchanged geometry;
* local edit — regenerate only a masked UV region of one map via
  schedule-consistent inpainting, then blend in map space so texels
  outside the mask stay bit-identical to the source.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .autoencoder import CAAE
from .diffusion import GeoDenoiser, TexDenoiser, sample_inpaint, sample_tex
from .prompts import PromptEmbedder, embed, parse
from .tensorio import read_uvt
from .uvmaps import MapError, blend_masked, box_resample, require_finite

EDIT_CHANNELS = ("tex", "geo")


def load_mask(source) -> np.ndarray:
    """Accept a mask as an array, a .uvt path, or an 8-bit grayscale PNG.

    PNG values map linearly: 0 -> 0.0, 255 -> 1.0. Returns (H, W, 1)
    float32 in [0, 1].
    """
    if isinstance(source, np.ndarray):
        m = source
    elif isinstance(source, (bytes, bytearray)):
        m = np.asarray(Image.open(io.BytesIO(source)).convert("L"), np.float32) / 255.0
    else:
        path = str(source)
        if path.endswith(".png"):
            with open(path, "rb") as fh:
                return load_mask(fh.read())
        m = read_uvt(path)
    m = np.asarray(m, dtype=np.float32)
    if m.ndim == 2:
        m = m[..., None]
    if m.ndim != 3 or m.shape[-1] != 1:
        raise MapError(f"mask must be (H, W) or (H, W, 1), got {m.shape}")
    require_finite(m, "mask")
    if m.min() < 0.0 or m.max() > 1.0:
        raise MapError("mask values outside [0, 1]")
    return m


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    m = load_mask(mask)[..., 0]
    buf = io.BytesIO()
    Image.fromarray(np.round(m * 255.0).astype(np.uint8), "L").save(buf, "PNG")
    return buf.getvalue()


@dataclass
class EditResult:
    z_geo: np.ndarray
    z_tex: np.ndarray
    g_map: np.ndarray
    t_map: np.ndarray
    parsed_slots: dict
    unrecognized: list[str]
    changed: bool


def _embed_prompt(prompt: str, embedder: PromptEmbedder):
    parsed = parse(prompt)
    if not parsed.slots:
        warnings.warn(
            f"prompt {prompt!r} set no attributes; conditioning on the null embedding",
            stacklevel=3,
        )
        emb = embedder.null_embedding()
    else:
        emb = embed(parsed, embedder)
    return parsed, emb


def global_retexture(
    caae: CAAE,
    gctm: TexDenoiser,
    embedder: PromptEmbedder,
    z_geo: np.ndarray,
    z_tex: np.ndarray,
    prompt: str,
    seed: int = 0,
    steps: int = 20,
    guidance: float = 2.0,
) -> EditResult:
    """Resample the texture latent under the prompt; geometry passes through."""
    parsed, emb = _embed_prompt(prompt, embedder)
    g_map = caae.decode_maps_np(z_geo, z_tex)[0]
    z_new = sample_tex(
        gctm, emb, embedder.null_embedding(), g_map=g_map,
        seed=seed, steps=steps, guidance_scale=guidance,
    )
    g_out, t_out = caae.decode_maps_np(z_geo, z_new)
    return EditResult(
        z_geo=np.asarray(z_geo, np.float32).copy(),
        z_tex=z_new,
        g_map=g_out,
        t_map=t_out,
        parsed_slots=dict(parsed.slots),
        unrecognized=list(parsed.unrecognized),
        changed=True,
    )


def local_edit(
    caae: CAAE,
    model: TexDenoiser | GeoDenoiser,
    embedder: PromptEmbedder,
    z_geo: np.ndarray,
    z_tex: np.ndarray,
    mask,
    prompt: str,
    which: str = "tex",
    seed: int = 0,
    steps: int = 20,
    guidance: float = 2.0,
) -> EditResult:
    """Regenerate the masked UV region of one map; the rest stays bit-equal.

    ``mask`` marks the region to regenerate (1 = regenerate). An all-zero
    mask is the identity edit: the source comes back unchanged.
    """
    if which not in EDIT_CHANNELS:
        raise MapError(f"which must be one of {EDIT_CHANNELS}, got {which!r}")
    mask = load_mask(mask)
    g_src, t_src = caae.decode_maps_np(z_geo, z_tex)
    if mask.shape[:2] != g_src.shape[:2]:
        raise MapError(f"mask {mask.shape[:2]} does not match maps {g_src.shape[:2]}")
    parsed, emb = _embed_prompt(prompt, embedder)

    if not mask.any():
        return EditResult(
            z_geo=np.asarray(z_geo, np.float32).copy(),
            z_tex=np.asarray(z_tex, np.float32).copy(),
            g_map=g_src,
            t_map=t_src,
            parsed_slots=dict(parsed.slots),
            unrecognized=list(parsed.unrecognized),
            changed=False,
        )

    hw = caae.cfg.latent_hw
    m_lat = box_resample(mask, hw, hw)[..., 0]
    # Any texel coverage frees the latent cell; the map-space blend below
    # re-imposes the exact pixel boundary.
    m_lat = (m_lat > 0.0).astype(np.float32)

    null_emb = embedder.null_embedding()
    if which == "tex":
        if not isinstance(model, TexDenoiser):
            raise MapError("texture edits need the texture denoiser")
        z_new = sample_inpaint(
            model, np.asarray(z_tex, np.float32), m_lat, emb, null_emb,
            g_map=g_src, seed=seed, steps=steps, guidance_scale=guidance,
        )
        z_geo_out, z_tex_out = np.asarray(z_geo, np.float32).copy(), z_new
    else:
        if isinstance(model, TexDenoiser):
            raise MapError("geometry edits need the geometry denoiser")
        z_new = sample_inpaint(
            model, np.asarray(z_geo, np.float32), m_lat, emb, null_emb,
            seed=seed, steps=steps, guidance_scale=guidance,
        )
        z_geo_out, z_tex_out = z_new, np.asarray(z_tex, np.float32).copy()

    g_gen, t_gen = caae.decode_maps_np(z_geo_out, z_tex_out)
    g_out = blend_masked(g_src, g_gen, mask) if which == "geo" else g_src
    t_out = blend_masked(t_src, t_gen, mask) if which == "tex" else t_src
    return EditResult(
        z_geo=z_geo_out,
        z_tex=z_tex_out,
        g_map=g_out,
        t_map=t_out,
        parsed_slots=dict(parsed.slots),
        unrecognized=list(parsed.unrecognized),
        changed=True,
    )
