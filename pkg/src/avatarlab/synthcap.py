"""Synthetic capture rig.

Procedurally generates paired UV position/texture maps for a closed
attribute schema, plus scripted expression frames under known cameras.
Everything is deterministic given (attributes, seed): identity jitters
are drawn from a seeded generator in a fixed order *before* any
attribute is consulted, so two attribute vectors rendered with the same
seed share every continuous nuisance parameter. That makes same-seed
contrasts (e.g. a wide vs. narrow face) clean single-factor experiments.

Texture is albedo times a baked Lambertian shade computed from the
identity geometry's normals, which couples the two maps: a texture is
only "consistent" with a geometry if its shading pattern matches what
the surface implies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .attributes import SLOTS, AttributeVector
from .render import CameraPose, look_at_camera
from .tensorio import read_json, read_uvt, write_json, write_uvt
from .uvmaps import MapError, normal_from_position, require_shape

MAP_RES = 64
N_EXP = 16  # expression parameter dimension (8 scripted axes + headroom)
EXP_NAMES = ("jaw", "smile", "brow", "blink", "mouth_open", "tongue", "cheek", "squint")

SHADE_AMBIENT = 0.72
SHADE_GAIN = 0.28
LIGHT_DIR = np.array([-0.30, 0.40, 0.868], dtype=np.float64)
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)

# Phone-capture signature: warm white-balance tint, lens vignette, and a
# faint demosaicing grid. Identity-independent, so an expression encoder can
# learn to ignore it -- or be probed for leaking it.
PHONE_TINT = np.array([1.07, 1.00, 0.94], dtype=np.float32)
PHONE_VIGNETTE = 0.15
PHONE_GRID_AMP = 0.025
PHONE_GRID_FREQ = 8

FACE_WIDTH = {"narrow": 0.82, "average": 0.92, "wide": 1.03}
WIDTH_JITTER = 0.04  # uniform; bins stay disjoint
NOSE_AMP = {"small": 0.045, "medium": 0.085, "large": 0.130}
LIP_AMP = {"thin": 0.015, "medium": 0.028, "full": 0.045}
LIP_HALF_H = {"thin": 0.016, "medium": 0.026, "full": 0.040}
AGE_SCALE = {"child": 0.84, "young": 1.0, "middle-aged": 1.0, "elderly": 0.98}

SKIN_RGB = {
    "porcelain": (0.96, 0.87, 0.80),
    "fair": (0.92, 0.78, 0.67),
    "golden": (0.85, 0.68, 0.50),
    "tan": (0.72, 0.55, 0.40),
    "brown": (0.55, 0.38, 0.26),
    "ebony": (0.35, 0.24, 0.18),
}
HAIR_RGB = {
    "black": (0.09, 0.08, 0.08),
    "brown": (0.33, 0.21, 0.12),
    "blonde": (0.82, 0.68, 0.38),
    "red": (0.52, 0.19, 0.10),
    "gray": (0.62, 0.62, 0.63),
    "green": (0.16, 0.55, 0.22),
}
EYE_RGB = {
    "brown": (0.35, 0.20, 0.10),
    "blue": (0.25, 0.45, 0.75),
    "green": (0.20, 0.55, 0.25),
    "gray": (0.55, 0.58, 0.60),
}
HAT_RGB = {
    "navy": (0.12, 0.16, 0.42),
    "maroon": (0.45, 0.10, 0.16),
    "purple": (0.35, 0.15, 0.50),
    "charcoal": (0.20, 0.20, 0.22),
}
HAT_NAMES = tuple(HAT_RGB)

# hairline base row (v) and wave per style; hair occupies v < hairline
HAIRLINE = {
    "straight": (0.26, 0.0, 0.0),
    "wavy": (0.29, 0.035, 5.0),
    "curly": (0.32, 0.022, 11.0),
    "cropped": (0.16, 0.0, 0.0),
}

EYE_CENTERS = ((0.35, 0.50), (0.65, 0.50))
EYE_RU, EYE_RV = 0.058, 0.032


def _uv_grid(h: int = MAP_RES, w: int = MAP_RES):
    v, u = np.meshgrid(
        np.linspace(0.0, 1.0, h), np.linspace(0.0, 1.0, w), indexing="ij"
    )
    return u, v


def _gauss(u, v, u0, v0, su, sv):
    return np.exp(-0.5 * ((u - u0) / su) ** 2 - 0.5 * ((v - v0) / sv) ** 2)


def _band(v, lo, hi, soft=0.012):
    """Smooth 0/1 band in v with soft edges."""
    up = 0.5 * (1.0 + np.tanh((v - lo) / soft))
    down = 0.5 * (1.0 + np.tanh((hi - v) / soft))
    return up * down


# ---------------------------------------------------------------------------
# UV region layout (fixed generator constants, used by probes and edit masks)

REGION_BOXES = {
    # name: (u_lo, u_hi, v_lo, v_hi)
    "hair": (0.0, 1.0, 0.0, 0.30),
    "hair_core": (0.20, 0.80, 0.105, 0.155),
    "hat_band": (0.0, 1.0, 0.0, 0.095),
    "forehead": (0.35, 0.65, 0.35, 0.41),
    "brows": (0.22, 0.78, 0.42, 0.46),
    "eyes": (0.25, 0.75, 0.44, 0.56),
    "nose": (0.40, 0.60, 0.54, 0.70),
    "mouth": (0.36, 0.64, 0.68, 0.80),
    "chin": (0.38, 0.62, 0.80, 0.92),
    "jaw": (0.10, 0.90, 0.74, 0.97),
}


def region_mask(name: str, h: int = MAP_RES, w: int = MAP_RES) -> np.ndarray:
    """Hard 0/1 mask (H, W, 1) for a named layout region."""
    if name == "align_patch":
        u, v = _uv_grid(h, w)
        cheeks = (np.abs(u - 0.5) >= 0.17) & (np.abs(u - 0.5) <= 0.30)
        cheeks &= (v >= 0.585) & (v <= 0.66)
        return cheeks.astype(np.float32)[..., None]
    if name not in REGION_BOXES:
        raise MapError(f"unknown region {name!r}; have {sorted(REGION_BOXES)}")
    u_lo, u_hi, v_lo, v_hi = REGION_BOXES[name]
    u, v = _uv_grid(h, w)
    m = (u >= u_lo) & (u <= u_hi) & (v >= v_lo) & (v <= v_hi)
    return m.astype(np.float32)[..., None]


def in_green_band(mean_rgb) -> bool:
    """Whether a mean color sits in the generator's green-hair band."""
    r, g, b = (float(x) for x in mean_rgb)
    return g > r + 0.06 and g > b + 0.06 and g > 0.22


@lru_cache(maxsize=4)
def _phone_fields(h: int, w: int):
    u, v = _uv_grid(h, w)
    r2 = (2.0 * u - 1.0) ** 2 + (2.0 * v - 1.0) ** 2
    vignette = 1.0 - PHONE_VIGNETTE * r2 / 2.0
    grid = (np.sin(2.0 * np.pi * PHONE_GRID_FREQ * u)
            * np.sin(2.0 * np.pi * PHONE_GRID_FREQ * v))
    return vignette.astype(np.float32), grid.astype(np.float32)


def phone_capture_filter(tex: np.ndarray) -> np.ndarray:
    """Apply the phone signature (tint, vignette, sensor grid) to a texture."""
    vignette, grid = _phone_fields(*tex.shape[:2])
    out = tex * PHONE_TINT[None, None, :] * vignette[..., None]
    out = out + PHONE_GRID_AMP * grid[..., None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# identity sampling


def sample_attributes(seed: int) -> AttributeVector:
    rng = np.random.default_rng([int(seed), 0xA77])
    values = {}
    for slot, choices in SLOTS.items():
        values[slot] = choices[int(rng.integers(len(choices)))]
    if values["age"] == "child" and values["facial_hair"] != "none":
        values["facial_hair"] = "none"
    return AttributeVector(**values)


@dataclass
class _Jitter:
    """Continuous nuisance parameters, independent of attributes."""

    width: float
    nose: float
    lip: float
    brow: float
    cheek_amp: float
    cheek_u: float
    cheek_v: float
    chin_amp: float
    skin_gain: float
    hair_gain: float
    waves: np.ndarray  # (3, 4): amp, au, bv, phase
    hat_idx: int
    hair_phase: float
    nose_u: float


def _draw_jitter(rng: np.random.Generator) -> _Jitter:
    # fixed draw order -- never reorder; attribute-independent by design
    return _Jitter(
        width=float(rng.uniform(-WIDTH_JITTER, WIDTH_JITTER)),
        nose=float(rng.uniform(-0.12, 0.12)),
        lip=float(rng.uniform(-0.003, 0.003)),
        brow=float(rng.uniform(-0.004, 0.004)),
        cheek_amp=float(rng.uniform(0.015, 0.050)),
        cheek_u=float(rng.uniform(-0.03, 0.03)),
        cheek_v=float(rng.uniform(-0.025, 0.025)),
        chin_amp=float(rng.uniform(0.018, 0.032)),
        skin_gain=float(rng.uniform(-0.04, 0.04)),
        hair_gain=float(rng.uniform(-0.06, 0.06)),
        waves=np.stack(
            [
                np.array(
                    [
                        rng.uniform(-0.012, 0.012),
                        rng.integers(1, 4),
                        rng.integers(1, 4),
                        rng.uniform(0, 2 * math.pi),
                    ]
                )
                for _ in range(3)
            ]
        ),
        hat_idx=int(rng.integers(len(HAT_NAMES))),
        hair_phase=float(rng.uniform(0, 2 * math.pi)),
        nose_u=float(rng.uniform(-0.01, 0.01)),
    )


def _geometry(attrs: AttributeVector, jit: _Jitter, h: int, w: int) -> np.ndarray:
    u, v = _uv_grid(h, w)
    width = FACE_WIDTH[attrs.face_shape] + jit.width

    # oval half-width profile in v, plus gendered jaw
    oval = np.sqrt(np.clip(1.0 - ((v - 0.52) / 0.62) ** 2, 0.15, None))
    jaw_ramp = 0.5 * (1.0 + np.tanh((v - 0.72) / 0.05))
    jaw = 1.0 + (0.06 if attrs.gender == "man" else -0.025) * jaw_ramp
    x = (u - 0.5) * 2.0 * 0.78 * width * oval * jaw
    y = (0.55 - v) * 1.7

    dome = 1.0 - (x / 0.92) ** 2 - (y / 1.05) ** 2
    z = 0.55 * np.sqrt(np.clip(dome, 0.0, None))

    z += (NOSE_AMP[attrs.nose_size] * (1.0 + jit.nose)) * _gauss(
        u, v, 0.5 + jit.nose_u, 0.615, 0.050, 0.070
    )
    lip_amp = LIP_AMP[attrs.lip_size] + jit.lip
    z += lip_amp * _gauss(u, v, 0.5, 0.745, 0.085, LIP_HALF_H[attrs.lip_size] * 0.9)
    brow_amp = (0.030 if attrs.gender == "man" else 0.012) + jit.brow
    brow_u = _gauss(u, v, 0.35, 0.44, 0.055, 1.0) + _gauss(u, v, 0.65, 0.44, 0.055, 1.0)
    z += brow_amp * brow_u * np.exp(-0.5 * ((v - 0.44) / 0.030) ** 2)
    for su in (-1.0, 1.0):
        z += jit.cheek_amp * _gauss(
            u, v, 0.5 + su * (0.22 + jit.cheek_u), 0.60 + jit.cheek_v, 0.055, 0.055
        )
    z += jit.chin_amp * _gauss(u, v, 0.5, 0.86, 0.070, 0.045)
    for amp, au, bv, phase in jit.waves:
        z += amp * np.cos(math.pi * (au * u + bv * v) + phase)

    scale = AGE_SCALE[attrs.age]
    pos = np.stack([x, y, z], axis=-1) * scale
    return pos.astype(np.float32)


def _hairline_rows(attrs: AttributeVector, jit: _Jitter, u: np.ndarray) -> np.ndarray:
    base, amp, freq = HAIRLINE[attrs.hair_style]
    return base + amp * np.sin(freq * math.pi * u + jit.hair_phase)


def _albedo(attrs: AttributeVector, jit: _Jitter, rng, h: int, w: int) -> np.ndarray:
    u, v = _uv_grid(h, w)
    skin = np.array(SKIN_RGB[attrs.skin_tone], dtype=np.float64) * (1.0 + jit.skin_gain)
    if attrs.age == "child":
        skin = skin * 1.03
    alb = np.broadcast_to(skin, (h, w, 3)).copy()

    lum = alb.mean(axis=-1, keepdims=True)
    if attrs.age == "elderly":
        alb = alb + 0.18 * (lum - alb)
    # forehead lines scale with age
    n_lines = {"child": 0, "young": 0, "middle-aged": 2, "elderly": 4}[attrs.age]
    for i in range(n_lines):
        lv = 0.360 + 0.015 * i
        amp = 0.12 if attrs.age == "middle-aged" else 0.18
        line = np.exp(-0.5 * ((v - lv) / 0.004) ** 2) * _band(u, 0.36, 0.64, 0.03)
        alb = alb * (1.0 - amp * line[..., None])

    # blush for women, kept mostly above the align patch
    if attrs.gender == "woman":
        blush = _gauss(u, v, 0.26, 0.555, 0.05, 0.03) + _gauss(u, v, 0.74, 0.555, 0.05, 0.03)
        alb = alb + 0.06 * blush[..., None] * np.array([1.0, -0.2, -0.1])

    # eyes: sclera, iris, pupil
    iris = np.array(EYE_RGB[attrs.eye_color], dtype=np.float64)
    for cu, cv in EYE_CENTERS:
        d2 = ((u - cu) / EYE_RU) ** 2 + ((v - cv) / EYE_RV) ** 2
        sclera = d2 <= 1.0
        alb[sclera] = (0.93, 0.93, 0.91)
        d_iris = np.sqrt(((u - cu) * 1.0) ** 2 + ((v - cv) * 1.0) ** 2)
        alb[d_iris <= 0.020] = iris
        alb[d_iris <= 0.0085] = (0.03, 0.03, 0.03)

    # brows use the hair color
    hair = np.array(HAIR_RGB[attrs.hair_color], dtype=np.float64) * (1.0 + jit.hair_gain)
    bt = 0.012 if attrs.gender == "man" else 0.007
    for cu, _ in EYE_CENTERS:
        bmask = (np.abs(v - 0.44) <= bt) & (np.abs(u - cu) <= 0.062)
        alb[bmask] = hair * 0.9

    # nostrils
    for du in (-0.026, 0.026):
        alb[((u - (0.5 + du)) ** 2 + ((v - 0.662) * 1.6) ** 2) <= 0.009 ** 2] = (
            skin * 0.45
        )

    # lips: tinted skin; women more saturated
    lip_h = LIP_HALF_H[attrs.lip_size]
    lip = (np.abs(v - 0.745) <= lip_h * (1.0 - 1.8 * np.abs(u - 0.5))) & (
        np.abs(u - 0.5) <= 0.105
    )
    tint = 0.35 if attrs.gender == "woman" else 0.15
    lip_rgb = skin * (1.0 - tint) + np.array([0.62, 0.22, 0.24]) * tint
    alb[lip] = lip_rgb
    mouth_line = (np.abs(v - 0.745) <= 0.004) & (np.abs(u - 0.5) <= 0.095)
    alb[mouth_line] = lip_rgb * 0.55

    # facial hair (drawn from hair color, slightly darker)
    beard = hair * 0.8
    fh = attrs.facial_hair
    if fh in ("mustache", "full-beard"):
        m = (np.abs(v - 0.695) <= 0.012) & (np.abs(u - 0.5) <= 0.085)
        alb[m] = beard
    if fh in ("goatee", "full-beard"):
        m = (np.abs(v - 0.855) <= 0.045) & (np.abs(u - 0.5) <= 0.075)
        alb[m] = beard
    if fh == "full-beard":
        jaw_band = _band(v, 0.76, 0.95, 0.02) * _band(np.abs(u - 0.5), -1.0, 0.36, 0.02)
        speck = 0.85 + 0.15 * rng.random((h, w))
        m = jaw_band * speck
        alb = alb * (1.0 - m[..., None]) + beard * m[..., None]

    # hair above the per-style hairline, with strand/speckle texture
    hairline = _hairline_rows(attrs, jit, u)
    hmask = v < hairline
    strands = 0.86 + 0.14 * np.sin(2 * math.pi * 24.0 * u + jit.hair_phase)
    speckle = 0.80 + 0.20 * rng.random((h, w))
    hair_field = hair[None, None, :] * (strands * speckle)[..., None]
    alb = np.where(hmask[..., None], hair_field, alb)

    # glasses: dark rings + bridge + temples
    if attrs.glasses:
        g = np.zeros((h, w), dtype=bool)
        for cu, cv in EYE_CENTERS:
            d = np.sqrt((u - cu) ** 2 + ((v - cv) * 1.35) ** 2)
            g |= np.abs(d - 0.075) <= 0.009
        g |= (np.abs(v - 0.484) <= 0.007) & (np.abs(u - 0.5) <= 0.045)
        g |= (np.abs(v - 0.50) <= 0.007) & ((u <= 0.215) | (u >= 0.785))
        alb[g] = (0.10, 0.10, 0.11)

    # hat band overrides everything at the very top
    if attrs.headwear:
        hat = np.array(HAT_RGB[HAT_NAMES[jit.hat_idx]], dtype=np.float64)
        hat_field = hat[None, None, :] * (0.92 + 0.08 * rng.random((h, w, 1)))
        hm = v < 0.095
        alb = np.where(hm[..., None], hat_field, alb)
        brim = np.abs(v - 0.102) <= 0.006
        alb[brim] = hat * 0.55

    return np.clip(alb, 0.0, 1.0)


def shading_field(pos: np.ndarray) -> np.ndarray:
    """Baked Lambertian shade (H, W, 1) implied by a position map.

    The head parametrization runs v down the map while world y points
    up, so du x dv faces into the head; flip to the outward normal.
    """
    normals, _ = normal_from_position(pos)
    ndotl = np.clip(-normals.astype(np.float64) @ LIGHT_DIR, 0.0, None)
    return (SHADE_AMBIENT + SHADE_GAIN * ndotl)[..., None].astype(np.float32)


@dataclass
class IdentitySample:
    attrs: AttributeVector
    seed: int
    source: str  # "multiview" | "phone"
    g_neu: np.ndarray  # (H, W, 3) float32 position map
    t_neu: np.ndarray  # (H, W, 3) float32 texture in [0, 1]
    caption: str = ""


def build_identity(
    attrs: AttributeVector, seed: int, source: str = "multiview", res: int = MAP_RES
) -> IdentitySample:
    """Deterministic identity maps for (attrs, seed).

    The jitter draw happens before any attribute branch so identical
    seeds give identical nuisance parameters across attribute vectors.
    """
    if source not in ("multiview", "phone"):
        raise MapError(f"unknown capture source {source!r}")
    rng = np.random.default_rng([int(seed), 0xBEE])
    jit = _draw_jitter(rng)
    g = _geometry(attrs, jit, res, res)
    albedo = _albedo(attrs, jit, rng, res, res)
    tex = np.clip(albedo * shading_field(g), 0.0, 1.0).astype(np.float32)
    if source == "phone":
        tex = phone_capture_filter(tex)
    return IdentitySample(attrs=attrs, seed=int(seed), source=source, g_neu=g, t_neu=tex)


# ---------------------------------------------------------------------------
# expressions


@lru_cache(maxsize=4)
def _expression_basis(h: int, w: int) -> np.ndarray:
    """(8, H, W, 3) linear displacement fields, one per expression axis."""
    u, v = _uv_grid(h, w)
    a = 0.10
    basis = np.zeros((len(EXP_NAMES), h, w, 3), dtype=np.float64)

    ramp = 0.5 * (1.0 + np.tanh((v - 0.78) / 0.05))
    basis[0, ..., 1] = -a * ramp  # jaw drop: lower face moves down
    basis[0, ..., 2] = -0.4 * a * ramp

    for su in (-1.0, 1.0):
        corner = _gauss(u, v, 0.5 + su * 0.125, 0.74, 0.045, 0.035)
        basis[1, ..., 0] += su * 0.35 * a * corner  # smile: corners out
        basis[1, ..., 1] += 0.45 * a * corner  # and up
        basis[1, ..., 2] += 0.3 * a * corner

    brow_band = np.exp(-0.5 * ((v - 0.44) / 0.035) ** 2)
    basis[2, ..., 1] = 0.55 * a * brow_band  # brow raise

    eye_field = sum(_gauss(u, v, cu, cv, 0.075, 0.045) for cu, cv in EYE_CENTERS)
    basis[3, ..., 2] = -0.5 * a * eye_field  # blink: lids flatten

    mouth_band = _band(v, 0.72, 0.82, 0.02) * _band(np.abs(u - 0.5), -1.0, 0.14, 0.02)
    basis[4, ..., 1] = -0.85 * a * mouth_band  # mouth open: lower lip down
    basis[4, ..., 2] = -0.3 * a * mouth_band

    basis[5, ..., 2] = 0.55 * a * _gauss(u, v, 0.5, 0.77, 0.035, 0.022)  # tongue

    cheek_field = sum(_gauss(u, v, 0.5 + su * 0.24, 0.60, 0.06, 0.06) for su in (-1, 1))
    basis[6, ..., 2] = 0.5 * a * cheek_field  # cheek puff

    basis[7, ..., 1] = 0.4 * a * eye_field * np.sign(0.50 - v)  # squint squeeze
    basis[7, ..., 2] = -0.2 * a * eye_field
    return basis


@lru_cache(maxsize=4)
def _expression_tint_masks(h: int, w: int):
    u, v = _uv_grid(h, w)
    mouth_dark = _gauss(u, v, 0.5, 0.755, 0.070, 0.028)
    eye_dark = sum(_gauss(u, v, cu, cv, 0.055, 0.030) for cu, cv in EYE_CENTERS)
    crease = sum(_gauss(u, v, 0.5 + su * 0.14, 0.73, 0.02, 0.03) for su in (-1, 1))
    tongue = _gauss(u, v, 0.5, 0.775, 0.030, 0.018)
    return mouth_dark, eye_dark, crease, tongue


@dataclass
class ExpressionFrame:
    exp_params: np.ndarray  # (N_EXP,) float32 in [-1, 1]
    g_exp: np.ndarray
    t_exp: np.ndarray
    camera: CameraPose


def apply_expression(
    identity: IdentitySample, exp_params, camera: CameraPose | None = None
) -> ExpressionFrame:
    """Deform an identity by a linear field and tint expression-dependent
    texture regions. Zero parameters reproduce the neutral maps exactly."""
    p = np.asarray(exp_params, dtype=np.float32).reshape(-1)
    if p.shape[0] != N_EXP:
        raise MapError(f"expression params must have length {N_EXP}, got {p.shape[0]}")
    if np.abs(p).max(initial=0.0) > 1.0 + 1e-6:
        raise MapError(f"expression params out of range [-1, 1]: max |p| = {np.abs(p).max():.3f}")
    h, w = identity.g_neu.shape[:2]
    basis = _expression_basis(h, w)
    g = identity.g_neu.astype(np.float64) + np.tensordot(
        p[: len(EXP_NAMES)].astype(np.float64), basis, axes=(0, 0)
    )

    mouth_dark, eye_dark, crease, tongue = _expression_tint_masks(h, w)
    pos = np.clip(p, 0.0, None).astype(np.float64)
    darken = (
        0.55 * pos[4] * mouth_dark
        + 0.30 * pos[0] * mouth_dark
        + 0.25 * pos[3] * eye_dark
        + 0.12 * pos[7] * eye_dark
        + 0.15 * pos[1] * crease
    )
    t = identity.t_neu.astype(np.float64) * (1.0 - np.clip(darken, 0.0, 0.9))[..., None]
    t = t + (0.30 * pos[5] * tongue)[..., None] * np.array([0.55, 0.10, 0.15])
    if camera is None:
        camera = look_at_camera()
    return ExpressionFrame(
        exp_params=p,
        g_exp=g.astype(np.float32),
        t_exp=np.clip(t, 0.0, 1.0).astype(np.float32),
        camera=camera,
    )


def _script_frames(identity: IdentitySample, rng) -> list[ExpressionFrame]:
    """Three scripted expressive frames (plus caller-added neutral)."""
    scripts = [
        {"smile": 0.85, "cheek": 0.3},
        {"jaw": 0.7, "mouth_open": 0.85},
        {"brow": 0.6, "blink": 0.55, "squint": 0.3},
    ]
    cams = [(-25.0, 0.0), (25.0, 0.0), (0.0, 15.0)]
    frames = []
    for script, (yaw, pitch) in zip(scripts, cams):
        p = np.zeros(N_EXP, dtype=np.float32)
        for name, mag in script.items():
            p[EXP_NAMES.index(name)] = mag * rng.uniform(0.75, 1.0)
        # low-amplitude mixture over the remaining axes
        extra = rng.uniform(-0.08, 0.08, size=len(EXP_NAMES)).astype(np.float32)
        p[: len(EXP_NAMES)] = np.clip(p[: len(EXP_NAMES)] + extra, -1.0, 1.0)
        cam = look_at_camera(yaw_deg=yaw + rng.uniform(-3, 3), pitch_deg=pitch + rng.uniform(-2, 2))
        frames.append(apply_expression(identity, p, cam))
    return frames


def capture_identity(
    attrs: AttributeVector, seed: int, source: str = "multiview", res: int = MAP_RES
) -> tuple[IdentitySample, list[ExpressionFrame]]:
    """Identity plus its captured frames.

    Multiview rigs contribute a neutral frontal frame and three scripted
    expressive frames; phone captures contribute the neutral frame only.
    """
    identity = build_identity(attrs, seed, source=source, res=res)
    rng = np.random.default_rng([int(seed), 0xF7A])
    neutral = apply_expression(
        identity, np.zeros(N_EXP, dtype=np.float32), look_at_camera()
    )
    frames = [neutral]
    if source == "multiview":
        frames.extend(_script_frames(identity, rng))
    return identity, frames


# ---------------------------------------------------------------------------
# captions

_CAPTION_TEMPLATES = (
    "a 3d avatar of a {age} {gender} with {skin_tone} skin, {hair_length}, "
    "{eye_color} eyes, a {face_shape} face, {facial_hair}, a {nose_size} nose, "
    "{lip_size} lips, {glasses}, {headwear}",
    "portrait of a {age} {gender}, {skin_tone} skin, {hair_length}, "
    "{face_shape} face with a {nose_size} nose and {lip_size} lips, "
    "{eye_color} eyes, {facial_hair}, {glasses}, {headwear}",
    "{age} {gender}, {hair_length}, {eye_color} eyes, {skin_tone} skin, "
    "{facial_hair}, {face_shape} face, {nose_size} nose, {lip_size} lips, "
    "{glasses}, {headwear}",
)


def caption_of(attrs: AttributeVector, seed: int = 0) -> str:
    """Render one of the caption templates; mentions every slot."""
    rng = np.random.default_rng([int(seed), 0xCA9])
    template = _CAPTION_TEMPLATES[int(rng.integers(len(_CAPTION_TEMPLATES)))]
    fields = {
        "age": "child-aged" if attrs.age == "child" else attrs.age,
        "gender": attrs.gender,
        "skin_tone": attrs.skin_tone,
        "hair_length": f"{attrs.hair_style} {attrs.hair_color} hair",
        "eye_color": attrs.eye_color,
        "face_shape": attrs.face_shape,
        "nose_size": attrs.nose_size,
        "lip_size": attrs.lip_size,
        "facial_hair": (
            "clean-shaven" if attrs.facial_hair == "none"
            else "a full beard" if attrs.facial_hair == "full-beard"
            else f"a {attrs.facial_hair}"
        ),
        "glasses": "wearing glasses" if attrs.glasses else "without glasses",
        "headwear": "wearing a hat" if attrs.headwear else "bareheaded",
    }
    return template.format(**fields)


# ---------------------------------------------------------------------------
# dataset build / IO


@dataclass
class CaptureSet:
    identity: IdentitySample
    frames: list[ExpressionFrame] = field(default_factory=list)


def build_dataset(
    n_multiview: int,
    n_phone: int,
    seed: int = 0,
    res: int = MAP_RES,
) -> list[CaptureSet]:
    """Generate a corpus: multiview identities first, then phone captures."""
    sets = []
    for i in range(n_multiview + n_phone):
        source = "multiview" if i < n_multiview else "phone"
        id_seed = seed * 1_000_003 + i
        attrs = sample_attributes(id_seed)
        identity, frames = capture_identity(attrs, id_seed, source=source, res=res)
        identity.caption = caption_of(attrs, id_seed)
        sets.append(CaptureSet(identity=identity, frames=frames))
    return sets


def write_dataset(sets: list[CaptureSet], root) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, cs in enumerate(sets):
        ident = cs.identity
        name = f"id{idx:05d}"
        d = root / name
        (d / "frames").mkdir(parents=True, exist_ok=True)
        write_uvt(d / "g_neu.uvt", ident.g_neu)
        write_uvt(d / "t_neu.uvt", ident.t_neu)
        for k, fr in enumerate(cs.frames):
            fd = d / "frames" / str(k)
            fd.mkdir(parents=True, exist_ok=True)
            write_uvt(fd / "g_exp.uvt", fr.g_exp)
            write_uvt(fd / "t_exp.uvt", fr.t_exp)
            write_json(
                fd / "frame.json",
                {"exp_params": [float(x) for x in fr.exp_params], "camera": fr.camera.to_json()},
            )
        entries.append(
            {
                "id": name,
                "seed": ident.seed,
                "source": ident.source,
                "caption": ident.caption,
                "attrs": ident.attrs.as_dict(),
                "n_frames": len(cs.frames),
            }
        )
    manifest = {"resolution": sets[0].identity.g_neu.shape[0] if sets else MAP_RES, "identities": entries}
    write_json(root / "manifest.json", manifest)
    return manifest


def load_manifest(root) -> dict:
    return read_json(Path(root) / "manifest.json")


def load_captureset(root, entry: dict) -> CaptureSet:
    d = Path(root) / entry["id"]
    ident = IdentitySample(
        attrs=AttributeVector.from_dict(entry["attrs"]),
        seed=int(entry["seed"]),
        source=entry["source"],
        g_neu=read_uvt(d / "g_neu.uvt"),
        t_neu=read_uvt(d / "t_neu.uvt"),
        caption=entry["caption"],
    )
    frames = []
    for k in range(int(entry["n_frames"])):
        fd = d / "frames" / str(k)
        meta = read_json(fd / "frame.json")
        frames.append(
            ExpressionFrame(
                exp_params=np.array(meta["exp_params"], dtype=np.float32),
                g_exp=read_uvt(fd / "g_exp.uvt"),
                t_exp=read_uvt(fd / "t_exp.uvt"),
                camera=CameraPose.from_json(meta["camera"]),
            )
        )
    return CaptureSet(identity=ident, frames=frames)


def load_dataset(root) -> list[CaptureSet]:
    manifest = load_manifest(root)
    return [load_captureset(root, e) for e in manifest["identities"]]


def mean_neutral_position(sets: list[CaptureSet]) -> np.ndarray:
    """Cohort-mean neutral geometry; the displacement reference surface."""
    if not sets:
        raise MapError("mean_neutral_position: empty dataset")
    acc = np.zeros_like(sets[0].identity.g_neu, dtype=np.float64)
    for cs in sets:
        acc += cs.identity.g_neu
    return (acc / len(sets)).astype(np.float32)


def cheek_extent(pos: np.ndarray, v_row: float = 0.60) -> float:
    """Horizontal cheek span (max x minus min x) at a fixed UV row."""
    pos = require_shape(pos, 3, "position map")
    row = int(round(v_row * (pos.shape[0] - 1)))
    xs = pos[row, :, 0]
    return float(xs.max() - xs.min())
