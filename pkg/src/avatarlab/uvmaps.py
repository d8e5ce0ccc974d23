"""UV-map mathematics: normals, displacement, masked blending, lerp.

Maps are plain numpy arrays: position/texture/normal maps are (H, W, 3),
displacement and masks are (H, W, 1) or (H, W). Validation helpers raise
instead of silently fixing shapes or ranges.
"""

from __future__ import annotations

import numpy as np


class MapError(ValueError):
    pass


def require_finite(arr: np.ndarray, name: str = "map") -> np.ndarray:
    arr = np.asarray(arr)
    if not np.isfinite(arr).all():
        raise MapError(f"{name} contains non-finite values")
    return arr


def require_shape(arr: np.ndarray, channels: int, name: str = "map") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != channels:
        raise MapError(f"{name}: expected (H, W, {channels}), got {arr.shape}")
    return arr


def normal_from_position(pos: np.ndarray) -> tuple[np.ndarray, int]:
    """Unit surface normals of a position map.

    Tangents use central differences in the interior and one-sided
    differences at the borders; n = normalize(dP/du x dP/dv). Texels whose
    cross product norm falls under 1e-8 get the (0, 0, 1) fallback and are
    counted in the returned tally so conditioning never aborts.
    """
    pos = require_finite(require_shape(pos, 3, "position map"), "position map")
    h, w = pos.shape[:2]
    if h < 2 or w < 2:
        raise MapError(f"position map too small: {pos.shape}")
    # u runs along axis 1 (columns), v along axis 0 (rows)
    du = np.empty_like(pos)
    du[:, 1:-1] = (pos[:, 2:] - pos[:, :-2]) * 0.5
    du[:, 0] = pos[:, 1] - pos[:, 0]
    du[:, -1] = pos[:, -1] - pos[:, -2]
    dv = np.empty_like(pos)
    dv[1:-1, :] = (pos[2:, :] - pos[:-2, :]) * 0.5
    dv[0, :] = pos[1, :] - pos[0, :]
    dv[-1, :] = pos[-1, :] - pos[-2, :]
    n = np.cross(du, dv)
    norm = np.linalg.norm(n, axis=2)
    degenerate = norm < 1e-8
    tally = int(degenerate.sum())
    safe = np.where(degenerate[..., None], 1.0, norm[..., None])
    n = n / safe
    n[degenerate] = (0.0, 0.0, 1.0)
    return n.astype(pos.dtype, copy=False), tally


def displacement_from_position(
    pos: np.ndarray, pos_ref: np.ndarray, normal_ref: np.ndarray
) -> np.ndarray:
    """Per-texel signed offset along the reference normal: (P - P_ref) . N_ref."""
    pos = require_shape(pos, 3, "position map")
    pos_ref = require_shape(pos_ref, 3, "reference position map")
    normal_ref = require_shape(normal_ref, 3, "reference normal map")
    if pos.shape != pos_ref.shape or pos.shape != normal_ref.shape:
        raise MapError(
            f"shape mismatch: {pos.shape} vs {pos_ref.shape} vs {normal_ref.shape}"
        )
    d = np.einsum("hwc,hwc->hw", pos - pos_ref, normal_ref)
    return d[..., None].astype(pos.dtype, copy=False)


def _mask3(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim == 2:
        mask = mask[..., None]
    if mask.ndim != 3 or mask.shape[2] not in (1, 3):
        raise MapError(f"mask: expected (H, W) or (H, W, 1), got {mask.shape}")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise MapError(f"mask values outside [0, 1]: [{mask.min()}, {mask.max()}]")
    return mask


def blend_masked(f_edit: np.ndarray, f_gen: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Convex blend (1-M)*F_edit + M*F_gen.

    M marks the generated region: texels with M=0 bit-equal F_edit. The
    mask broadcasts over channels.
    """
    f_edit = np.asarray(f_edit)
    f_gen = np.asarray(f_gen)
    if f_edit.shape != f_gen.shape:
        raise MapError(f"shape mismatch: {f_edit.shape} vs {f_gen.shape}")
    m = _mask3(mask).astype(f_edit.dtype, copy=False)
    if m.shape[:2] != f_edit.shape[:2]:
        raise MapError(f"mask is {m.shape[:2]}, maps are {f_edit.shape[:2]}")
    # np.where keeps M=0 texels bit-identical (a*1.0 + b*0.0 would turn -0.0
    # into +0.0)
    return np.where(m == 0.0, f_edit, (1.0 - m) * f_edit + m * f_gen)


def lerp(a, b, alpha: float):
    """(1-alpha)*a + alpha*b with exact endpoints; works on maps and latents."""
    if not (0.0 <= alpha <= 1.0):
        raise MapError(f"alpha outside [0, 1]: {alpha}")
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise MapError(f"shape mismatch: {a.shape} vs {b.shape}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return (1.0 - alpha) * a + alpha * b


def box_resample(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-average resampling for integer downscale factors; used to bring
    conditioning maps and UV masks to latent resolution."""
    arr = np.asarray(arr)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[..., None]
    h, w = arr.shape[:2]
    if h % out_h or w % out_w:
        raise MapError(f"box_resample needs integer factors: {h}x{w} -> {out_h}x{out_w}")
    fh, fw = h // out_h, w // out_w
    out = arr.reshape(out_h, fh, out_w, fw, arr.shape[2]).mean(axis=(1, 3))
    return out[..., 0] if squeeze else out
