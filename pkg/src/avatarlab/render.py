"""Rendering of position/texture maps.

Two renderers share the camera model:

* `rasterize` - deterministic depth-buffered triangle rasterizer with
  perspective-correct barycentric UV interpolation and nearest-texel
  lookup. Used for display paths; bit-stable across runs.
* `splat_render` - differentiable Gaussian point splatting with soft
  depth weighting (torch). Used wherever gradients must flow to the
  position or texture map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .uvmaps import MapError, require_finite, require_shape

BACKGROUND = np.array([0.06, 0.07, 0.09], dtype=np.float32)


@dataclass
class CameraPose:
    """Pinhole camera: p_cam = R @ p_world + t, pixel = f * (x/z, y/z) + pp."""

    R: np.ndarray  # (3, 3) row-major, orthonormal
    t: np.ndarray  # (3,)
    f: float
    pp: tuple[float, float]
    size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        err = np.abs(self.R @ self.R.T - np.eye(3)).max()
        if err > 1e-6:
            raise MapError(f"camera rotation not orthonormal (|R R^T - I| = {err:.2e})")

    def to_json(self) -> dict:
        return {
            "R": [float(x) for x in self.R.reshape(-1)],
            "t": [float(x) for x in self.t],
            "f": float(self.f),
            "pp": [float(self.pp[0]), float(self.pp[1])],
            "size": [int(self.size[0]), int(self.size[1])],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CameraPose":
        return cls(
            R=np.array(obj["R"], dtype=np.float64).reshape(3, 3),
            t=np.array(obj["t"], dtype=np.float64),
            f=float(obj["f"]),
            pp=(float(obj["pp"][0]), float(obj["pp"][1])),
            size=(int(obj["size"][0]), int(obj["size"][1])),
        )


def look_at_camera(
    yaw_deg: float = 0.0,
    pitch_deg: float = 0.0,
    distance: float = 3.0,
    f: float = 68.0,
    size: tuple[int, int] = (64, 64),
    target=(0.0, 0.0, 0.25),
) -> CameraPose:
    """Orbit camera around `target`; yaw about +y, pitch about +x.

    The frontal pose (yaw=pitch=0) looks down -z_world with image y
    pointing down, so +y_world is up in the image.
    """
    yaw = np.deg2rad(yaw_deg)
    pitch = np.deg2rad(pitch_deg)
    target = np.asarray(target, dtype=np.float64)
    # camera center orbits in world space
    cdir = np.array(
        [np.sin(yaw) * np.cos(pitch), np.sin(pitch), np.cos(yaw) * np.cos(pitch)]
    )
    center = target + distance * cdir
    z_cam = target - center
    z_cam = z_cam / np.linalg.norm(z_cam)
    up = np.array([0.0, 1.0, 0.0])
    x_cam = np.cross(z_cam, up)
    n = np.linalg.norm(x_cam)
    if n < 1e-9:
        x_cam = np.array([1.0, 0.0, 0.0])
    else:
        x_cam = x_cam / n
    y_cam = np.cross(z_cam, x_cam)  # points down in world for the frontal pose
    R = np.stack([x_cam, y_cam, z_cam], axis=0)
    t = -R @ center
    pp = (size[0] / 2.0, size[1] / 2.0)
    return CameraPose(R=R, t=t, f=f, pp=pp, size=size)


@dataclass
class MeshGrid:
    vertices: np.ndarray  # (H*W, 3) texel positions, row-major
    uvs: np.ndarray  # (H*W, 2) texel (col, row) indices
    faces: np.ndarray  # (F, 3) vertex indices, deterministic order
    shape: tuple[int, int]


@dataclass
class RenderedImage:
    color: np.ndarray  # (H', W', 3) in [0, 1]
    depth: np.ndarray  # (H', W') camera-space depth, +inf at background


def mesh_from_position(pos: np.ndarray) -> MeshGrid:
    """Regular-grid triangulation: two triangles per texel cell."""
    pos = require_finite(require_shape(pos, 3, "position map"), "position map")
    h, w = pos.shape[:2]
    if h < 2 or w < 2:
        raise MapError(f"position map too small to mesh: {pos.shape}")
    verts = pos.reshape(-1, 3).astype(np.float64)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    uvs = np.stack([cols.reshape(-1), rows.reshape(-1)], axis=1).astype(np.float64)
    r, c = np.meshgrid(np.arange(h - 1), np.arange(w - 1), indexing="ij")
    tl = (r * w + c).reshape(-1)
    tr = tl + 1
    bl = tl + w
    br = bl + 1
    upper = np.stack([tl, tr, bl], axis=1)
    lower = np.stack([bl, tr, br], axis=1)
    faces = np.empty((upper.shape[0] * 2, 3), dtype=np.int64)
    faces[0::2] = upper
    faces[1::2] = lower
    return MeshGrid(vertices=verts, uvs=uvs, faces=faces, shape=(h, w))


def project(camera: CameraPose, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection. Returns (pixels (N,2), depth (N,)); depth <= 0
    marks clipped points (pixel values undefined there)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cam = pts @ camera.R.T + camera.t
    z = cam[:, 2]
    safe = np.where(z > 0, z, 1.0)
    px = camera.f * cam[:, 0] / safe + camera.pp[0]
    py = camera.f * cam[:, 1] / safe + camera.pp[1]
    return np.stack([px, py], axis=1), z


def rasterize(
    mesh: MeshGrid, texture: np.ndarray, camera: CameraPose
) -> RenderedImage:
    """Depth-buffered rasterization with nearest-texel texture lookup.

    Deterministic: candidate fragments are sorted by (pixel, depth, face
    index) so ties resolve identically on every run.
    """
    texture = require_shape(texture, 3, "texture map")
    wpx, hpx = camera.size
    color = np.empty((hpx, wpx, 3), dtype=np.float32)
    color[:] = BACKGROUND
    depth_buf = np.full((hpx, wpx), np.inf, dtype=np.float64)
    if mesh.faces.size == 0:
        return RenderedImage(color=color, depth=depth_buf)

    pix, z = project(camera, mesh.vertices)
    tri = mesh.faces
    p0, p1, p2 = pix[tri[:, 0]], pix[tri[:, 1]], pix[tri[:, 2]]
    z0, z1, z2 = z[tri[:, 0]], z[tri[:, 1]], z[tri[:, 2]]
    front = (z0 > 1e-9) & (z1 > 1e-9) & (z2 > 1e-9)

    xmin = np.clip(np.floor(np.minimum(np.minimum(p0[:, 0], p1[:, 0]), p2[:, 0]) - 0.5), 0, wpx - 1).astype(np.int64)
    xmax = np.clip(np.ceil(np.maximum(np.maximum(p0[:, 0], p1[:, 0]), p2[:, 0]) + 0.5), 0, wpx).astype(np.int64)
    ymin = np.clip(np.floor(np.minimum(np.minimum(p0[:, 1], p1[:, 1]), p2[:, 1]) - 0.5), 0, hpx - 1).astype(np.int64)
    ymax = np.clip(np.ceil(np.maximum(np.maximum(p0[:, 1], p1[:, 1]), p2[:, 1]) + 0.5), 0, hpx).astype(np.int64)
    counts = np.where(front, np.maximum(xmax - xmin, 0) * np.maximum(ymax - ymin, 0), 0)
    total = int(counts.sum())
    if total == 0:
        return RenderedImage(color=color, depth=depth_buf)

    face_of = np.repeat(np.arange(tri.shape[0]), counts)
    # enumerate bbox pixels for every candidate face
    offs = np.empty(total, dtype=np.int64)
    start = np.zeros(tri.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    offs = np.arange(total) - start[face_of]
    bw = np.maximum(xmax - xmin, 1)
    px_x = xmin[face_of] + offs % bw[face_of]
    px_y = ymin[face_of] + offs // bw[face_of]

    sx = px_x + 0.5
    sy = px_y + 0.5
    a0 = p0[face_of]
    a1 = p1[face_of]
    a2 = p2[face_of]
    d = (a1[:, 1] - a2[:, 1]) * (a0[:, 0] - a2[:, 0]) + (a2[:, 0] - a1[:, 0]) * (a0[:, 1] - a2[:, 1])
    ok = np.abs(d) > 1e-12
    dd = np.where(ok, d, 1.0)
    w0 = ((a1[:, 1] - a2[:, 1]) * (sx - a2[:, 0]) + (a2[:, 0] - a1[:, 0]) * (sy - a2[:, 1])) / dd
    w1 = ((a2[:, 1] - a0[:, 1]) * (sx - a2[:, 0]) + (a0[:, 0] - a2[:, 0]) * (sy - a2[:, 1])) / dd
    w2 = 1.0 - w0 - w1
    eps = -1e-9
    inside = ok & (w0 >= eps) & (w1 >= eps) & (w2 >= eps)
    if not inside.any():
        return RenderedImage(color=color, depth=depth_buf)

    face_of = face_of[inside]
    px_x, px_y = px_x[inside], px_y[inside]
    w0, w1, w2 = w0[inside], w1[inside], w2[inside]
    iz0, iz1, iz2 = 1.0 / z0[face_of], 1.0 / z1[face_of], 1.0 / z2[face_of]
    inv_z = w0 * iz0 + w1 * iz1 + w2 * iz2
    frag_z = 1.0 / inv_z
    # perspective-correct UV
    uv0 = mesh.uvs[tri[face_of, 0]]
    uv1 = mesh.uvs[tri[face_of, 1]]
    uv2 = mesh.uvs[tri[face_of, 2]]
    uu = (w0 * iz0 * uv0[:, 0] + w1 * iz1 * uv1[:, 0] + w2 * iz2 * uv2[:, 0]) * frag_z
    vv = (w0 * iz0 * uv0[:, 1] + w1 * iz1 * uv1[:, 1] + w2 * iz2 * uv2[:, 1]) * frag_z

    pixel_id = px_y * wpx + px_x
    order = np.lexsort((face_of, frag_z, pixel_id))
    pixel_sorted = pixel_id[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = pixel_sorted[1:] != pixel_sorted[:-1]
    win = order[first]

    th, tw = texture.shape[:2]
    tc = np.clip(np.rint(uu[win]), 0, tw - 1).astype(np.int64)
    tr = np.clip(np.rint(vv[win]), 0, th - 1).astype(np.int64)
    ys = pixel_id[win] // wpx
    xs = pixel_id[win] % wpx
    color[ys, xs] = texture[tr, tc].astype(np.float32)
    depth_buf[ys, xs] = frag_z[win]
    return RenderedImage(color=color, depth=depth_buf)


def splat_render(
    pos: torch.Tensor,
    tex: torch.Tensor,
    camera: CameraPose,
    sigma_px: float = 1.1,
    depth_sharpness: float = 8.0,
    background=None,
    chunk: int = 1024,
) -> torch.Tensor:
    """Differentiable Gaussian point splatting; gradients reach pos and tex.

    Each texel becomes a screen-space Gaussian weighted by exp(-k * depth)
    so nearer points dominate softly. Points behind the camera contribute
    nothing. Returns an (H', W', 3) image tensor.
    """
    if pos.shape != tex.shape or pos.ndim != 3 or pos.shape[2] != 3:
        raise MapError(f"splat_render: bad shapes {tuple(pos.shape)} / {tuple(tex.shape)}")
    dtype = pos.dtype
    dev = pos.device
    wpx, hpx = camera.size
    R = torch.as_tensor(camera.R, dtype=dtype, device=dev)
    t = torch.as_tensor(camera.t, dtype=dtype, device=dev)
    pts = pos.reshape(-1, 3)
    cols = tex.reshape(-1, 3)
    cam = pts @ R.T + t
    z = cam[:, 2]
    visible = z > 1e-6
    zs = torch.where(visible, z, torch.ones_like(z))
    px = camera.f * cam[:, 0] / zs + camera.pp[0]
    py = camera.f * cam[:, 1] / zs + camera.pp[1]

    zmin = zs[visible].min().detach() if bool(visible.any()) else torch.tensor(1.0, dtype=dtype)
    depth_w = torch.exp(-depth_sharpness * (zs - zmin)) * visible.to(dtype)

    gy, gx = torch.meshgrid(
        torch.arange(hpx, dtype=dtype, device=dev) + 0.5,
        torch.arange(wpx, dtype=dtype, device=dev) + 0.5,
        indexing="ij",
    )
    gx = gx.reshape(-1)
    gy = gy.reshape(-1)
    inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px)
    num = torch.zeros(hpx * wpx, 3, dtype=dtype, device=dev)
    den = torch.zeros(hpx * wpx, dtype=dtype, device=dev)
    n = pts.shape[0]
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dx = gx[None, :] - px[lo:hi, None]
        dy = gy[None, :] - py[lo:hi, None]
        w = torch.exp(-(dx * dx + dy * dy) * inv2s2) * depth_w[lo:hi, None]
        num = num + (w[:, :, None] * cols[lo:hi, None, :]).sum(dim=0)
        den = den + w.sum(dim=0)
    bg = BACKGROUND if background is None else background
    bg = torch.as_tensor(bg, dtype=dtype, device=dev)
    w_bg = 0.05
    img = (num + w_bg * bg[None, :]) / (den + w_bg)[:, None]
    return img.reshape(hpx, wpx, 3)


def image_to_png_bytes(img: np.ndarray) -> bytes:
    from io import BytesIO

    from PIL import Image

    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    byte_img = (arr * 255.0 + 0.5).astype(np.uint8)
    buf = BytesIO()
    Image.fromarray(byte_img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_image(blob: bytes) -> np.ndarray:
    from io import BytesIO

    from PIL import Image

    img = Image.open(BytesIO(blob)).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0
