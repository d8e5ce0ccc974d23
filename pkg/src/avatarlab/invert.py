"""Personalization by latent-space inversion.

Model weights stay frozen; gradient descent runs on the identity code
(z_geo, z_tex) against map-space L1 (and optionally rendered-view L1
through the differentiable splat renderer), plus a small L2 prior that
keeps codes near the region the diffusion prior populates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .autoencoder import CAAE, maps_to_tensor, tensor_to_map
from .render import CameraPose, splat_render
from .uvmaps import MapError


@dataclass
class InversionTargets:
    g_map: np.ndarray | None = None
    t_map: np.ndarray | None = None
    views: list[tuple[CameraPose, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if self.g_map is None and self.t_map is None and not self.views:
            raise MapError("inversion needs at least one target (map or view)")


@dataclass
class InversionConfig:
    steps: int = 300
    lr: float = 1e-2
    weight_prior: float = 1e-3
    weight_views: float = 1.0


@dataclass
class InversionResult:
    z_geo: np.ndarray
    z_tex: np.ndarray
    trace: list[float]
    best_step: int
    grad_norm_max: float
    step_norm_max: float


def init_latents(caae: CAAE, t_approx: np.ndarray, g_approx: np.ndarray):
    """Evaluation-mode encoder estimate; the standard starting point."""
    z_geo, z_tex = caae.encode_maps_np(np.asarray(g_approx), np.asarray(t_approx))
    return z_geo, z_tex


def _check_views(caae: CAAE, z_geo: torch.Tensor, views) -> None:
    """Reject when every view faces away from the decoded surface."""
    if not views:
        return
    with torch.no_grad():
        pos = tensor_to_map(caae.decode_geo(z_geo))
    pts = pos.reshape(-1, 3).astype(np.float64)
    for cam, _ in views:
        cam_z = (pts @ np.asarray(cam.R).T + np.asarray(cam.t))[:, 2]
        if (cam_z > 1e-6).any():
            return
    raise MapError("all target views place the surface behind the camera")


def invert(
    caae: CAAE,
    targets: InversionTargets,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    cfg: InversionConfig | None = None,
) -> InversionResult:
    """Optimize the identity code against the targets; best iterate wins."""
    cfg = cfg or InversionConfig()
    caae.eval()
    for p in caae.parameters():
        p.requires_grad_(False)

    if init is None:
        t0 = targets.t_map
        g0 = targets.g_map
        if t0 is None or g0 is None:
            zg0 = np.zeros((caae.cfg.z_channels, caae.cfg.latent_hw, caae.cfg.latent_hw), np.float32)
            init = (zg0, zg0.copy())
        else:
            init = init_latents(caae, t0, g0)
    z_geo = torch.from_numpy(np.asarray(init[0], dtype=np.float32)).clone()[None].requires_grad_(True)
    z_tex = torch.from_numpy(np.asarray(init[1], dtype=np.float32)).clone()[None].requires_grad_(True)
    _check_views(caae, z_geo.detach(), targets.views)

    tg = maps_to_tensor([targets.g_map])[0] if targets.g_map is not None else None
    tt = maps_to_tensor([targets.t_map])[0] if targets.t_map is not None else None
    view_targets = [
        (cam, torch.from_numpy(np.asarray(img, dtype=np.float32))) for cam, img in targets.views
    ]

    opt = torch.optim.Adam([z_geo, z_tex], lr=cfg.lr)
    trace: list[float] = []
    best = (float("inf"), init[0].copy(), init[1].copy(), -1)
    grad_max = 0.0
    step_max = 0.0
    for step in range(cfg.steps):
        g_hat = caae.decode_geo(z_geo)[0]
        t_hat = caae.decode_tex(z_tex)[0]
        loss = torch.zeros(())
        if tg is not None:
            loss = loss + (g_hat - tg).abs().mean()
        if tt is not None:
            loss = loss + (t_hat - tt).abs().mean()
        for cam, img in view_targets:
            rendered = splat_render(g_hat.permute(1, 2, 0), t_hat.permute(1, 2, 0), cam)
            loss = loss + cfg.weight_views * (rendered - img).abs().mean()
        loss = loss + cfg.weight_prior * (z_geo.square().mean() + z_tex.square().mean())

        value = float(loss.detach())
        trace.append(value)
        if value < best[0]:
            best = (value, z_geo[0].detach().numpy().copy(), z_tex[0].detach().numpy().copy(), step)

        prev_g = z_geo.detach().clone()
        prev_t = z_tex.detach().clone()
        opt.zero_grad(set_to_none=True)
        loss.backward()
        grad_max = max(
            grad_max,
            float(torch.cat([z_geo.grad.reshape(-1), z_tex.grad.reshape(-1)]).norm()),
        )
        opt.step()
        step_max = max(
            step_max,
            float(
                torch.cat(
                    [(z_geo.detach() - prev_g).reshape(-1), (z_tex.detach() - prev_t).reshape(-1)]
                ).norm()
            ),
        )

    return InversionResult(
        z_geo=best[1].astype(np.float32),
        z_tex=best[2].astype(np.float32),
        trace=trace,
        best_step=best[3],
        grad_norm_max=grad_max,
        step_norm_max=step_max,
    )
