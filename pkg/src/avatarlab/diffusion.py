"""Latent diffusion over identity codes.

Two denoisers share one U-Net body over the 4x16x16 whitened latents:
the geometry model (text-conditioned) and the texture model, which
additionally receives multi-scale residual features from a geometry
injector (normal map, displacement map, raw geometry latent, or
nothing). Injector output projections are zero-initialized, so an
untrained injector — or mode "none" — leaves the texture model exactly
unconditional.

Schedule and samplers follow the usual discrete formulation:
    z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps
with a generalized (eta-parameterized) reverse step whose eta=0 limit is
deterministic and eta=1 limit matches the ancestral posterior variance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import DiffusionConfig
from .prompts import PROMPT_DIM
from .tensorio import config_hash, load_state_dict, read_json, save_state_dict
from .uvmaps import MapError, box_resample, displacement_from_position, normal_from_position

COND_MODES = ("norm", "disp", "none", "latent")


# ---------------------------------------------------------------------------
# schedule and closed-form process math (numpy, float64)


@dataclass
class NoiseSchedule:
    T: int
    beta: np.ndarray  # (T,)
    alpha: np.ndarray
    alpha_bar: np.ndarray
    eta: float = 0.0

    def abar(self, t: int) -> float:
        """Cumulative signal coefficient; t=0 is defined as 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])


def make_schedule(
    T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02, eta: float = 0.0
) -> NoiseSchedule:
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise MapError(f"invalid beta bounds [{beta_start}, {beta_end}]")
    if T < 1:
        raise MapError(f"schedule needs T >= 1, got {T}")
    if not (0.0 <= eta <= 1.0):
        raise MapError(f"eta must lie in [0, 1], got {eta}")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha), eta=eta)


def forward_noise(z0, t, eps, sched: NoiseSchedule):
    """z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps; t may be int or a
    per-sample integer tensor/array in [0, T]."""
    if torch.is_tensor(z0):
        tt = torch.as_tensor(t, device=z0.device).reshape(-1)
        if int(tt.min()) < 0 or int(tt.max()) > sched.T:
            raise MapError(f"t out of range [0, {sched.T}]")
        abar_all = torch.from_numpy(
            np.concatenate([[1.0], sched.alpha_bar])
        ).to(z0.dtype)
        ab = abar_all[tt].reshape(-1, *([1] * (z0.ndim - 1)))
        return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps
    t = int(t)
    if not (0 <= t <= sched.T):
        raise MapError(f"t out of range [0, {sched.T}]")
    ab = sched.abar(t)
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def sampler_step(z_t, eps_hat, t: int, sched: NoiseSchedule, noise=None, t_prev: int | None = None):
    """One generalized reverse step t -> t_prev (default t-1).

    Predicts z0_hat = (z_t - sqrt(1-abar_t) eps_hat)/sqrt(abar_t), then
    moves to t_prev with stochasticity eta; the step into t_prev = 0
    returns z0_hat exactly (no noise is ever added on the last step).
    """
    if t < 1:
        raise MapError(f"sampler_step needs t >= 1, got {t}")
    t_prev = t - 1 if t_prev is None else t_prev
    if not (0 <= t_prev < t):
        raise MapError(f"t_prev must lie in [0, {t}), got {t_prev}")
    ab_t = sched.abar(t)
    ab_p = sched.abar(t_prev)
    sqrt = math.sqrt
    z0_hat = (z_t - sqrt(1.0 - ab_t) * eps_hat) / sqrt(ab_t)
    if t_prev == 0:
        return z0_hat
    sigma = sched.eta * sqrt((1.0 - ab_p) / (1.0 - ab_t)) * sqrt(1.0 - ab_t / ab_p)
    direction = sqrt(max(1.0 - ab_p - sigma**2, 0.0)) * eps_hat
    out = sqrt(ab_p) * z0_hat + direction
    if sigma > 0.0:
        if noise is None:
            raise MapError("eta > 0 requires a noise sample")
        out = out + sigma * noise
    return out


def sample_timesteps(T: int, steps: int) -> list[int]:
    """Strided descending subsequence of [1, T] ending at 1."""
    if steps < 1:
        raise MapError(f"steps must be >= 1, got {steps}")
    ts = np.unique(np.linspace(1, T, steps).round().astype(int))[::-1]
    return [int(t) for t in ts]


# ---------------------------------------------------------------------------
# denoiser network


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal embedding of integer timesteps."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.float().reshape(-1, 1) * freqs.reshape(1, -1)
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def _gn(ch):
    groups = 8
    while ch % groups:
        groups //= 2
    return nn.GroupNorm(groups, ch)


class CondBlock(nn.Module):
    """Residual conv block with feature-wise (scale, shift) conditioning."""

    def __init__(self, cin: int, cout: int, cond_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm1 = _gn(cout)
        self.film = nn.Linear(cond_dim, 2 * cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.norm2 = _gn(cout)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, cond):
        h = F.silu(self.norm1(self.conv1(x)))
        scale, shift = torch.chunk(self.film(cond), 2, dim=-1)
        h = h * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class LatentUNet(nn.Module):
    """Small two-level U-Net over (B, z, 16, 16) latents.

    Injection features, when given, are added to the stage outputs at
    resolutions 16 and 8 — zero features reproduce the plain forward
    pass bit-exactly (pure additive residuals).
    """

    def __init__(self, z_ch: int = 4, c: int = 48, cond_dim: int = 128, prompt_dim: int = PROMPT_DIM):
        super().__init__()
        self.c = c
        self.time_mlp = nn.Sequential(nn.Linear(64, cond_dim), nn.SiLU(), nn.Linear(cond_dim, cond_dim))
        self.prompt_mlp = nn.Linear(prompt_dim, cond_dim)
        self.conv_in = nn.Conv2d(z_ch, c, 3, padding=1)
        self.enc16 = CondBlock(c, c, cond_dim)
        self.down = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.enc8 = CondBlock(2 * c, 2 * c, cond_dim)
        self.mid = CondBlock(2 * c, 2 * c, cond_dim)
        self.up = nn.Conv2d(2 * c, c, 3, padding=1)
        self.dec16 = CondBlock(2 * c, c, cond_dim)
        self.norm_out = _gn(c)
        self.conv_out = nn.Conv2d(c, z_ch, 3, padding=1)

    def forward(self, z, t, prompt_emb, inj: dict | None = None):
        if z.ndim != 4:
            raise MapError(f"latent batch must be 4-d, got {tuple(z.shape)}")
        tt = torch.as_tensor(t, device=z.device).reshape(-1)
        if tt.numel() == 1:
            tt = tt.expand(z.shape[0])
        cond = F.silu(self.time_mlp(timestep_embedding(tt, 64)) + self.prompt_mlp(prompt_emb))
        h16 = self.enc16(self.conv_in(z), cond)
        if inj is not None and 16 in inj:
            h16 = h16 + inj[16]
        h8 = self.enc8(F.silu(self.down(h16)), cond)
        if inj is not None and 8 in inj:
            h8 = h8 + inj[8]
        h8 = self.mid(h8, cond)
        u = self.up(F.interpolate(h8, scale_factor=2, mode="nearest"))
        h = self.dec16(torch.cat([u, h16], dim=1), cond)
        return self.conv_out(F.silu(self.norm_out(h)))


class GeoInjector(nn.Module):
    """Conditioning-map encoder with zero-initialized output heads."""

    IN_CH = {"norm": 3, "disp": 1, "latent": 4}

    def __init__(self, mode: str, c: int = 48):
        super().__init__()
        if mode not in COND_MODES:
            raise MapError(f"unknown conditioning mode {mode!r}; pick from {COND_MODES}")
        self.mode = mode
        self.c = c
        if mode != "none":
            cin = self.IN_CH[mode]
            self.stem = nn.Sequential(
                nn.Conv2d(cin, c, 3, padding=1), _gn(c), nn.SiLU(),
                nn.Conv2d(c, c, 3, padding=1), _gn(c), nn.SiLU(),
            )
            self.down = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
            self.head16 = nn.Conv2d(c, c, 1)
            self.head8 = nn.Conv2d(2 * c, 2 * c, 1)
            nn.init.zeros_(self.head16.weight)
            nn.init.zeros_(self.head16.bias)
            nn.init.zeros_(self.head8.weight)
            nn.init.zeros_(self.head8.bias)

    def forward(self, cond: torch.Tensor | None, batch: int | None = None):
        """cond: (B, in_ch, 16, 16); mode "none" (cond ignored) -> zeros."""
        if self.mode == "none":
            if batch is None:
                raise MapError("none-mode injection needs an explicit batch size")
            zero16 = torch.zeros(batch, self.c, 16, 16)
            zero8 = torch.zeros(batch, 2 * self.c, 8, 8)
            return {16: zero16, 8: zero8}
        if cond is None or cond.ndim != 4 or cond.shape[1] != self.IN_CH[self.mode]:
            got = None if cond is None else tuple(cond.shape)
            raise MapError(f"{self.mode}-mode conditioning needs (B, {self.IN_CH[self.mode]}, 16, 16), got {got}")
        f16 = self.stem(cond)
        f8 = F.silu(self.down(f16))
        return {16: self.head16(f16), 8: self.head8(f8)}


class TexDenoiser(nn.Module):
    """Texture-latent denoiser: U-Net plus geometry injection.

    Carries the displacement reference surface (dataset-mean neutral
    geometry and its normals) as buffers so checkpoints are
    self-contained for disp-mode conditioning.
    """

    def __init__(self, cond_mode: str = "norm", z_ch: int = 4, c: int = 48, res: int = 64):
        super().__init__()
        self.unet = LatentUNet(z_ch=z_ch, c=c)
        self.injector = GeoInjector(cond_mode, c=c)
        self.cond_mode = cond_mode
        self.register_buffer("ref_pos", torch.zeros(res, res, 3))
        self.register_buffer("ref_normal", torch.zeros(res, res, 3))

    def set_reference(self, mean_pos: np.ndarray):
        normals, _ = normal_from_position(mean_pos)
        self.ref_pos.copy_(torch.from_numpy(np.asarray(mean_pos, dtype=np.float32)))
        self.ref_normal.copy_(torch.from_numpy(normals))

    def conditioning(self, g_map: np.ndarray | None, z_geo: np.ndarray | None = None) -> torch.Tensor | None:
        """Build the injector input from a decoded geometry map (or raw
        latent for mode "latent"); returns None for mode "none"."""
        if self.cond_mode == "none":
            return None
        if self.cond_mode == "latent":
            if z_geo is None:
                raise MapError("latent-mode conditioning needs z_geo")
            z = np.asarray(z_geo, dtype=np.float32)
            return torch.from_numpy(z[None] if z.ndim == 3 else z)
        if g_map is None:
            raise MapError(f"{self.cond_mode}-mode conditioning needs a geometry map")
        lat_hw = 16
        if self.cond_mode == "norm":
            normals, _ = normal_from_position(np.asarray(g_map, dtype=np.float32))
            small = box_resample(normals, lat_hw, lat_hw)
            norm = np.linalg.norm(small, axis=-1, keepdims=True)
            small = small / np.maximum(norm, 1e-6)
            return torch.from_numpy(small.astype(np.float32)).permute(2, 0, 1)[None]
        # disp
        disp = displacement_from_position(
            np.asarray(g_map, dtype=np.float32),
            self.ref_pos.numpy(),
            self.ref_normal.numpy(),
        )
        small = box_resample(disp, lat_hw, lat_hw)
        return torch.from_numpy(small.astype(np.float32)).permute(2, 0, 1)[None]

    def forward(self, z, t, prompt_emb, cond: torch.Tensor | None):
        inj = self.injector(cond, batch=z.shape[0])
        return self.unet(z, t, prompt_emb, inj)


class GeoDenoiser(nn.Module):
    def __init__(self, z_ch: int = 4, c: int = 48):
        super().__init__()
        self.unet = LatentUNet(z_ch=z_ch, c=c)

    def forward(self, z, t, prompt_emb):
        return self.unet(z, t, prompt_emb)


# ---------------------------------------------------------------------------
# sampling


def cfg_predict(predict, z, t, emb_cond: torch.Tensor, emb_null: torch.Tensor, scale: float):
    """Classifier-free guidance: eps = eps_null + s (eps_cond - eps_null).

    `predict` is a closure (z, t, emb) -> eps so the same helper serves
    both denoisers. scale=1 short-circuits to the conditional branch.
    """
    eps_c = predict(z, t, emb_cond)
    if scale == 1.0:
        return eps_c
    eps_n = predict(z, t, emb_null)
    return eps_n + scale * (eps_c - eps_n)


@torch.no_grad()
def _sample_latent(
    predict,
    emb_cond: torch.Tensor,
    emb_null: torch.Tensor,
    sched: NoiseSchedule,
    steps: int,
    seed: int,
    guidance_scale: float,
    shape=(1, 4, 16, 16),
    z_known: torch.Tensor | None = None,
    m_latent: torch.Tensor | None = None,
) -> torch.Tensor:
    """Shared reverse loop; optionally RePaint-style masked resampling.

    m_latent marks the *generated* region (1 = generate); where it is 0
    the trajectory is pinned to forward-noised z_known at every step.
    """
    gen = torch.Generator().manual_seed(int(seed))
    z = torch.randn(shape, generator=gen)
    inpaint = z_known is not None and m_latent is not None
    if inpaint:
        keep = 1.0 - m_latent
        noise_t = torch.randn(shape, generator=gen)
        z = m_latent * z + keep * forward_noise(z_known, sched.T, noise_t, sched)
    ts = sample_timesteps(sched.T, steps)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        noise = torch.randn(shape, generator=gen) if sched.eta > 0 and t_prev > 0 else None
        eps = cfg_predict(predict, z, t, emb_cond, emb_null, guidance_scale)
        z = sampler_step(z, eps, t, sched, noise=noise, t_prev=t_prev)
        if inpaint:
            if t_prev > 0:
                repl = forward_noise(z_known, t_prev, torch.randn(shape, generator=gen), sched)
            else:
                repl = z_known
            z = m_latent * z + keep * repl
    return z


def sample_geo(
    gm: GeoDenoiser,
    prompt_emb: np.ndarray,
    null_emb: np.ndarray,
    steps: int = 20,
    seed: int = 0,
    guidance_scale: float = 2.0,
    sched: NoiseSchedule | None = None,
) -> np.ndarray:
    """Text-conditioned geometry latent; deterministic given seed."""
    sched = sched or make_schedule()
    gm.eval()
    ec = torch.from_numpy(np.asarray(prompt_emb, dtype=np.float32)).reshape(1, -1)
    en = torch.from_numpy(np.asarray(null_emb, dtype=np.float32)).reshape(1, -1)
    z = _sample_latent(lambda z, t, e: gm(z, t, e), ec, en, sched, steps, seed, guidance_scale)
    return z[0].numpy().astype(np.float32)


def sample_tex(
    gctm: TexDenoiser,
    prompt_emb: np.ndarray,
    null_emb: np.ndarray,
    g_map: np.ndarray | None = None,
    z_geo: np.ndarray | None = None,
    steps: int = 20,
    seed: int = 0,
    guidance_scale: float = 2.0,
    sched: NoiseSchedule | None = None,
) -> np.ndarray:
    """Geometry-conditioned texture latent."""
    sched = sched or make_schedule()
    gctm.eval()
    cond = gctm.conditioning(g_map, z_geo)
    ec = torch.from_numpy(np.asarray(prompt_emb, dtype=np.float32)).reshape(1, -1)
    en = torch.from_numpy(np.asarray(null_emb, dtype=np.float32)).reshape(1, -1)
    z = _sample_latent(
        lambda z, t, e: gctm(z, t, e, cond), ec, en, sched, steps, seed, guidance_scale
    )
    return z[0].numpy().astype(np.float32)


def sample_inpaint(
    model,
    z_known: np.ndarray,
    m_latent: np.ndarray,
    prompt_emb: np.ndarray,
    null_emb: np.ndarray,
    steps: int = 20,
    seed: int = 0,
    guidance_scale: float = 2.0,
    sched: NoiseSchedule | None = None,
    g_map: np.ndarray | None = None,
    z_geo_cond: np.ndarray | None = None,
) -> np.ndarray:
    """Masked latent resampling. m_latent (16, 16) in [0,1], 1 = generate.

    The known region is re-noised to the current step at every
    iteration, so the generated region is synthesized in context; final
    UV blending for the hard outside-mask guarantee happens downstream
    in map space.
    """
    sched = sched or make_schedule()
    zk = torch.from_numpy(np.asarray(z_known, dtype=np.float32))[None]
    m = torch.from_numpy(np.asarray(m_latent, dtype=np.float32)).reshape(1, 1, 16, 16)
    if float(m.min()) < 0.0 or float(m.max()) > 1.0:
        raise MapError("latent mask must lie in [0, 1]")
    ec = torch.from_numpy(np.asarray(prompt_emb, dtype=np.float32)).reshape(1, -1)
    en = torch.from_numpy(np.asarray(null_emb, dtype=np.float32)).reshape(1, -1)
    if isinstance(model, TexDenoiser):
        cond = model.conditioning(g_map, z_geo_cond)
        predict = lambda z, t, e: model(z, t, e, cond)  # noqa: E731
    else:
        predict = lambda z, t, e: model(z, t, e)  # noqa: E731
    model.eval()
    with torch.no_grad():
        z = _sample_latent(
            predict, ec, en, sched, steps, seed, guidance_scale,
            z_known=zk, m_latent=m,
        )
    return z[0].numpy().astype(np.float32)


# ---------------------------------------------------------------------------
# training


def train_denoiser(
    model: nn.Module,
    latents: torch.Tensor,  # (N, 4, 16, 16) whitened eval-mode codes
    prompt_embs: torch.Tensor,  # (N, PROMPT_DIM)
    null_emb: torch.Tensor,  # (PROMPT_DIM,)
    cfg: DiffusionConfig,
    conds: torch.Tensor | None = None,  # (N, in_ch, 16, 16) for TexDenoiser
    log_every: int = 0,
) -> list[float]:
    """Noise-prediction training with fixed learning rate; returns the
    per-step loss history. 10% of samples see the null embedding."""
    if latents.shape[0] == 0:
        raise MapError("train_denoiser: no latents")
    torch.manual_seed(cfg.seed)
    torch.set_num_threads(1)
    sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.eta)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    n = latents.shape[0]
    history: list[float] = []
    model.train()
    for step in range(cfg.steps):
        idx = torch.from_numpy(rng.integers(0, n, size=min(cfg.batch_size, n)))
        z0 = latents[idx]
        emb = prompt_embs[idx].clone()
        null_rows = torch.from_numpy(rng.random(len(idx)) < cfg.null_prob)
        emb[null_rows] = null_emb
        t = torch.from_numpy(rng.integers(1, sched.T + 1, size=len(idx)))
        eps = torch.randn(z0.shape, generator=gen)
        z_t = forward_noise(z0, t, eps, sched)
        if conds is not None:
            eps_hat = model(z_t, t, emb, conds[idx])
        elif isinstance(model, TexDenoiser):
            eps_hat = model(z_t, t, emb, None)
        else:
            eps_hat = model(z_t, t, emb)
        loss = F.mse_loss(eps_hat, eps)
        if not torch.isfinite(loss):
            raise MapError(f"diffusion training diverged at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
        if log_every and step % log_every == 0:
            print(f"[diffusion] step {step}: loss={history[-1]:.4f}")
    model.eval()
    return history


def encode_corpus(caae, sets, embedder, batch: int = 64) -> dict:
    """Evaluation-mode whitened codes plus caption embeddings for a corpus."""
    from .autoencoder import maps_to_tensor
    from .prompts import embed_text

    caae.eval()
    g = maps_to_tensor([cs.identity.g_neu for cs in sets])
    t = maps_to_tensor([cs.identity.t_neu for cs in sets])
    zg, zt = [], []
    with torch.no_grad():
        for lo in range(0, len(sets), batch):
            zg.append(caae.geo_code(g[lo : lo + batch]))
            zt.append(caae.tex_code(t[lo : lo + batch]))
    embs = torch.from_numpy(
        np.stack([embed_text(cs.identity.caption, embedder) for cs in sets])
    )
    return {
        "z_geo": torch.cat(zg),
        "z_tex": torch.cat(zt),
        "embs": embs,
        "null": torch.from_numpy(embedder.null_embedding()),
    }


def train_gm(sets, caae, embedder, cfg: DiffusionConfig, caae_hash: str, ckpt_dir=None):
    """Geometry prior over whitened z_geo codes."""
    corpus = encode_corpus(caae, sets, embedder)
    model = GeoDenoiser(c=cfg.base_channels)
    history = train_denoiser(model, corpus["z_geo"], corpus["embs"], corpus["null"], cfg)
    meta = diffusion_meta("gm", cfg, history, caae_hash, extra={"embedder_seed": embedder.seed})
    if ckpt_dir is not None:
        save_denoiser(model, meta, ckpt_dir)
    return model, history


def train_gctm(sets, caae, embedder, cfg: DiffusionConfig, caae_hash: str, ckpt_dir=None):
    """Texture prior conditioned on ground-truth-derived geometry maps."""
    from .synthcap import mean_neutral_position

    corpus = encode_corpus(caae, sets, embedder)
    model = TexDenoiser(cond_mode=cfg.cond_mode, c=cfg.base_channels)
    model.set_reference(mean_neutral_position(sets))
    conds = None
    if cfg.cond_mode != "none":
        rows = [
            model.conditioning(
                cs.identity.g_neu if cfg.cond_mode != "latent" else None,
                corpus["z_geo"][i].numpy() if cfg.cond_mode == "latent" else None,
            )[0]
            for i, cs in enumerate(sets)
        ]
        conds = torch.stack(rows)
    history = train_denoiser(
        model, corpus["z_tex"], corpus["embs"], corpus["null"], cfg, conds=conds
    )
    meta = diffusion_meta(
        "gctm", cfg, history, caae_hash,
        extra={"cond_mode": cfg.cond_mode, "embedder_seed": embedder.seed},
    )
    if ckpt_dir is not None:
        save_denoiser(model, meta, ckpt_dir)
    return model, history


def diffusion_meta(kind: str, cfg: DiffusionConfig, history: list[float], caae_hash: str, extra=None) -> dict:
    meta = {
        "kind": kind,
        "config": asdict(cfg),
        "config_hash": config_hash(asdict(cfg)),
        "caae_hash": caae_hash,
        "seed": cfg.seed,
        "history_head": history[:100],
        "history_tail": history[-100:],
        "final_loss": history[-1] if history else None,
    }
    if extra:
        meta.update(extra)
    return meta


def save_denoiser(model: nn.Module, meta: dict, ckpt_dir):
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    save_state_dict(Path(ckpt_dir), state, meta)


def load_gm(ckpt_dir) -> tuple[GeoDenoiser, dict]:
    ckpt_dir = Path(ckpt_dir)
    meta = read_json(ckpt_dir / "meta.json")
    if meta.get("kind") != "gm":
        raise MapError(f"{ckpt_dir}: not a GM checkpoint (kind={meta.get('kind')!r})")
    model = GeoDenoiser(c=meta["config"]["base_channels"])
    state, _ = load_state_dict(ckpt_dir)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in state.items()})
    model.eval()
    return model, meta


def load_gctm(ckpt_dir) -> tuple[TexDenoiser, dict]:
    ckpt_dir = Path(ckpt_dir)
    meta = read_json(ckpt_dir / "meta.json")
    if meta.get("kind") != "gctm":
        raise MapError(f"{ckpt_dir}: not a GCTM checkpoint (kind={meta.get('kind')!r})")
    model = TexDenoiser(cond_mode=meta["cond_mode"], c=meta["config"]["base_channels"])
    state, _ = load_state_dict(ckpt_dir)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in state.items()})
    model.eval()
    return model, meta
