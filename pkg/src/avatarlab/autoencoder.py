"""Codec avatar autoencoder.

Two identity VAEs (geometry, texture) over 64x64 UV maps with spatial
4x16x16 latents, plus the expression branch: a deterministic encoder to
a 16-d expression code, a hyper-network that turns decoded neutral maps
into multi-scale identity features, and an expression decoder modulated
feature-wise (scale/shift) by those features. A small discriminator on
neutral-frame expression codes adversarially removes the capture-source
color shift.

Latent whitening: after training, per-dimension mean/std of the
evaluation-mode encodings are stored as buffers; public codes are
whitened and `decode_*` un-whitens first. Downstream consumers (the
diffusion prior, the store, interpolation) only ever see whitened codes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import CAAEConfig
from .synthcap import CaptureSet
from .tensorio import config_hash, load_state_dict, read_json, save_state_dict, write_json
from .uvmaps import MapError


class DiagonalGaussian:
    """Posterior q(z|x) = N(mean, exp(logvar)); logvar clamped for sanity."""

    def __init__(self, params: torch.Tensor):
        mean, logvar = torch.chunk(params, 2, dim=1)
        self.mean = mean
        self.logvar = torch.clamp(logvar, -30.0, 20.0)
        self.std = torch.exp(0.5 * self.logvar)

    def sample(self, generator: torch.Generator | None = None) -> torch.Tensor:
        noise = torch.randn(
            self.mean.shape, generator=generator, dtype=self.mean.dtype, device=self.mean.device
        )
        return self.mean + self.std * noise

    def kl(self) -> torch.Tensor:
        """Closed-form KL(q || N(0, I)), mean over batch and dimensions."""
        return 0.5 * torch.mean(self.mean**2 + self.logvar.exp() - 1.0 - self.logvar)


def _gn(ch: int) -> nn.GroupNorm:
    groups = 8
    while ch % groups:
        groups //= 2
    return nn.GroupNorm(groups, ch)


class MapEncoder(nn.Module):
    """(B, 3, 64, 64) -> posterior over (B, z, 16, 16)."""

    def __init__(self, channels=(16, 32, 64), z_channels=4):
        super().__init__()
        c0, c1, c2 = channels
        self.net = nn.Sequential(
            nn.Conv2d(3, c0, 3, padding=1),
            _gn(c0), nn.SiLU(),
            nn.Conv2d(c0, c1, 3, stride=2, padding=1),
            _gn(c1), nn.SiLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            _gn(c2), nn.SiLU(),
            nn.Conv2d(c2, c2, 3, padding=1),
            _gn(c2), nn.SiLU(),
            nn.Conv2d(c2, 2 * z_channels, 1),
        )

    def forward(self, x: torch.Tensor) -> DiagonalGaussian:
        return DiagonalGaussian(self.net(x))


class MapDecoder(nn.Module):
    """(B, z, 16, 16) -> (B, 3, 64, 64); bounded=True squashes into [0,1]."""

    def __init__(self, channels=(16, 32, 64), z_channels=4, bounded=False):
        super().__init__()
        c0, c1, c2 = channels
        self.bounded = bounded
        self.net = nn.Sequential(
            nn.Conv2d(z_channels, c2, 3, padding=1),
            _gn(c2), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c2, c1, 3, padding=1),
            _gn(c1), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c1, c0, 3, padding=1),
            _gn(c0), nn.SiLU(),
            nn.Conv2d(c0, 3, 3, padding=1),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        out = self.net(z)
        return torch.sigmoid(out) if self.bounded else out


class ExpressionEncoder(nn.Module):
    """(T_exp, G_exp) stacked to 6 channels -> 16-d expression code."""

    def __init__(self, exp_dim=16):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(6, 16, 3, stride=2, padding=1),
            _gn(16), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            _gn(32), nn.SiLU(),
            nn.Conv2d(32, 48, 3, stride=2, padding=1),
            nn.SiLU(),
        )
        self.head = nn.Linear(48, exp_dim)

    def forward(self, t_exp: torch.Tensor, g_exp: torch.Tensor) -> torch.Tensor:
        h = self.conv(torch.cat([t_exp, g_exp], dim=1))
        return self.head(h.mean(dim=(2, 3)))


class HyperNet(nn.Module):
    """Decoded neutral maps -> multi-scale identity features (64, 32, 16)."""

    def __init__(self, widths=(12, 24, 48)):
        super().__init__()
        w64, w32, w16 = widths
        self.s64 = nn.Sequential(nn.Conv2d(6, w64, 3, padding=1), _gn(w64), nn.SiLU())
        self.s32 = nn.Sequential(nn.Conv2d(w64, w32, 3, stride=2, padding=1), _gn(w32), nn.SiLU())
        self.s16 = nn.Sequential(nn.Conv2d(w32, w16, 3, stride=2, padding=1), _gn(w16), nn.SiLU())

    def forward(self, t_neu: torch.Tensor, g_neu: torch.Tensor) -> dict[int, torch.Tensor]:
        f64 = self.s64(torch.cat([t_neu, g_neu], dim=1))
        f32 = self.s32(f64)
        f16 = self.s16(f32)
        return {64: f64, 32: f32, 16: f16}


class _FiLM(nn.Module):
    """Feature-wise scale/shift computed from an identity feature grid."""

    def __init__(self, feat_ch: int, ch: int):
        super().__init__()
        self.proj = nn.Conv2d(feat_ch, 2 * ch, 1)

    def forward(self, x: torch.Tensor, feat: torch.Tensor) -> torch.Tensor:
        scale, shift = torch.chunk(self.proj(feat), 2, dim=1)
        return x * (1.0 + scale) + shift


class ExpressionDecoder(nn.Module):
    """16-d code + identity features -> (G_exp, T_exp) maps.

    Identity enters only through the FiLM terms; the shift at full
    resolution is what lets the decoder reproduce identity detail.
    """

    def __init__(self, exp_dim=16, hyper_widths=(12, 24, 48)):
        super().__init__()
        w64, w32, w16 = hyper_widths
        self.stem = nn.Linear(exp_dim, 40 * 8 * 8)
        self.c16 = nn.Conv2d(40, 32, 3, padding=1)
        self.n16 = _gn(32)
        self.f16 = _FiLM(w16, 32)
        self.c32 = nn.Conv2d(32, 24, 3, padding=1)
        self.n32 = _gn(24)
        self.f32 = _FiLM(w32, 24)
        self.c64 = nn.Conv2d(24, 16, 3, padding=1)
        self.n64 = _gn(16)
        self.f64 = _FiLM(w64, 16)
        self.head = nn.Conv2d(16, 6, 3, padding=1)

    def forward(self, z_exp: torch.Tensor, feats: dict[int, torch.Tensor]):
        x = self.stem(z_exp).reshape(-1, 40, 8, 8)
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = F.silu(self.f16(self.n16(self.c16(x)), feats[16]))
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = F.silu(self.f32(self.n32(self.c32(x)), feats[32]))
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = F.silu(self.f64(self.n64(self.c64(x)), feats[64]))
        out = self.head(x)
        g = out[:, :3]
        t = torch.sigmoid(out[:, 3:])
        return g, t


class SourceDiscriminator(nn.Module):
    """Logistic classifier on expression codes: multiview (0) vs phone (1)."""

    def __init__(self, exp_dim=16):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(exp_dim, 32), nn.SiLU(), nn.Linear(32, 1))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z).squeeze(-1)


# ---------------------------------------------------------------------------


def maps_to_tensor(maps) -> torch.Tensor:
    """Stack (H, W, 3) numpy maps into a (B, 3, H, W) float tensor."""
    arr = np.stack([np.asarray(m, dtype=np.float32) for m in maps])
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def tensor_to_map(x: torch.Tensor) -> np.ndarray:
    """(3, H, W) or (1, 3, H, W) tensor back to an (H, W, 3) float32 map."""
    if x.ndim == 4:
        x = x[0]
    return x.detach().permute(1, 2, 0).contiguous().cpu().numpy().astype(np.float32)


class CAAE(nn.Module):
    def __init__(self, cfg: CAAEConfig | None = None):
        super().__init__()
        self.cfg = cfg or CAAEConfig()
        ch = tuple(self.cfg.channels)
        zc = self.cfg.z_channels
        self.geo_enc = MapEncoder(ch, zc)
        self.geo_dec = MapDecoder(ch, zc, bounded=False)
        self.tex_enc = MapEncoder(ch, zc)
        self.tex_dec = MapDecoder(ch, zc, bounded=True)
        self.exp_enc = ExpressionEncoder(self.cfg.exp_dim)
        self.hyper = HyperNet(tuple(self.cfg.exp_channels))
        self.exp_dec = ExpressionDecoder(self.cfg.exp_dim, tuple(self.cfg.exp_channels))
        self.disc = SourceDiscriminator(self.cfg.exp_dim)
        hw = self.cfg.latent_hw
        for name in ("geo_mu", "geo_sd", "tex_mu", "tex_sd"):
            init = torch.zeros(zc, hw, hw) if name.endswith("mu") else torch.ones(zc, hw, hw)
            self.register_buffer(f"lat_{name}", init)

    # -- identity path ------------------------------------------------------

    def _check_map_batch(self, x: torch.Tensor):
        res = self.cfg.latent_hw * 4
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != res or x.shape[3] != res:
            raise MapError(f"expected (B, 3, {res}, {res}) map batch, got {tuple(x.shape)}")

    def encode_geo(self, g: torch.Tensor) -> DiagonalGaussian:
        self._check_map_batch(g)
        return self.geo_enc(g)

    def encode_tex(self, t: torch.Tensor) -> DiagonalGaussian:
        self._check_map_batch(t)
        return self.tex_enc(t)

    def _whiten(self, z, mu, sd):
        return (z - mu[None]) / sd[None]

    def _unwhiten(self, z, mu, sd):
        return z * sd[None] + mu[None]

    def geo_code(self, g: torch.Tensor, sample: bool = False, generator=None) -> torch.Tensor:
        """Whitened geometry code; mean in eval style, sampled if asked."""
        post = self.encode_geo(g)
        z = post.sample(generator) if sample else post.mean
        return self._whiten(z, self.lat_geo_mu, self.lat_geo_sd)

    def tex_code(self, t: torch.Tensor, sample: bool = False, generator=None) -> torch.Tensor:
        post = self.encode_tex(t)
        z = post.sample(generator) if sample else post.mean
        return self._whiten(z, self.lat_tex_mu, self.lat_tex_sd)

    def _check_latent(self, z: torch.Tensor):
        zc, hw = self.cfg.z_channels, self.cfg.latent_hw
        if z.ndim != 4 or z.shape[1:] != (zc, hw, hw):
            raise MapError(f"expected (B, {zc}, {hw}, {hw}) latent, got {tuple(z.shape)}")

    def decode_geo(self, z: torch.Tensor) -> torch.Tensor:
        self._check_latent(z)
        return self.geo_dec(self._unwhiten(z, self.lat_geo_mu, self.lat_geo_sd))

    def decode_tex(self, z: torch.Tensor) -> torch.Tensor:
        self._check_latent(z)
        return self.tex_dec(self._unwhiten(z, self.lat_tex_mu, self.lat_tex_sd))

    # -- expression path ----------------------------------------------------

    def encode_exp(self, t_exp: torch.Tensor, g_exp: torch.Tensor) -> torch.Tensor:
        self._check_map_batch(t_exp)
        self._check_map_batch(g_exp)
        return self.exp_enc(t_exp, g_exp)

    def hypernet_features(self, t_neu_hat: torch.Tensor, g_neu_hat: torch.Tensor):
        return self.hyper(t_neu_hat, g_neu_hat)

    def decode_expression(self, z_exp: torch.Tensor, feats):
        return self.exp_dec(z_exp, feats)

    # -- numpy conveniences (single maps, eval mode) -------------------------

    @torch.no_grad()
    def encode_maps_np(self, g_neu: np.ndarray, t_neu: np.ndarray):
        g = maps_to_tensor([g_neu])
        t = maps_to_tensor([t_neu])
        return (
            self.geo_code(g)[0].cpu().numpy().astype(np.float32),
            self.tex_code(t)[0].cpu().numpy().astype(np.float32),
        )

    @torch.no_grad()
    def decode_maps_np(self, z_geo: np.ndarray, z_tex: np.ndarray):
        zg = torch.from_numpy(np.asarray(z_geo, dtype=np.float32))[None]
        zt = torch.from_numpy(np.asarray(z_tex, dtype=np.float32))[None]
        return tensor_to_map(self.decode_geo(zg)), tensor_to_map(self.decode_tex(zt))

    @torch.no_grad()
    def encode_exp_np(self, t_exp: np.ndarray, g_exp: np.ndarray) -> np.ndarray:
        z = self.encode_exp(maps_to_tensor([t_exp]), maps_to_tensor([g_exp]))
        return z[0].cpu().numpy().astype(np.float32)

    @torch.no_grad()
    def decode_expression_np(self, z_exp: np.ndarray, g_neu_hat: np.ndarray, t_neu_hat: np.ndarray):
        feats = self.hypernet_features(maps_to_tensor([t_neu_hat]), maps_to_tensor([g_neu_hat]))
        g, t = self.decode_expression(
            torch.from_numpy(np.asarray(z_exp, dtype=np.float32))[None], feats
        )
        return tensor_to_map(g), tensor_to_map(t)


# ---------------------------------------------------------------------------
# losses


def caae_losses(
    g_neu, t_neu, g_hat, t_hat, geo_post: DiagonalGaussian, tex_post: DiagonalGaussian,
    upm: torch.Tensor | None = None, adv: torch.Tensor | None = None,
) -> dict[str, torch.Tensor]:
    """Named loss terms; raises on non-finite values."""
    report = {
        "L_geo": (g_hat - g_neu).abs().mean(),
        "L_tex": (t_hat - t_neu).abs().mean(),
        "L_KL": geo_post.kl() + tex_post.kl(),
    }
    report["L_upm"] = upm if upm is not None else torch.zeros(())
    report["L_adv"] = adv if adv is not None else torch.zeros(())
    for name, value in report.items():
        if not torch.isfinite(value):
            raise MapError(f"non-finite loss term {name}")
    return report


def total_loss(report: dict[str, torch.Tensor], cfg: CAAEConfig) -> torch.Tensor:
    return (
        cfg.w_geo * report["L_geo"]
        + cfg.w_tex * report["L_tex"]
        + cfg.w_kl * report["L_KL"]
        + cfg.w_upm * report["L_upm"]
        + cfg.w_adv * report["L_adv"]
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class _Batchers:
    """Preloaded corpus tensors. Expression frames are kept as float16
    (half a GB would otherwise go to frame maps alone) and cast per batch."""

    g_neu: torch.Tensor
    t_neu: torch.Tensor
    sources: np.ndarray  # 0 multiview / 1 phone
    frames: list[list[tuple[np.ndarray, np.ndarray]]]  # per id: (t_exp, g_exp) fp16


def _preload(sets: list[CaptureSet]) -> _Batchers:
    g = maps_to_tensor([cs.identity.g_neu for cs in sets])
    t = maps_to_tensor([cs.identity.t_neu for cs in sets])
    sources = np.array([1 if cs.identity.source == "phone" else 0 for cs in sets])
    frames = [
        [(fr.t_exp.astype(np.float16), fr.g_exp.astype(np.float16)) for fr in cs.frames]
        for cs in sets
    ]
    return _Batchers(g_neu=g, t_neu=t, sources=sources, frames=frames)


def _stack_frames(pairs: list[tuple[np.ndarray, np.ndarray]]):
    t = maps_to_tensor([p[0].astype(np.float32) for p in pairs])
    g = maps_to_tensor([p[1].astype(np.float32) for p in pairs])
    return t, g


def source_confusion_loss(disc: SourceDiscriminator, z_exp: torch.Tensor) -> torch.Tensor:
    """Encoder-side adversarial term: push the discriminator toward 0.5."""
    logits = disc(z_exp)
    return F.binary_cross_entropy_with_logits(logits, torch.full_like(logits, 0.5))


def discriminator_step(
    model: CAAE, z_exp: torch.Tensor, labels: torch.Tensor, opt_d=None
) -> dict:
    """One alternating adversarial round on a code batch.

    Returns {"L_disc", "L_adv"} scalars, or {"skipped": notice} when the
    batch contains a single source (nothing to discriminate).
    """
    if labels.unique().numel() < 2:
        return {"skipped": "single-source batch; discriminator step skipped"}
    adv = source_confusion_loss(model.disc, z_exp)
    logits = model.disc(z_exp.detach())
    d_loss = F.binary_cross_entropy_with_logits(logits, labels.float())
    if opt_d is not None:
        opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        opt_d.step()
    return {"L_disc": d_loss, "L_adv": adv}


def calibrate_latents(model: CAAE, g_neu: torch.Tensor, t_neu: torch.Tensor, batch: int = 64):
    """Store per-dimension whitening statistics of eval-mode encodings."""
    model.eval()
    with torch.no_grad():
        zg, zt = [], []
        for lo in range(0, g_neu.shape[0], batch):
            zg.append(model.encode_geo(g_neu[lo : lo + batch]).mean)
            zt.append(model.encode_tex(t_neu[lo : lo + batch]).mean)
        zg = torch.cat(zg)
        zt = torch.cat(zt)
        model.lat_geo_mu.copy_(zg.mean(dim=0))
        model.lat_geo_sd.copy_(zg.std(dim=0).clamp_min(1e-4))
        model.lat_tex_mu.copy_(zt.mean(dim=0))
        model.lat_tex_sd.copy_(zt.std(dim=0).clamp_min(1e-4))


def train_caae(
    sets: list[CaptureSet],
    cfg: CAAEConfig | None = None,
    ckpt_dir=None,
    log_every: int = 0,
) -> tuple[CAAE, list[dict]]:
    """Deterministic CAAE training; returns (model, per-epoch loss history).

    Identity VAEs see every identity's neutral maps per epoch; the
    expression branch sees `frames_per_epoch` random frames per identity
    (phone captures only have the neutral frame). The discriminator
    alternates with the encoder on neutral-frame codes.
    """
    cfg = cfg or CAAEConfig()
    if not sets:
        raise MapError("train_caae: empty dataset")
    torch.manual_seed(cfg.seed)
    torch.set_num_threads(1)  # bit-reproducible reductions
    model = CAAE(cfg)
    data = _preload(sets)
    n = len(sets)
    n_hold = min(cfg.holdout, max(0, n - cfg.batch_size))
    # strided holdout so both capture sources appear on each side of the split
    hold_idx = np.arange(n)[:: max(1, n // max(n_hold, 1))][:n_hold] if n_hold else np.array([], dtype=int)
    train_idx = np.setdiff1d(np.arange(n), hold_idx)
    rng = np.random.default_rng(cfg.seed)

    main_params = [
        p
        for name, p in model.named_parameters()
        if not name.startswith("disc.")
    ]
    opt = torch.optim.Adam(main_params, lr=cfg.lr)
    opt_d = torch.optim.Adam(model.disc.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)

    history: list[dict] = []
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(train_idx)
        sums: dict[str, float] = {}
        count = 0
        t_start = time.time()
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            if len(idx) < 2:
                continue
            g = data.g_neu[idx]
            t = data.t_neu[idx]
            geo_post = model.encode_geo(g)
            tex_post = model.encode_tex(t)
            g_hat = model.geo_dec(geo_post.sample(gen))
            t_hat = model.tex_dec(tex_post.sample(gen))

            # expression branch: one random frame per (subsampled) identity
            upm = None
            adv = None
            z_neutral = None
            labels = None
            if cfg.w_upm > 0:
                pos = np.arange(0, len(idx), max(1, cfg.exp_subsample))
                picks = [
                    data.frames[i][int(rng.integers(len(data.frames[i])))]
                    for i in idx[pos]
                ]
                t_exp, g_exp = _stack_frames(picks)
                z_exp = model.exp_enc(t_exp, g_exp)
                feats = model.hyper(t_hat[pos].detach(), g_hat[pos].detach())
                g_exp_hat, t_exp_hat = model.exp_dec(z_exp, feats)
                upm = (g_exp_hat - g_exp).abs().mean() + (t_exp_hat - t_exp).abs().mean()

                # neutral-frame codes: anchor near zero, confuse the source
                t_neu_f, g_neu_f = _stack_frames([data.frames[i][0] for i in idx])
                z_neutral = model.exp_enc(t_neu_f, g_neu_f)
                upm = upm + cfg.w_neutral_anchor * (z_neutral**2).mean()
                labels = torch.from_numpy(data.sources[idx]).float()
                if cfg.adversary and len(np.unique(data.sources[idx])) > 1:
                    adv = source_confusion_loss(model.disc, z_neutral)

            report = caae_losses(g, t, g_hat, t_hat, geo_post, tex_post, upm, adv)
            loss = total_loss(report, cfg)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()

            if cfg.adversary and z_neutral is not None:
                step = discriminator_step(model, z_neutral.detach(), labels, opt_d)
                if "L_disc" in step:
                    report["L_disc"] = step["L_disc"]

            for k, v in report.items():
                sums[k] = sums.get(k, 0.0) + float(v.detach())
            count += 1

        epoch_log = {k: v / max(count, 1) for k, v in sums.items()}
        epoch_log["epoch"] = epoch
        epoch_log["seconds"] = round(time.time() - t_start, 2)

        if n_hold > 0:
            model.eval()
            with torch.no_grad():
                hg = data.g_neu[hold_idx]
                ht = data.t_neu[hold_idx]
                g_hat = model.geo_dec(model.encode_geo(hg).mean)
                t_hat = model.tex_dec(model.encode_tex(ht).mean)
                epoch_log["val_geo_l1"] = float((g_hat - hg).abs().mean())
                epoch_log["val_tex_l1"] = float((t_hat - ht).abs().mean())
        history.append(epoch_log)
        if log_every and epoch % log_every == 0:
            print(
                f"[caae] epoch {epoch}: "
                + " ".join(f"{k}={v:.4f}" for k, v in epoch_log.items() if k != "epoch")
            )

    calibrate_latents(model, data.g_neu[train_idx], data.t_neu[train_idx])
    model.eval()
    if ckpt_dir is not None:
        save_caae(model, cfg, history, ckpt_dir)
    return model, history


# ---------------------------------------------------------------------------
# checkpoint IO


def caae_meta(cfg: CAAEConfig, history: list[dict]) -> dict:
    from dataclasses import asdict

    return {
        "kind": "caae",
        "config": asdict(cfg),
        "config_hash": config_hash(asdict(cfg)),
        "seed": cfg.seed,
        "history": history,
    }


def save_caae(model: CAAE, cfg: CAAEConfig, history: list[dict], ckpt_dir):
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    save_state_dict(Path(ckpt_dir), state, caae_meta(cfg, history))


def load_caae(ckpt_dir) -> tuple[CAAE, dict]:
    ckpt_dir = Path(ckpt_dir)
    meta = read_json(ckpt_dir / "meta.json")
    if meta.get("kind") != "caae":
        raise MapError(f"{ckpt_dir}: not a CAAE checkpoint (kind={meta.get('kind')!r})")
    cfg = CAAEConfig(**{**meta["config"], "channels": tuple(meta["config"]["channels"]),
                        "exp_channels": tuple(meta["config"]["exp_channels"])})
    model = CAAE(cfg)
    state, _ = load_state_dict(ckpt_dir)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in state.items()})
    model.eval()
    return model, meta
