"""Pipeline configuration.

Plain dataclasses serialized as JSON. `load_config` reads a file and
applies overrides; a couple of deployment knobs (port, checkpoint dir)
also respond to environment variables so the service can be pointed at
checkpoints without editing files.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .tensorio import config_hash, read_json

ENV_PORT = "AVATARLAB_PORT"
ENV_CKPT_DIR = "AVATARLAB_CKPT_DIR"


@dataclass
class DataConfig:
    n_multiview: int = 1800
    n_phone: int = 200
    seed: int = 0
    resolution: int = 64


@dataclass
class CAAEConfig:
    channels: tuple[int, ...] = (16, 32, 64)
    z_channels: int = 4
    latent_hw: int = 16
    exp_dim: int = 16
    exp_channels: tuple[int, ...] = (12, 24, 48)
    epochs: int = 30
    batch_size: int = 32
    lr: float = 2e-3  # fixed (no schedule)
    w_geo: float = 1.0
    w_tex: float = 1.0
    w_kl: float = 1e-4
    w_upm: float = 1.0
    w_adv: float = 0.1
    w_neutral_anchor: float = 0.02
    adversary: bool = True
    exp_subsample: int = 1  # expression branch sees every k-th identity per batch
    holdout: int = 64  # identities reserved for validation
    seed: int = 0


@dataclass
class DiffusionConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    eta: float = 0.0
    base_channels: int = 48
    emb_dim: int = 64
    steps: int = 2000  # optimizer steps
    batch_size: int = 64
    lr: float = 1e-5  # fixed learning rate
    null_prob: float = 0.1
    sample_steps: int = 20
    guidance_scale: float = 2.0
    cond_mode: str = "norm"  # GCTM only: norm | disp | none | latent
    seed: int = 0


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8423
    ckpt_dir: str = "checkpoints"
    store_dir: str = "store"
    workers: int = 1


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    caae: CAAEConfig = field(default_factory=CAAEConfig)
    gm: DiffusionConfig = field(default_factory=DiffusionConfig)
    gctm: DiffusionConfig = field(default_factory=DiffusionConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return config_hash(self.as_dict())


def _apply(dc, overrides: dict):
    names = {f.name: f for f in dataclasses.fields(dc)}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown config key {key!r} for {type(dc).__name__}")
        current = getattr(dc, key)
        if dataclasses.is_dataclass(current):
            _apply(current, value)
        elif isinstance(current, tuple):
            setattr(dc, key, tuple(value))
        else:
            setattr(dc, key, type(current)(value) if current is not None else value)
    return dc


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults <- JSON file <- explicit overrides <- environment."""
    cfg = PipelineConfig()
    if path is not None:
        _apply(cfg, read_json(Path(path)))
    if overrides:
        _apply(cfg, overrides)
    if os.environ.get(ENV_PORT):
        cfg.service.port = int(os.environ[ENV_PORT])
    if os.environ.get(ENV_CKPT_DIR):
        cfg.service.ckpt_dir = os.environ[ENV_CKPT_DIR]
    return cfg
