"""avatarlab: desk-scale text-driven 3D avatar generation.

A two-stage pipeline over 64x64 UV position/texture maps: a coupled
pair of identity autoencoders with an expression branch, then latent
diffusion for text-conditioned generation, plus rendering, inversion,
editing, evaluation, and an HTTP service.
"""

from .attributes import AttributeVector
from .autoencoder import CAAE, load_caae, train_caae
from .config import PipelineConfig, load_config
from .diffusion import (
    NoiseSchedule,
    load_gm,
    load_gctm,
    make_schedule,
    sample_geo,
    sample_inpaint,
    sample_tex,
    train_gm,
    train_gctm,
)
from .editing import global_retexture, load_mask, local_edit
from .invert import InversionConfig, InversionTargets, invert
from .pipeline import GeneratedIdentity, generate_identity
from .prompts import PromptEmbedder, parse
from .render import look_at_camera, mesh_from_position, rasterize
from .store import AvatarRecord, AvatarStore
from .synthcap import build_dataset, load_dataset, sample_attributes, write_dataset
from .uvmaps import MapError

__version__ = "0.1.0"

__all__ = [
    "AttributeVector",
    "AvatarRecord",
    "AvatarStore",
    "CAAE",
    "GeneratedIdentity",
    "InversionConfig",
    "InversionTargets",
    "MapError",
    "NoiseSchedule",
    "PipelineConfig",
    "PromptEmbedder",
    "build_dataset",
    "generate_identity",
    "global_retexture",
    "invert",
    "load_caae",
    "load_config",
    "load_dataset",
    "load_gctm",
    "load_gm",
    "load_mask",
    "local_edit",
    "look_at_camera",
    "make_schedule",
    "mesh_from_position",
    "parse",
    "rasterize",
    "sample_attributes",
    "sample_geo",
    "sample_inpaint",
    "sample_tex",
    "train_caae",
    "train_gctm",
    "train_gm",
    "write_dataset",
]
