import dataclasses

import pytest
import torch

torch.set_num_threads(max(1, torch.get_num_threads()))


@pytest.fixture(scope="session")
def tiny_sets():
    """Small deterministic corpus for unit tests (6 multiview + 2 phone)."""
    from avatarlab.synthcap import build_dataset

    return build_dataset(6, 2, seed=0)


@pytest.fixture(scope="session")
def tiny_caae(tiny_sets):
    """Two-epoch autoencoder; good enough for shape/plumbing tests."""
    from avatarlab.autoencoder import train_caae
    from avatarlab.config import CAAEConfig

    model, _ = train_caae(tiny_sets, CAAEConfig(epochs=2))
    return model


@pytest.fixture(scope="session")
def tiny_diffusion(tiny_sets, tiny_caae):
    """(gm, gctm, embedder) trained for 40 steps on the tiny corpus."""
    from avatarlab.config import DiffusionConfig
    from avatarlab.diffusion import train_gctm, train_gm
    from avatarlab.prompts import PromptEmbedder
    from avatarlab.tensorio import state_sha

    dcfg = DiffusionConfig(steps=40, batch_size=8, lr=3e-4, sample_steps=6)
    embedder = PromptEmbedder(seed=dcfg.seed)
    caae_hash = state_sha(tiny_caae.state_dict())
    gm, _ = train_gm(tiny_sets, tiny_caae, embedder, dcfg, caae_hash=caae_hash)
    gctm, _ = train_gctm(tiny_sets, tiny_caae, embedder, dcfg, caae_hash=caae_hash)
    return gm, gctm, embedder


@pytest.fixture(scope="session")
def stack():
    """Full trained stack for acceptance tests; built once and cached on
    disk under .cache/ (see tests/_stack.py), ~45 min cold."""
    from _stack import ensure_stack

    return ensure_stack()
