"""UVT1 tensor container and checkpoint directory IO.

Every map, latent and model parameter in this project is persisted in the
same tiny binary container so round trips are bit-exact:

    magic  b"UVT1"
    rank   u32 little-endian
    dims   u32[rank] little-endian
    data   float32 little-endian, row-major (C order)
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"UVT1"


class ContainerError(ValueError):
    """Raised when a .uvt file is malformed; always names the file."""


def write_uvt(path: str | os.PathLike, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype=np.float32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_uvt(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise ContainerError(f"{path}: bad container magic")
    (rank,) = struct.unpack_from("<I", blob, 4)
    header_end = 8 + 4 * rank
    if rank > 8 or len(blob) < header_end:
        raise ContainerError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = blob[header_end:]
    if len(payload) != 4 * count:
        raise ContainerError(
            f"{path}: payload holds {len(payload) // 4} floats, header says {count}"
        )
    arr = np.frombuffer(payload, dtype="<f4", count=count)
    return arr.reshape(dims).copy()


def write_json(path: str | os.PathLike, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | os.PathLike):
    with open(path) as fh:
        return json.load(fh)


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable config."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def state_sha(state: dict) -> str:
    """Short hash identifying a set of model weights byte-for-byte."""
    h = hashlib.sha256()
    for name in sorted(state):
        value = state[name]
        arr = value.detach().cpu().numpy() if hasattr(value, "detach") else np.asarray(value)
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def save_state_dict(ckpt_dir: str | os.PathLike, state: dict, meta: dict) -> None:
    """Persist named float tensors as params/<name>.uvt plus meta.json.

    `state` maps parameter names to numpy arrays or torch tensors.
    """
    ckpt_dir = Path(ckpt_dir)
    params_dir = ckpt_dir / "params"
    params_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for name, value in state.items():
        arr = value.detach().cpu().numpy() if hasattr(value, "detach") else np.asarray(value)
        fname = name.replace("/", "__") + ".uvt"
        write_uvt(params_dir / fname, arr)
        names.append(name)
    meta = dict(meta)
    meta["params"] = sorted(names)
    write_json(ckpt_dir / "meta.json", meta)


def load_state_dict(ckpt_dir: str | os.PathLike) -> tuple[dict, dict]:
    """Inverse of save_state_dict; returns (state, meta)."""
    ckpt_dir = Path(ckpt_dir)
    meta = read_json(ckpt_dir / "meta.json")
    state = {}
    for name in meta["params"]:
        fname = name.replace("/", "__") + ".uvt"
        state[name] = read_uvt(ckpt_dir / "params" / fname)
    return state, meta
