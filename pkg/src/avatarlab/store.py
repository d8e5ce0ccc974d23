"""Append-only avatar store.

Avatar ids are content hashes over (latents, checkpoint hash), which
makes writes idempotent: storing the same identity under the same
checkpoints lands on the same directory. Records are immutable once
written; edits and interpolations append new avatars whose provenance
points back at their sources.
"""

from __future__ import annotations

import datetime
import hashlib
import os
import shutil
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np

from .tensorio import read_json, read_uvt, write_json, write_uvt
from .uvmaps import blend_masked

ROOT_KINDS = ("prompt", "inversion")
DERIVED_KINDS = ("edit", "interp")


class StoreError(RuntimeError):
    pass


def avatar_id_for(z_geo: np.ndarray, z_tex: np.ndarray, checkpoint: str) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(z_geo, dtype=np.float32).tobytes())
    h.update(np.ascontiguousarray(z_tex, dtype=np.float32).tobytes())
    h.update(checkpoint.encode())
    return h.hexdigest()[:16]


@dataclass
class AvatarRecord:
    avatar_id: str
    z_geo: np.ndarray
    z_tex: np.ndarray
    g_map: np.ndarray
    t_map: np.ndarray
    checkpoint: str
    provenance: dict
    recipe: dict = field(default_factory=lambda: {"kind": "decode"})
    mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    created_at: str = ""

    def summary(self) -> dict:
        return {
            "avatar_id": self.avatar_id,
            "checkpoint": self.checkpoint,
            "provenance": self.provenance,
            "recipe": {k: v for k, v in self.recipe.items() if k != "mask"},
            "created_at": self.created_at,
            **self.meta,
        }


class AvatarStore:
    def __init__(self, root: str):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        self._lock = threading.Lock()

    # -- paths ------------------------------------------------------------
    def _dir(self, avatar_id: str) -> str:
        if not avatar_id or "/" in avatar_id or avatar_id.startswith("."):
            raise StoreError(f"bad avatar id {avatar_id!r}")
        return os.path.join(self.root, avatar_id)

    def exists(self, avatar_id: str) -> bool:
        return os.path.isfile(os.path.join(self._dir(avatar_id), "meta.json"))

    def ids(self) -> list[str]:
        out = []
        for name in sorted(os.listdir(self.root)):
            if os.path.isfile(os.path.join(self.root, name, "meta.json")):
                out.append(name)
        return out

    # -- write ------------------------------------------------------------
    def add(
        self,
        z_geo,
        z_tex,
        g_map,
        t_map,
        checkpoint: str,
        provenance: dict,
        recipe: dict | None = None,
        mask=None,
        meta: dict | None = None,
    ) -> AvatarRecord:
        kind = provenance.get("kind")
        if kind not in ROOT_KINDS + DERIVED_KINDS:
            raise StoreError(f"unknown provenance kind {kind!r}")
        record = AvatarRecord(
            avatar_id=avatar_id_for(z_geo, z_tex, checkpoint),
            z_geo=np.asarray(z_geo, np.float32),
            z_tex=np.asarray(z_tex, np.float32),
            g_map=np.asarray(g_map, np.float32),
            t_map=np.asarray(t_map, np.float32),
            checkpoint=checkpoint,
            provenance=provenance,
            recipe=recipe or {"kind": "decode"},
            mask=None if mask is None else np.asarray(mask, np.float32),
            meta=meta or {},
            created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        with self._lock:
            final = self._dir(record.avatar_id)
            if os.path.isfile(os.path.join(final, "meta.json")):
                return self.get(record.avatar_id)  # idempotent: same content
            tmp = tempfile.mkdtemp(dir=self.root, prefix=".tmp-")
            try:
                self._write(record, tmp)
                os.replace(tmp, final)
            except OSError:
                shutil.rmtree(tmp, ignore_errors=True)
                raise
        return record

    def _write(self, record: AvatarRecord, into: str) -> None:
        maps_dir = os.path.join(into, "maps")
        os.makedirs(maps_dir, exist_ok=True)
        write_uvt(os.path.join(into, "latents.uvt"), np.stack([record.z_geo, record.z_tex]))
        write_uvt(os.path.join(maps_dir, "g_neu.uvt"), record.g_map)
        write_uvt(os.path.join(maps_dir, "t_neu.uvt"), record.t_map)
        if record.mask is not None:
            write_uvt(os.path.join(maps_dir, "mask.uvt"), record.mask)
        write_json(
            os.path.join(into, "meta.json"),
            {
                "avatar_id": record.avatar_id,
                "checkpoint": record.checkpoint,
                "provenance": record.provenance,
                "recipe": record.recipe,
                "created_at": record.created_at,
                "map_sha": _maps_sha(record.g_map, record.t_map),
                "meta": record.meta,
            },
        )

    # -- read -------------------------------------------------------------
    def get(self, avatar_id: str) -> AvatarRecord:
        d = self._dir(avatar_id)
        if not os.path.isfile(os.path.join(d, "meta.json")):
            raise KeyError(avatar_id)
        doc = read_json(os.path.join(d, "meta.json"))
        lat = read_uvt(os.path.join(d, "latents.uvt"))
        g = read_uvt(os.path.join(d, "maps", "g_neu.uvt"))
        t = read_uvt(os.path.join(d, "maps", "t_neu.uvt"))
        mask_path = os.path.join(d, "maps", "mask.uvt")
        mask = read_uvt(mask_path) if os.path.isfile(mask_path) else None
        record = AvatarRecord(
            avatar_id=doc["avatar_id"],
            z_geo=lat[0],
            z_tex=lat[1],
            g_map=g,
            t_map=t,
            checkpoint=doc["checkpoint"],
            provenance=doc["provenance"],
            recipe=doc["recipe"],
            mask=mask,
            meta=doc.get("meta", {}),
            created_at=doc["created_at"],
        )
        if avatar_id_for(record.z_geo, record.z_tex, record.checkpoint) != avatar_id:
            raise StoreError(f"avatar {avatar_id}: latents do not match the id hash")
        if _maps_sha(g, t) != doc["map_sha"]:
            raise StoreError(f"avatar {avatar_id}: stored maps fail the hash check")
        return record

    # -- provenance -------------------------------------------------------
    def parents(self, record: AvatarRecord) -> list[str]:
        prov = record.provenance
        if prov["kind"] == "edit":
            return [prov["source"]]
        if prov["kind"] == "interp":
            return list(prov["parents"])
        return []

    def roots(self, avatar_id: str, _depth: int = 0) -> list[str]:
        """Walk provenance to the generating/inverting ancestors."""
        if _depth > 64:
            raise StoreError("provenance chain too deep (cycle?)")
        record = self.get(avatar_id)
        ps = self.parents(record)
        if not ps:
            return [avatar_id]
        out: list[str] = []
        for p in ps:
            for r in self.roots(p, _depth + 1):
                if r not in out:
                    out.append(r)
        return out

    def chain(self, avatar_id: str) -> list[dict]:
        """Provenance breadcrumbs from this avatar back to its first root."""
        out = []
        current: str | None = avatar_id
        for _ in range(64):
            if current is None:
                break
            rec = self.get(current)
            out.append(rec.summary())
            ps = self.parents(rec)
            current = ps[0] if ps else None
        return out

    # -- integrity --------------------------------------------------------
    def verify_decode(self, avatar_id: str, caae) -> None:
        """Stored maps must be reproducible from latents (plus the recorded
        blend, for edited avatars) under the loaded checkpoint."""
        record = self.get(avatar_id)
        g_hat, t_hat = caae.decode_maps_np(record.z_geo, record.z_tex)
        if record.recipe.get("kind") == "blend":
            source = self.get(record.recipe["source"])
            if record.mask is None:
                raise StoreError(f"avatar {avatar_id}: blend recipe without a stored mask")
            if record.recipe["which"] == "tex":
                t_hat = blend_masked(source.t_map, t_hat, record.mask)
                g_hat = source.g_map
            else:
                g_hat = blend_masked(source.g_map, g_hat, record.mask)
                t_hat = source.t_map
        elif record.recipe.get("kind") != "decode":
            raise StoreError(f"avatar {avatar_id}: unknown recipe {record.recipe}")
        if not (np.array_equal(g_hat, record.g_map) and np.array_equal(t_hat, record.t_map)):
            raise StoreError(f"avatar {avatar_id}: decoded maps diverge from stored maps")


def _maps_sha(g: np.ndarray, t: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g, np.float32).tobytes())
    h.update(np.ascontiguousarray(t, np.float32).tobytes())
    return h.hexdigest()[:16]
