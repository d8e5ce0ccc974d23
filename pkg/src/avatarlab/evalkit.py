"""Desk-scale metric suite.

A handcrafted-feature attribute probe stands in for CLIP-style semantic
scoring: region statistics computed straight off the UV maps feed one
logistic head per attribute slot. Everything downstream (consistency
scoring, the conditioning-mode ablation, text-control checks) refuses to
run unless the probe clears its held-out accuracy gate.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score

from .attributes import SLOTS
from .autoencoder import CAAE
from .pipeline import generate_identity
from .prompts import PromptEmbedder
from .synthcap import (
    EYE_CENTERS,
    caption_of,
    cheek_extent,
    region_mask,
    sample_attributes,
    shading_field,
)
from .tensorio import config_hash, load_state_dict, save_state_dict
from .uvmaps import MapError, lerp, require_shape

PROBE_ACC_FLOOR = 0.9

# Columns sampled when tracing the hair/skin boundary, and the two
# characteristic frequencies (cycles per unit u) of the wavy/curly styles.
_HAIRLINE_US = np.linspace(0.20, 0.80, 25)
_STYLE_FREQS = (2.5, 5.5)


class ProbeInvalidError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# feature extraction


def _box_mean(t, name):
    m = region_mask(name, t.shape[0], t.shape[1])[..., 0] > 0
    return t[m].reshape(-1, t.shape[-1]).mean(axis=0)


def _patch(arr, cu, cv, ru, rv):
    h, w = arr.shape[:2]
    us = (np.arange(w) + 0.5) / w
    vs = (np.arange(h) + 0.5) / h
    cols = (np.abs(us - cu) <= ru).nonzero()[0]
    rows = (np.abs(vs - cv) <= rv).nonzero()[0]
    return arr[np.ix_(rows, cols)]


def _plane_residual(z_patch):
    """Peak height above the best-fit plane; isolates local bumps from the
    low-frequency surface waves."""
    h, w = z_patch.shape
    ys, xs = np.mgrid[0:h, 0:w]
    a = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)], axis=1)
    coef, *_ = np.linalg.lstsq(a, z_patch.ravel(), rcond=None)
    return float((z_patch.ravel() - a @ coef).max())


def _lip_bump_integral(z: np.ndarray) -> float:
    """Integral of the lip bump over a per-column quadratic baseline."""
    h, w = z.shape
    vs = (np.arange(h) + 0.5) / h
    us = (np.arange(w) + 0.5) / w
    rows = np.nonzero((vs >= 0.64) & (vs <= 0.86))[0]
    base_rows = rows[np.abs(vs[rows] - 0.745) > 0.065]
    lip_rows = rows[np.abs(vs[rows] - 0.745) <= 0.055]
    cols = np.nonzero(np.abs(us - 0.5) <= 0.032)[0]
    a = np.stack([vs[base_rows] ** 2, vs[base_rows], np.ones(len(base_rows))], axis=1)
    out = []
    for c in cols:
        coef, *_ = np.linalg.lstsq(a, z[base_rows, c], rcond=None)
        fit = coef[0] * vs[lip_rows] ** 2 + coef[1] * vs[lip_rows] + coef[2]
        out.append(float((z[lip_rows, c] - fit).sum()) / h)
    return float(np.mean(out))


def _hairline_profile(t, hair_rgb, skin_rgb):
    """Boundary row (in v units) per sampled column.

    Classifies texels in the window between hat brim and brows as
    hair/skin by nearest measured centroid and counts the hair run —
    robust to strand speckle where a gradient detector is not.
    """
    h, w = t.shape[:2]
    cols = np.clip((_HAIRLINE_US * w).astype(int), 0, w - 1)
    v_lo, v_hi = int(round(0.12 * h)), int(round(0.42 * h))
    seg = t[v_lo:v_hi, cols]
    d_hair = np.abs(seg - hair_rgb).sum(axis=-1)
    d_skin = np.abs(seg - skin_rgb).sum(axis=-1)
    counts = (d_hair < d_skin).sum(axis=0)
    return (v_lo + counts) / h


def identity_features(g_map: np.ndarray, t_map: np.ndarray) -> np.ndarray:
    """Fixed-length descriptor of one identity's neutral maps."""
    g = require_shape(np.asarray(g_map, np.float64), 3, "position map")
    t = require_shape(np.asarray(t_map, np.float64), 3, "texture map")
    h, w = t.shape[:2]
    lum = t.mean(axis=-1)
    feats: list[float] = []

    # region colors (texture)
    for name in ("hair_core", "hat_band", "forehead", "brows", "mouth", "chin", "jaw"):
        feats.extend(_box_mean(t, name))
    cheek = _patch(t, 0.26, 0.60, 0.05, 0.03)
    cheek_rgb = cheek.reshape(-1, 3).mean(axis=0)
    feats.extend(cheek_rgb)
    skin_lum = float(cheek_rgb.mean())

    # hat vs hair color split
    hat_rgb = _box_mean(t, "hat_band")
    hair_rgb = _box_mean(t, "hair_core")
    feats.append(float(np.abs(hat_rgb - hair_rgb).sum()))

    # iris chroma, shading-normalized
    eye = sum(
        _patch(t, cu, cv, 0.022, 0.022).reshape(-1, 3).mean(axis=0) for cu, cv in EYE_CENTERS
    ) / len(EYE_CENTERS)
    feats.extend(eye)
    feats.extend(eye / max(float(eye.mean()), 1e-6))

    # glasses ring annulus luminance (relative to skin)
    us = (np.arange(w) + 0.5) / w
    vs = (np.arange(h) + 0.5) / h
    uu, vv = np.meshgrid(us, vs)
    ring = np.zeros((h, w), bool)
    for cu, cv in EYE_CENTERS:
        d = np.sqrt((uu - cu) ** 2 + ((vv - cv) * 1.35) ** 2)
        ring |= np.abs(d - 0.075) <= 0.009
    ring_lum = float(lum[ring].mean())
    feats.append(ring_lum)
    feats.append(ring_lum / max(skin_lum, 1e-6))

    # facial-hair bands: signed beard-vs-skin color affinity, normalized by
    # how far apart the two classes sit for this identity (handles blonde
    # beards on fair skin)
    beard_rgb = hair_rgb * 0.8
    sep = max(float(np.abs(cheek_rgb - beard_rgb).sum()), 1e-3)
    band_specs = (
        (0.5, 0.695, 0.075, 0.008),  # mustache strip
        (0.5, 0.855, 0.060, 0.032),  # goatee patch
        (0.28, 0.85, 0.055, 0.045),  # left jaw
        (0.72, 0.85, 0.055, 0.045),  # right jaw
    )
    for cu, cv, ru, rv in band_specs:
        band = _patch(t, cu, cv, ru, rv).reshape(-1, 3).mean(axis=0)
        affinity = float(np.abs(band - cheek_rgb).sum() - np.abs(band - beard_rgb).sum())
        feats.append(affinity / sep)

    # lips: shade-invariant red-chroma area relative to the cheek baseline
    def _chroma_red(p):
        return (p[..., 0] - 0.5 * (p[..., 1] + p[..., 2])) / np.maximum(p.mean(axis=-1), 1e-6)

    c_skin = float(_chroma_red(cheek).mean())
    mouth_c = _chroma_red(_patch(t, 0.5, 0.745, 0.08, 0.055))
    top = float(mouth_c.max())
    if top <= c_skin + 1e-3:
        feats.extend([0.0, 0.0])
    else:
        feats.append(float((mouth_c > c_skin + 0.45 * (top - c_skin)).mean()))
        feats.append(top - c_skin)

    # skin texture statistics (age cues)
    feats.append(float(cheek.reshape(-1, 3).std()))
    feats.append(float(np.abs(np.diff(cheek.mean(axis=-1), axis=0)).mean()))
    chroma = np.abs(cheek - cheek.mean(axis=-1, keepdims=True)).mean()
    feats.append(float(chroma) / max(skin_lum, 1e-6))

    # forehead line dips (sub-texel wrinkles leave per-column minima)
    strip = _patch(lum[..., None], 0.5, 0.3825, 0.12, 0.0375)[..., 0]
    col_mean = strip.mean(axis=0)
    col_min = strip.min(axis=0)
    feats.append(float(((col_mean - col_min) / np.maximum(col_mean, 1e-6)).mean()))
    feats.append(float(np.abs(np.diff(strip, axis=0)).mean()) / max(skin_lum, 1e-6))

    # hairline profile: level, waviness, and style-frequency energy
    prof = _hairline_profile(t, hair_rgb, cheek_rgb)
    feats.append(float(prof.mean()))
    feats.append(float(prof.std()))
    centered = prof - prof.mean()
    for f_cyc in _STYLE_FREQS:
        c = float(centered @ np.cos(2 * math.pi * f_cyc * _HAIRLINE_US))
        s = float(centered @ np.sin(2 * math.pi * f_cyc * _HAIRLINE_US))
        feats.append(math.hypot(c, s) / len(prof))

    # geometry: face extent and scale
    x_ext = cheek_extent(g.astype(np.float32))
    y_ext = float(g[..., 1].max() - g[..., 1].min())
    feats.extend([x_ext, y_ext, x_ext / max(y_ext, 1e-6)])

    # geometry bumps above the local plane
    for cu, cv, ru, rv in (
        (0.5, 0.615, 0.10, 0.10),  # nose
        (0.5, 0.44, 0.25, 0.045),  # brow ridge
        (0.5, 0.86, 0.10, 0.06),  # chin
    ):
        r = _plane_residual(_patch(g[..., 2], cu, cv, ru, rv))
        feats.extend([r, r / max(y_ext / 1.7, 1e-6)])

    # lip bump integral (amp x width product survives the narrow-Gaussian
    # sampling that defeats a peak-height estimate)
    li = _lip_bump_integral(g[..., 2])
    feats.extend([li, li / max(y_ext / 1.7, 1e-6)])

    # gendered jaw: width low on the face relative to cheek width
    jaw_row = g[int(round(0.80 * (h - 1)))][:, 0]
    feats.append(float(jaw_row.max() - jaw_row.min()) / max(x_ext, 1e-6))

    out = np.asarray(feats, np.float64)
    if not np.isfinite(out).all():
        raise MapError("non-finite feature vector")
    return out


# ---------------------------------------------------------------------------
# attribute probe


@dataclass
class AttributeProbe:
    feat_mu: np.ndarray
    feat_sd: np.ndarray
    heads: dict  # slot -> (W: (C, F), b: (C,), classes: tuple)
    holdout_acc: dict = field(default_factory=dict)
    valid: bool = False

    def predict(self, g_map, t_map) -> dict:
        f = (identity_features(g_map, t_map) - self.feat_mu) / self.feat_sd
        out = {}
        for slot, (w, b, classes) in self.heads.items():
            scores = w @ f + b
            out[slot] = classes[int(scores.argmax())]
        return out


def _slot_labels(attrs, slot):
    return getattr(attrs, slot)


def train_attribute_probe(sets, holdout_frac: float = 0.25, seed: int = 0) -> AttributeProbe:
    """Fit one logistic head per slot on region features of (G_neu, T_neu).

    The probe is only usable when every slot clears ``PROBE_ACC_FLOOR`` on
    the held-out identities.
    """
    feats = np.stack([identity_features(s.identity.g_neu, s.identity.t_neu) for s in sets])
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sets))
    n_hold = max(1, int(round(holdout_frac * len(sets))))
    hold, train = order[:n_hold], order[n_hold:]

    mu = feats[train].mean(axis=0)
    sd = np.maximum(feats[train].std(axis=0), 1e-6)
    z = (feats - mu) / sd

    heads, acc = {}, {}
    for slot in SLOTS:
        labels = np.asarray([str(_slot_labels(s.identity.attrs, slot)) for s in sets])
        if len(set(labels)) < 2:
            raise MapError(f"slot {slot!r} has a single value in this dataset")
        clf = LogisticRegression(max_iter=4000, C=10.0)
        clf.fit(z[train], labels[train])
        acc[slot] = float((clf.predict(z[hold]) == labels[hold]).mean())
        classes = tuple(_decode_label(c, slot) for c in clf.classes_)
        w = clf.coef_.astype(np.float64)
        b = clf.intercept_.astype(np.float64)
        if len(classes) == 2:
            # sklearn stores one row for binary problems; expand so argmax
            # over class scores works uniformly
            w = np.vstack([-w, w])
            b = np.concatenate([-b, b])
        heads[slot] = (w, b, classes)

    probe = AttributeProbe(feat_mu=mu, feat_sd=sd, heads=heads, holdout_acc=acc)
    probe.valid = all(a >= PROBE_ACC_FLOOR for a in acc.values())
    return probe


def _decode_label(text: str, slot: str):
    values = SLOTS[slot]
    if values == (False, True):
        return text == "True"
    return text


def save_probe(ckpt_dir, probe: AttributeProbe, extra_meta: dict | None = None) -> None:
    state = {
        "feat_mu": torch.from_numpy(probe.feat_mu),
        "feat_sd": torch.from_numpy(probe.feat_sd),
    }
    classes = {}
    for slot, (w, b, cls) in probe.heads.items():
        state[f"W_{slot}"] = torch.from_numpy(w)
        state[f"b_{slot}"] = torch.from_numpy(b)
        classes[slot] = [str(c) for c in cls]
    meta = {
        "kind": "probe",
        "holdout_acc": probe.holdout_acc,
        "valid": probe.valid,
        "slot_classes": classes,
        **(extra_meta or {}),
    }
    save_state_dict(ckpt_dir, state, meta)


def load_probe(ckpt_dir) -> AttributeProbe:
    state, meta = load_state_dict(ckpt_dir)
    if meta.get("kind") != "probe":
        raise MapError(f"checkpoint at {ckpt_dir} is not a probe")
    heads = {}
    for slot, cls in meta["slot_classes"].items():
        heads[slot] = (
            np.asarray(state[f"W_{slot}"], np.float64),
            np.asarray(state[f"b_{slot}"], np.float64),
            tuple(_decode_label(c, slot) for c in cls),
        )
    return AttributeProbe(
        feat_mu=np.asarray(state["feat_mu"], np.float64),
        feat_sd=np.asarray(state["feat_sd"], np.float64),
        heads=heads,
        holdout_acc=meta["holdout_acc"],
        valid=meta["valid"],
    )


def attr_consistency(probe: AttributeProbe, g_map, t_map, slots: dict) -> float | None:
    """Fraction of set slots the probe recovers; None when nothing is set."""
    if not probe.valid:
        raise ProbeInvalidError(
            "probe marked invalid (held-out accuracy below "
            f"{PROBE_ACC_FLOOR}); metrics refuse to run"
        )
    if not slots:
        return None
    pred = probe.predict(g_map, t_map)
    return float(np.mean([pred[k] == v for k, v in slots.items()]))


# ---------------------------------------------------------------------------
# map metrics


def recon_metrics(a: np.ndarray, b: np.ndarray) -> dict:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise MapError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    mse = float(np.square(diff).mean())
    psnr = 99.0 if mse == 0.0 else min(99.0, -10.0 * math.log10(mse))
    return {"l1": float(np.abs(diff).mean()), "psnr": psnr}


def _decode_code(caae, code):
    return caae.decode_maps_np(np.asarray(code[0], np.float32), np.asarray(code[1], np.float32))


def smoothness(caae: CAAE, code_a, code_b, n: int = 16) -> dict:
    """Adjacent decoded-map deltas along the straight latent path a -> b.

    ``n`` counts segments; the path has n+1 points with exact endpoints.
    """
    if n < 1:
        raise MapError(f"need at least one segment, got {n}")
    alphas = [k / n for k in range(n + 1)]
    decoded = []
    for al in alphas:
        zg = lerp(code_a[0], code_b[0], al)
        zt = lerp(code_a[1], code_b[1], al)
        decoded.append(_decode_code(caae, (zg, zt)))
    deltas = [
        0.5
        * (
            float(np.abs(decoded[k + 1][0] - decoded[k][0]).mean())
            + float(np.abs(decoded[k + 1][1] - decoded[k][1]).mean())
        )
        for k in range(n)
    ]
    ga, ta = decoded[0]
    gb, tb = decoded[-1]
    endpoint = 0.5 * (float(np.abs(gb - ga).mean()) + float(np.abs(tb - ta).mean()))
    uniform = endpoint / n
    ref_a = _decode_code(caae, code_a)
    ref_b = _decode_code(caae, code_b)
    return {
        "deltas": deltas,
        "max_delta": max(deltas),
        "endpoint_distance": endpoint,
        "uniform_share": uniform,
        "ratio": max(deltas) / uniform if uniform > 0 else float("inf"),
        "endpoints_exact": bool(
            np.array_equal(ga, ref_a[0])
            and np.array_equal(ta, ref_a[1])
            and np.array_equal(gb, ref_b[0])
            and np.array_equal(tb, ref_b[1])
        ),
    }


# ---------------------------------------------------------------------------
# geometry/texture alignment and the conditioning ablation


def alignment_error(g_map: np.ndarray, t_map: np.ndarray) -> float:
    """How well baked texture shading tracks the geometry's shading field.

    Both signals are reduced to contrast ratios over the cheek patch (flat
    skin in every identity), so albedo level cancels and only the spatial
    pattern is compared.
    """
    g = require_shape(np.asarray(g_map, np.float64), 3, "position map")
    t = require_shape(np.asarray(t_map, np.float64), 3, "texture map")
    m = region_mask("align_patch", g.shape[0], g.shape[1])[..., 0] > 0
    lum = t.mean(axis=-1)[m]
    shade = shading_field(g.astype(np.float32))[..., 0][m]
    r_t = lum / max(float(lum.mean()), 1e-6)
    r_s = shade / max(float(shade.mean()), 1e-6)
    return float(np.abs(r_t - r_s).mean())


def ablation_run(
    caae: CAAE,
    gm,
    gctms: dict,
    embedder: PromptEmbedder,
    probe: AttributeProbe,
    n_per_mode: int = 100,
    seed: int = 0,
    steps: int = 20,
    guidance: float = 2.0,
) -> dict:
    """Table of alignment error and attribute consistency per conditioning mode."""
    if not probe.valid:
        raise ProbeInvalidError("probe marked invalid; metrics refuse to run")
    prompts = []
    for i in range(n_per_mode):
        attrs = sample_attributes(seed * 1_000_003 + 77 + i)
        prompts.append(caption_of(attrs, seed=i))
    table = {}
    for mode in sorted(gctms):
        gctm = gctms[mode]
        aligns, consis = [], []
        for i, prompt in enumerate(prompts):
            gen = generate_identity(
                caae, gm, gctm, embedder, prompt, seed=seed + 1000 + i,
                steps=steps, guidance=guidance,
            )
            aligns.append(alignment_error(gen.g_map, gen.t_map))
            score = attr_consistency(probe, gen.g_map, gen.t_map, gen.parsed_slots)
            if score is not None:
                consis.append(score)
        table[mode] = {
            "alignment_error": float(np.mean(aligns)),
            "attr_consistency": float(np.mean(consis)) if consis else None,
            "n": n_per_mode,
        }
    return {"modes": table, "seed": seed, "steps": steps, "guidance": guidance}


# ---------------------------------------------------------------------------
# expression-source divergence


def source_divergence(z_a: np.ndarray, z_b: np.ndarray, seed: int = 0) -> dict:
    """Held-out AUC of a fresh logistic probe separating the two code sets."""
    z_a = np.asarray(z_a, np.float64).reshape(len(z_a), -1)
    z_b = np.asarray(z_b, np.float64).reshape(len(z_b), -1)
    if len(z_a) < 4 or len(z_b) < 4:
        raise MapError("need at least 4 codes per side")
    rng = np.random.default_rng(seed)
    x = np.concatenate([z_a, z_b])
    y = np.concatenate([np.zeros(len(z_a)), np.ones(len(z_b))])
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    n_tr = len(x) // 2
    mu, sd = x[:n_tr].mean(axis=0), np.maximum(x[:n_tr].std(axis=0), 1e-6)
    xs = (x - mu) / sd
    clf = LogisticRegression(max_iter=2000)
    clf.fit(xs[:n_tr], y[:n_tr])
    scores = clf.decision_function(xs[n_tr:])
    auc = float(roc_auc_score(y[n_tr:], scores))
    # direction-free: 0.55 and 0.45 are the same amount of leak
    return {"auc": max(auc, 1.0 - auc), "n_a": int(len(z_a)), "n_b": int(len(z_b))}


# ---------------------------------------------------------------------------
# text-control evaluation


def text_control_pairs(
    caae, gm, gctm, embedder, n_pairs: int = 50, seed: int = 0, steps: int = 20,
    guidance: float = 2.0,
) -> dict:
    """Paired-seed wide/narrow prompts; checks decoded cheek-extent ordering."""
    wins = 0
    for i in range(n_pairs):
        base = sample_attributes(seed * 9_176_867 + i)
        caps = {}
        for shape in ("wide", "narrow"):
            attrs = dataclasses.replace(base, face_shape=shape)
            caps[shape] = caption_of(attrs, seed=i)
        ext = {}
        for shape, cap in caps.items():
            gen = generate_identity(
                caae, gm, gctm, embedder, cap, seed=seed + 31 + i, steps=steps,
                guidance=guidance,
            )
            ext[shape] = cheek_extent(gen.g_map)
        wins += int(ext["wide"] > ext["narrow"])
    return {"n_pairs": n_pairs, "wins": wins, "rate": wins / n_pairs}


def text_consistency(
    caae, gm, gctm, embedder, probe, n: int = 200, seed: int = 0, steps: int = 20,
    guidance: float = 2.0,
) -> dict:
    """Mean attr_consistency of freshly generated avatars vs their prompts."""
    scores = []
    for i in range(n):
        attrs = sample_attributes(seed * 5_099 + i)
        cap = caption_of(attrs, seed=i)
        gen = generate_identity(
            caae, gm, gctm, embedder, cap, seed=seed + 517 + i, steps=steps,
            guidance=guidance,
        )
        s = attr_consistency(probe, gen.g_map, gen.t_map, gen.parsed_slots)
        if s is not None:
            scores.append(s)
    return {"n": len(scores), "mean": float(np.mean(scores))}


# ---------------------------------------------------------------------------
# report output


def write_report(out_dir, name: str, payload: dict, rows: list[dict] | None = None) -> dict:
    """JSON report plus a CSV companion for the tabular part."""
    os.makedirs(out_dir, exist_ok=True)
    doc = dict(payload)
    doc["created_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    json_path = os.path.join(out_dir, f"{name}.json")
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
    paths = {"json": json_path}
    if rows:
        csv_path = os.path.join(out_dir, f"{name}.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        paths["csv"] = csv_path
    return paths


def report_hashes(**objs) -> dict:
    return {k: config_hash(v) for k, v in objs.items()}
