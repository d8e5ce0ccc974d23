"""Command-line entry points; thin wrappers over the library modules."""

from __future__ import annotations

import dataclasses
import os
import sys

import click
import numpy as np

from .config import PipelineConfig, load_config


def _runtime(cfg: PipelineConfig):
    from .service import load_runtime

    rt = load_runtime(cfg)
    if not rt.ready:
        missing = [k for k in ("caae", "gm", "gctm") if getattr(rt, k) is None]
        raise click.ClickException(
            f"checkpoints missing under {cfg.service.ckpt_dir!r}: {', '.join(missing)}"
        )
    return rt


def _load_sets(data_dir: str):
    from .synthcap import load_dataset

    if not os.path.isdir(data_dir):
        raise click.ClickException(f"no dataset at {data_dir!r}; run synth-data first")
    return load_dataset(data_dir)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Override every stage seed.")
@click.option("--ckpt-dir", type=click.Path(), default=None, help="Checkpoint directory.")
@click.pass_context
def cli(ctx, config_path, seed, ckpt_dir):
    """Text-driven avatar pipeline: synthesis, training, sampling, serving."""
    overrides = {}
    if seed is not None:
        overrides = {"data": {"seed": seed}, "caae": {"seed": seed},
                     "gm": {"seed": seed}, "gctm": {"seed": seed}}
    cfg = load_config(config_path, overrides)
    if ckpt_dir is not None:
        cfg = dataclasses.replace(
            cfg, service=dataclasses.replace(cfg.service, ckpt_dir=ckpt_dir)
        )
    ctx.obj = cfg


@cli.command("synth-data")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--n-multiview", type=int, default=None)
@click.option("--n-phone", type=int, default=None)
@click.pass_obj
def synth_data(cfg: PipelineConfig, out_dir, n_multiview, n_phone):
    """Build and write the synthetic capture corpus."""
    from .synthcap import build_dataset, write_dataset

    n_mv = n_multiview if n_multiview is not None else cfg.data.n_multiview
    n_ph = n_phone if n_phone is not None else cfg.data.n_phone
    sets = build_dataset(n_mv, n_ph, seed=cfg.data.seed, res=cfg.data.resolution)
    write_dataset(sets, out_dir)
    click.echo(f"wrote {len(sets)} identities to {out_dir}")


@cli.command("train-caae")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.pass_obj
def train_caae_cmd(cfg: PipelineConfig, data_dir):
    """Train the identity/expression autoencoder."""
    from .autoencoder import train_caae

    sets = _load_sets(data_dir)
    out = os.path.join(cfg.service.ckpt_dir, "caae")
    model, history = train_caae(sets, cfg.caae, ckpt_dir=out)
    last = history[-1]
    keys = ("val_geo_l1", "val_tex_l1") if "val_geo_l1" in last else ("L_geo", "L_tex")
    tail = ", ".join(f"{k} {last[k]:.4f}" for k in keys if k in last)
    click.echo(f"caae -> {out} ({tail})")


@cli.command("train-gm")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.pass_obj
def train_gm_cmd(cfg: PipelineConfig, data_dir):
    """Train the text-conditioned geometry prior."""
    from .autoencoder import load_caae
    from .diffusion import train_gm
    from .prompts import PromptEmbedder
    from .tensorio import state_sha

    sets = _load_sets(data_dir)
    caae, _ = load_caae(os.path.join(cfg.service.ckpt_dir, "caae"))
    embedder = PromptEmbedder(seed=cfg.gm.seed)
    out = os.path.join(cfg.service.ckpt_dir, "gm")
    _, history = train_gm(sets, caae, embedder, cfg.gm,
                          caae_hash=state_sha(caae.state_dict()), ckpt_dir=out)
    click.echo(f"gm -> {out} (final loss {history[-1]:.4f})")


@cli.command("train-gctm")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--cond-mode", type=click.Choice(["norm", "disp", "none", "latent"]),
              default=None)
@click.pass_obj
def train_gctm_cmd(cfg: PipelineConfig, data_dir, cond_mode):
    """Train the geometry-conditioned texture prior."""
    from .autoencoder import load_caae
    from .diffusion import train_gctm
    from .prompts import PromptEmbedder
    from .tensorio import state_sha

    dcfg = cfg.gctm if cond_mode is None else dataclasses.replace(
        cfg.gctm, cond_mode=cond_mode
    )
    sets = _load_sets(data_dir)
    caae, _ = load_caae(os.path.join(cfg.service.ckpt_dir, "caae"))
    embedder = PromptEmbedder(seed=dcfg.seed)
    out = os.path.join(cfg.service.ckpt_dir, "gctm")
    _, history = train_gctm(sets, caae, embedder, dcfg,
                            caae_hash=state_sha(caae.state_dict()), ckpt_dir=out)
    click.echo(f"gctm[{dcfg.cond_mode}] -> {out} (final loss {history[-1]:.4f})")


@cli.command()
@click.option("--prompt", default="", help="Attribute caption; empty = unconditional.")
@click.option("--steps", type=int, default=None)
@click.option("--guidance", type=float, default=None)
@click.option("--sample-seed", type=int, default=0)
@click.pass_obj
def generate(cfg: PipelineConfig, prompt, steps, guidance, sample_seed):
    """Sample an avatar from a text prompt and store it."""
    from .pipeline import generate_identity

    rt = _runtime(cfg)
    gen = generate_identity(
        rt.caae, rt.gm, rt.gctm, rt.embedder, prompt,
        seed=sample_seed,
        steps=steps or cfg.gm.sample_steps,
        guidance=guidance if guidance is not None else cfg.gm.guidance_scale,
    )
    record = rt.store.add(
        gen.z_geo, gen.z_tex, gen.g_map, gen.t_map, rt.checkpoint,
        provenance={"kind": "prompt", "prompt": prompt, "seed": sample_seed},
        meta={"attrs_parsed": gen.parsed_slots, "unrecognized": gen.unrecognized},
    )
    click.echo(f"avatar {record.avatar_id}")
    click.echo(f"parsed: {gen.parsed_slots}")
    if gen.unrecognized:
        click.echo(f"unrecognized: {gen.unrecognized}")


@cli.command()
@click.option("--avatar-id", required=True)
@click.option("--yaw", type=float, default=0.0)
@click.option("--pitch", type=float, default=0.0)
@click.option("--distance", type=float, default=3.0)
@click.option("--size", type=int, default=64)
@click.option("--exp", default="neutral", help="Preset name or 16 comma-separated floats.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
def render(cfg: PipelineConfig, avatar_id, yaw, pitch, distance, size, exp, out_path):
    """Render a stored avatar to a PNG."""
    from .render import image_to_png_bytes, look_at_camera, mesh_from_position, rasterize
    from .service import load_runtime

    rt = load_runtime(cfg)
    if rt.caae is None:
        raise click.ClickException("caae checkpoint missing")
    record = rt.store.get(avatar_id)
    camera = look_at_camera(yaw, pitch, distance=distance, size=(size, size))
    if exp == "neutral":
        g, t = record.g_map, record.t_map
    elif exp in rt.presets:
        g, t = rt.caae.decode_expression_np(rt.presets[exp], record.g_map, record.t_map)
    else:
        params = np.asarray([float(x) for x in exp.split(",")], np.float32)
        if params.shape != (16,):
            raise click.ClickException("--exp needs a preset name or 16 floats")
        g, t = rt.caae.decode_expression_np(params, record.g_map, record.t_map)
    png = image_to_png_bytes(rasterize(mesh_from_position(g), t, camera).color)
    with open(out_path, "wb") as fh:
        fh.write(png)
    click.echo(out_path)


@cli.command()
@click.option("--target-g", type=click.Path(exists=True), required=True)
@click.option("--target-t", type=click.Path(exists=True), required=True)
@click.option("--steps", type=int, default=300)
@click.pass_obj
def invert(cfg: PipelineConfig, target_g, target_t, steps):
    """Recover an identity code for target maps and store the avatar."""
    import torch

    from .invert import InversionConfig, InversionTargets
    from .invert import invert as run_inversion
    from .service import load_runtime
    from .tensorio import read_uvt

    rt = load_runtime(cfg)
    if rt.caae is None:
        raise click.ClickException("caae checkpoint missing")
    torch.manual_seed(cfg.data.seed)
    targets = InversionTargets(g_map=read_uvt(target_g), t_map=read_uvt(target_t))
    result = run_inversion(rt.caae, targets, cfg=InversionConfig(steps=steps))
    g, t = rt.caae.decode_maps_np(result.z_geo, result.z_tex)
    record = rt.store.add(
        result.z_geo, result.z_tex, g, t, rt.checkpoint,
        provenance={"kind": "inversion", "steps": steps, "seed": cfg.data.seed},
        meta={"final_loss": result.trace[result.best_step]},
    )
    click.echo(f"avatar {record.avatar_id} (loss {result.trace[result.best_step]:.4f})")


@cli.command()
@click.option("--avatar-id", required=True)
@click.option("--prompt", required=True)
@click.option("--which", type=click.Choice(["global", "tex", "geo"]), default="global")
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None,
              help="Mask as .uvt or grayscale PNG (required for tex/geo edits).")
@click.option("--region", default=None, help="Named UV region instead of a mask file.")
@click.option("--sample-seed", type=int, default=0)
@click.pass_obj
def edit(cfg: PipelineConfig, avatar_id, prompt, which, mask_path, region, sample_seed):
    """Re-texture globally or regenerate a masked region."""
    from .editing import global_retexture, load_mask, local_edit
    from .synthcap import region_mask

    rt = _runtime(cfg)
    record = rt.store.get(avatar_id)
    if which == "global":
        result = global_retexture(
            rt.caae, rt.gctm, rt.embedder, record.z_geo, record.z_tex, prompt,
            seed=sample_seed, steps=cfg.gm.sample_steps,
            guidance=cfg.gm.guidance_scale,
        )
        recipe, mask_arr = {"kind": "decode"}, None
    else:
        if (mask_path is None) == (region is None):
            raise click.ClickException("local edits need exactly one of --mask/--region")
        mask_arr = load_mask(mask_path) if mask_path else region_mask(
            region, record.t_map.shape[0], record.t_map.shape[1]
        )
        model = rt.gctm if which == "tex" else rt.gm
        result = local_edit(
            rt.caae, model, rt.embedder, record.z_geo, record.z_tex, mask_arr, prompt,
            which=which, seed=sample_seed, steps=cfg.gm.sample_steps,
            guidance=cfg.gm.guidance_scale,
        )
        if not result.changed:
            click.echo(f"avatar {avatar_id} (empty mask; unchanged)")
            return
        recipe = {"kind": "blend", "which": which, "source": avatar_id}
    new = rt.store.add(
        result.z_geo, result.z_tex, result.g_map, result.t_map, rt.checkpoint,
        provenance={"kind": "edit", "source": avatar_id, "prompt": prompt,
                    "which": which, "seed": sample_seed},
        recipe=recipe, mask=mask_arr if which != "global" else None,
        meta={"attrs_parsed": result.parsed_slots, "unrecognized": result.unrecognized},
    )
    click.echo(f"avatar {new.avatar_id}")


@cli.command()
@click.option("--id-a", required=True)
@click.option("--id-b", required=True)
@click.option("--alpha", type=float, required=True)
@click.pass_obj
def interpolate(cfg: PipelineConfig, id_a, id_b, alpha):
    """Store the decoded identity at a point on the latent path a -> b."""
    from .service import load_runtime
    from .uvmaps import lerp

    rt = load_runtime(cfg)
    if rt.caae is None:
        raise click.ClickException("caae checkpoint missing")
    rec_a, rec_b = rt.store.get(id_a), rt.store.get(id_b)
    z_geo = lerp(rec_a.z_geo, rec_b.z_geo, alpha)
    z_tex = lerp(rec_a.z_tex, rec_b.z_tex, alpha)
    g, t = rt.caae.decode_maps_np(z_geo, z_tex)
    record = rt.store.add(
        z_geo, z_tex, g, t, rt.checkpoint,
        provenance={"kind": "interp", "parents": [id_a, id_b], "alpha": alpha},
    )
    click.echo(f"avatar {record.avatar_id}")


@cli.command("eval")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--n-consistency", type=int, default=50)
@click.pass_obj
def eval_cmd(cfg: PipelineConfig, data_dir, out_dir, n_consistency):
    """Probe accuracy, generation consistency, smoothness, source AUC."""
    from . import evalkit, figures
    from .render import look_at_camera, mesh_from_position, rasterize

    rt = _runtime(cfg)
    sets = _load_sets(data_dir)
    probe = evalkit.train_attribute_probe(sets, seed=cfg.data.seed)
    evalkit.save_probe(os.path.join(cfg.service.ckpt_dir, "probe"), probe)
    payload = {
        "checkpoint": rt.checkpoint,
        "probe": {"holdout_acc": probe.holdout_acc, "valid": probe.valid},
    }
    rows = [{"metric": f"probe_acc[{k}]", "value": v} for k, v in probe.holdout_acc.items()]
    if probe.valid:
        tc = evalkit.text_consistency(
            rt.caae, rt.gm, rt.gctm, rt.embedder, probe, n=n_consistency,
            seed=cfg.data.seed, steps=cfg.gm.sample_steps,
        )
        payload["text_consistency"] = tc
        rows.append({"metric": "text_consistency", "value": tc["mean"]})

        codes = [rt.caae.encode_maps_np(s.identity.g_neu, s.identity.t_neu) for s in sets[:2]]
        sm = evalkit.smoothness(rt.caae, codes[0], codes[1], n=16)
        payload["smoothness"] = {k: v for k, v in sm.items() if k != "deltas"}
        rows.append({"metric": "smoothness_ratio", "value": sm["ratio"]})

        cam = look_at_camera(0.0, 0.0)
        imgs, alphas = [], [k / 7 for k in range(8)]
        from .uvmaps import lerp

        for al in alphas:
            g, t = rt.caae.decode_maps_np(
                lerp(codes[0][0], codes[1][0], al), lerp(codes[0][1], codes[1][1], al)
            )
            imgs.append(rasterize(mesh_from_position(g), t, cam).color)
        figures.save_interp_strip(imgs, os.path.join(out_dir, "interp_strip.png"), alphas)
    paths = evalkit.write_report(out_dir, "eval", payload, rows)
    click.echo(f"report: {paths['json']}")


@cli.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--modes", default="none,disp,norm")
@click.option("--n-per-mode", type=int, default=100)
@click.pass_obj
def ablate(cfg: PipelineConfig, data_dir, out_dir, modes, n_per_mode):
    """Train one texture prior per conditioning mode and tabulate metrics."""
    from . import evalkit, figures
    from .autoencoder import load_caae
    from .diffusion import load_gctm, train_gctm
    from .prompts import PromptEmbedder
    from .tensorio import state_sha

    sets = _load_sets(data_dir)
    caae, _ = load_caae(os.path.join(cfg.service.ckpt_dir, "caae"))
    rt = _runtime(cfg)
    probe = evalkit.train_attribute_probe(sets, seed=cfg.data.seed)
    if not probe.valid:
        # fail before spending minutes training per-mode texture models
        raise click.ClickException(
            f"probe invalid (holdout acc: {probe.holdout_acc}); use a larger dataset"
        )
    embedder = PromptEmbedder(seed=cfg.gctm.seed)
    caae_hash = state_sha(caae.state_dict())
    gctms = {}
    for mode in [m.strip() for m in modes.split(",") if m.strip()]:
        ckpt = os.path.join(cfg.service.ckpt_dir, f"gctm-{mode}")
        if os.path.isfile(os.path.join(ckpt, "meta.json")):
            gctms[mode], _ = load_gctm(ckpt)
        else:
            dcfg = dataclasses.replace(cfg.gctm, cond_mode=mode)
            gctms[mode], _ = train_gctm(sets, caae, embedder, dcfg,
                                        caae_hash=caae_hash, ckpt_dir=ckpt)
    report = evalkit.ablation_run(
        caae, rt.gm, gctms, embedder, probe, n_per_mode=n_per_mode,
        seed=cfg.data.seed, steps=cfg.gm.sample_steps,
    )
    rows = [
        {"mode": mode, **{k: v for k, v in vals.items()}}
        for mode, vals in report["modes"].items()
    ]
    paths = evalkit.write_report(out_dir, "ablation", report, rows)
    figures.save_ablation_bars(report["modes"], os.path.join(out_dir, "ablation.png"))
    click.echo(f"report: {paths['json']}")


@cli.command()
@click.pass_obj
def serve(cfg: PipelineConfig):
    """Run the HTTP service."""
    from .service import main as serve_main

    serve_main(cfg)


def main():
    cli(prog_name="avatarlab")


if __name__ == "__main__":
    sys.exit(main())
