"""Command-line entry points.

Exit codes: 0 on success, 2 for validation problems (bad input files,
unknown names, malformed specs), 3 for degenerate motions (selections or
estimates that have no defined result).
"""

from __future__ import annotations

import functools
import itertools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .authoring import estimate_motion_flows, parse_motion_spec, write_flow_set
from .diffusion import BlockMatchingFlow, GuidanceConfig, ToyCodec, ToyDenoiser, run_mmds
from .errors import (
    DegenerateFlow,
    DegeneratePlane,
    DegenerateSelection,
    DegenerateStretch,
    EmptyProjection,
    FormatError,
    InvalidBatch,
    InvalidConfig,
    InvalidDepth,
    InvalidFactor,
    NoOverlap,
    NotFound,
    Timeout,
    ValidationError,
)
from .floio import read_flo, write_flo
from .flow import FlowField
from .metrics import consecutive_pairs, evaluate_scene
from .report import (
    save_edit_comparison,
    save_flow_grid,
    save_loss_figure,
    save_metrics_figure,
    save_scene_overview,
    write_csv,
)
from .sceneio import load_scene, write_scene
from .synth import (
    SynthConfig,
    make_scene,
    oracle_flow,
    render_moved,
    rotation_affine,
    scaling_affine,
    translation_affine,
)

_VALIDATION = (ValidationError, NotFound, FormatError, InvalidConfig, InvalidBatch, FileNotFoundError)
_DEGENERATE = (
    DegenerateSelection,
    DegenerateFlow,
    DegeneratePlane,
    DegenerateStretch,
    InvalidDepth,
    InvalidFactor,
    EmptyProjection,
    NoOverlap,
)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _VALIDATION as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except _DEGENERATE as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except Timeout as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main() -> None:
    """Multi-view motion editing toolkit."""


@main.command("synth-scene")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--views", default=4, show_default=True)
@click.option("--size", default=512, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--texture", type=click.Choice(["smooth", "checker"]), default="smooth", show_default=True)
@click.option("--cloud-points", type=int, default=None, help="Subsample the cloud to this many points.")
@click.option("--gt-rotate", type=float, default=None, help="Also emit ground truth for this object rotation (degrees).")
@click.option("--gt-translate", type=str, default=None, help="Ground truth for an object translation 'dx,dy,dz' (meters).")
@click.option("--gt-scale", type=float, default=None, help="Ground truth for a world-origin scaling factor.")
@_guarded
def cmd_synth_scene(out_dir, views, size, seed, texture, cloud_points, gt_rotate, gt_translate, gt_scale):
    """Render a synthetic labeled scene with exact cameras and depth."""
    requested = [v for v in (gt_rotate, gt_translate, gt_scale) if v is not None]
    if len(requested) > 1:
        raise ValidationError("choose at most one of --gt-rotate / --gt-translate / --gt-scale")
    cfg = SynthConfig(views=views, size=size, seed=seed, texture=texture, cloud_points=cloud_points)
    scene, gt = make_scene(cfg)
    write_scene(scene, out_dir)
    save_scene_overview(scene, out_dir / "overview.png")
    click.echo(f"scene '{scene.meta.name}': {len(scene.views)} views, {size}x{size}, seed {seed}")

    if requested:
        if gt_rotate is not None:
            A, b = rotation_affine(scene.cloud, gt_rotate)
            desc = f"rotation {gt_rotate} deg"
        elif gt_translate is not None:
            parts = [p for p in gt_translate.split(",") if p.strip()]
            if len(parts) != 3:
                raise ValidationError(f"--gt-translate expects 'dx,dy,dz', got {gt_translate!r}")
            A, b = translation_affine(np.array([float(p) for p in parts]))
            desc = f"translation {gt_translate} m"
        else:
            A, b = scaling_affine(gt_scale)
            desc = f"scaling x{gt_scale}"
        gt_dir = out_dir / "gt"
        gt_dir.mkdir(exist_ok=True)
        for view in scene.views:
            u, v, mask = oracle_flow(gt, view.view_id, A, b)
            write_flo(gt_dir / f"{view.view_id}.flo", FlowField(u=u, v=v, valid=mask))
            moved = render_moved(gt, view.view_id, A, b)
            Image.fromarray(moved).save(gt_dir / f"{view.view_id}.png")
        click.echo(f"ground truth ({desc}) written to {gt_dir}")


@main.command("estimate-flows")
@click.argument("scene_dir", type=click.Path(path_type=Path))
@click.option("--label", type=int, required=True, help="Segment label of the object to move.")
@click.option("--motion", "motion_path", type=click.Path(path_type=Path), required=True, help="Motion spec JSON file.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@_guarded
def cmd_estimate_flows(scene_dir, motion_path, label, out_dir):
    """Turn an authored motion into per-view dense flow files."""
    scene = load_scene(scene_dir)
    motion = parse_motion_spec(Path(motion_path).read_text())
    result = estimate_motion_flows(scene, label, motion)
    manifest = write_flow_set(result, out_dir)
    save_flow_grid(result.flows, Path(out_dir) / "flows.png")
    for key, value in sorted(result.derived.items()):
        click.echo(f"{key}: {value}")
    click.echo(f"{len(manifest['views'])} flow fields written to {out_dir}")


def _build_models(models: dict | None):
    models = dict(models or {})
    den_cfg = dict(models.pop("denoiser", {}) or {})
    codec_cfg = dict(models.pop("codec", {}) or {})
    est_cfg = dict(models.pop("estimator", {}) or {})
    if models:
        raise InvalidConfig(f"unknown model sections: {sorted(models)}")

    kind = den_cfg.pop("kind", "toy")
    if kind != "toy":
        raise InvalidConfig(f"unknown denoiser kind {kind!r} (only 'toy' ships)")
    denoiser = ToyDenoiser(**den_cfg)

    kind = codec_cfg.pop("kind", "toy")
    if kind != "toy":
        raise InvalidConfig(f"unknown codec kind {kind!r} (only 'toy' ships)")
    codec = ToyCodec(**codec_cfg) if codec_cfg else ToyCodec()

    kind = est_cfg.pop("kind", "block_matching")
    if kind != "block_matching":
        raise InvalidConfig(f"unknown estimator kind {kind!r} (only 'block_matching' ships)")
    estimator = BlockMatchingFlow(**est_cfg)
    return denoiser, codec, estimator


@main.command("run-mmds")
@click.argument("scene_dir", type=click.Path(path_type=Path))
@click.argument("flows_dir", type=click.Path(path_type=Path))
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Guidance config JSON (optional 'models' section selects implementations).")
@click.option("--steps", type=int, default=None, help="Sampling steps (default 20 for the toy stack).")
@click.option("--seed", type=int, default=None)
@click.option("--sigma-t", type=float, default=None, help="Guidance step size.")
@click.option("--lsf-start", type=int, default=None, help="Fusion starts after this step (default 60% of steps).")
@click.option("--bgc/--no-bgc", "bgc", default=None, help="Batch views into one grid latent per denoiser call.")
@click.option("--flow-weight", type=float, default=None)
@click.option("--color-weight", type=float, default=None)
@click.option("--time-budget", type=float, default=None, help="Wall-clock budget in seconds.")
@click.option("--preview-every", type=int, default=0, help="Save intermediate previews every N steps.")
@_guarded
def cmd_run_mmds(scene_dir, flows_dir, out_dir, config_path, steps, seed, sigma_t, lsf_start, bgc, flow_weight, color_weight, time_budget, preview_every):
    """Run the guided multi-view edit with the configured model stack."""
    scene = load_scene(scene_dir)
    flows_dir = Path(flows_dir)
    if not flows_dir.is_dir():
        raise FileNotFoundError(f"flows directory not found: {flows_dir}")
    flows = {}
    for view in scene.views:
        flo = flows_dir / f"{view.view_id}.flo"
        if not flo.exists():
            raise FileNotFoundError(f"missing flow file: {flo}")
        flows[view.view_id] = read_flo(flo)

    raw: dict = {}
    if config_path is not None:
        raw = json.loads(Path(config_path).read_text())
        if not isinstance(raw, dict):
            raise InvalidConfig("guidance config file must hold a JSON object")
    models = raw.pop("models", None)
    overrides = {
        "num_steps": steps,
        "seed": seed,
        "sigma_t": sigma_t,
        "lsf_start_step": lsf_start,
        "bgc_enabled": bgc,
        "flow_weight": flow_weight,
        "color_weight": color_weight,
        "time_budget_s": time_budget,
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    raw.setdefault("num_steps", 20)
    config = GuidanceConfig.from_dict(raw)
    denoiser, codec, estimator = _build_models(models)

    result = run_mmds(
        scene, flows, config, denoiser, codec, estimator,
        preview_every=preview_every or None,
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {}
    for view in scene.views:
        img = np.rint(np.clip(result.images[view.view_id], 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(img).save(out_dir / f"{view.view_id}.png")
        inputs[view.view_id] = view.image
    for vid, frames in result.previews.items():
        for i, frame in enumerate(frames):
            img = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
            Image.fromarray(img).save(out_dir / f"{vid}.preview{i:03d}.png")
    (out_dir / "manifest.json").write_text(json.dumps(result.manifest(), indent=2, sort_keys=True))
    loss_rows = [
        {"step": r.step, "t": r.t, "view": r.view_id, "flow_loss": r.flow_loss, "color_loss": r.color_loss}
        for r in result.losses
    ]
    write_csv(out_dir / "losses.csv", loss_rows, ["step", "t", "view", "flow_loss", "color_loss"])
    save_loss_figure(result.losses, out_dir / "loss_curves.png")
    save_edit_comparison(inputs, result.images, out_dir / "comparison.png")
    click.echo(f"edited {len(result.images)} views in {result.runtime_s:.1f}s over {config.num_steps} steps")


@main.command("metrics")
@click.argument("scene_dir", type=click.Path(path_type=Path))
@click.argument("edited_dir", type=click.Path(path_type=Path))
@click.argument("flows_dir", type=click.Path(path_type=Path))
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--lambda-mpa", type=float, default=1.0, show_default=True)
@click.option("--lambda-atf", type=float, default=1.0, show_default=True)
@click.option("--pairs", type=click.Choice(["consecutive", "all"]), default="consecutive", show_default=True)
@click.option("--match-radius", type=int, default=3, show_default=True)
@click.option("--match-patch", type=int, default=7, show_default=True)
@click.option("--match-grid", type=int, default=0, show_default=True, help="Tile size of grid-quantized matching (0 = plain).")
@click.option("--match-median", type=int, default=0, show_default=True, help="Median window over the estimated flow (0 = off).")
@_guarded
def cmd_metrics(scene_dir, edited_dir, flows_dir, out_dir, lambda_mpa, lambda_atf, pairs, match_radius, match_patch, match_grid, match_median):
    """Score an edit: motion accuracy, texture fidelity, view consistency."""
    scene = load_scene(scene_dir)
    edited_dir = Path(edited_dir)
    flows_dir = Path(flows_dir)
    inputs, outputs, flows, views = {}, {}, {}, {}
    for view in scene.views:
        vid = view.view_id
        edited_path = edited_dir / f"{vid}.png"
        if not edited_path.exists():
            raise FileNotFoundError(f"missing edited image: {edited_path}")
        edited = np.asarray(Image.open(edited_path).convert("RGB"))
        if edited.shape[:2] != (view.height, view.width):
            raise ValidationError(
                f"edited image {vid} is {edited.shape[1]}x{edited.shape[0]}, "
                f"view is {view.width}x{view.height}"
            )
        flo = flows_dir / f"{vid}.flo"
        if not flo.exists():
            raise FileNotFoundError(f"missing flow file: {flo}")
        inputs[vid] = view.image
        outputs[vid] = edited
        flows[vid] = read_flo(flo)
        views[vid] = view

    ids = sorted(inputs)
    pair_list = list(itertools.combinations(ids, 2)) if pairs == "all" else consecutive_pairs(ids)
    estimator = BlockMatchingFlow(
        radius=match_radius, patch=match_patch, block_grid=match_grid, median=match_median
    )
    report, rows = evaluate_scene(
        inputs, outputs, flows, views, estimator,
        lambdas=(lambda_mpa, lambda_atf), pairs=pair_list,
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["rows"] = rows
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    write_csv(out_dir / "metrics.csv", rows, ["kind", "subject", "mpa", "atf", "mvc"])
    save_metrics_figure(report, rows, out_dir / "metrics.png")
    for row in rows:
        if row["kind"] == "view":
            click.echo(f"view {row['subject']}: mpa={row['mpa']:.4f} px, atf={row['atf']:.5f}")
        elif row["mvc"] == "":
            click.echo(f"pair {row['subject']}: no overlap, skipped")
        else:
            click.echo(f"pair {row['subject']}: mvc={row['mvc']:.2f} dB")
    click.echo(f"summary: mpa={report.mpa:.4f} atf={report.atf:.5f} mvc={report.mvc:.2f}")


@main.command("serve")
@click.argument("scene_dir", type=click.Path(path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None, help="Defaults to $MVMOTION_PORT or 8000.")
@click.option("--export-dir", type=click.Path(path_type=Path), default=None, help="Where session exports land (default <scene>/exports).")
@_guarded
def cmd_serve(scene_dir, host, port, export_dir):
    """Serve the authoring session API over HTTP."""
    import uvicorn

    from .service import create_app

    scene = load_scene(scene_dir)
    if port is None:
        port = int(os.environ.get("MVMOTION_PORT", "8000"))
    export_root = Path(export_dir) if export_dir else Path(scene_dir) / "exports"
    app = create_app(scene, export_root=export_root)
    click.echo(f"serving scene '{scene.meta.name}' on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
