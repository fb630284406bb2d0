"""Figure rendering for CLI reports.

Every CLI path that writes delimited output also renders a figure next to
it; this module owns those figures. The Agg backend is forced so rendering
works headless.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .flow import FlowField, colorize_flow
from .metrics import MetricReport
from .scene import Scene


def write_csv(path: Path, rows: Sequence[Mapping[str, Any]], fieldnames: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def save_metrics_figure(report: MetricReport, rows: Sequence[Mapping[str, Any]], path: Path) -> None:
    """Bar charts of per-view mpa/atf and per-pair mvc."""
    view_rows = [r for r in rows if r["kind"] == "view"]
    pair_rows = [r for r in rows if r["kind"] == "pair" and r["mvc"] != ""]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))

    labels = [r["subject"] for r in view_rows]
    axes[0].bar(labels, [r["mpa"] for r in view_rows], color="#4878cf")
    axes[0].set_title(f"motion position error (mean {report.mpa:.3f} px)")
    axes[0].set_ylabel("px")
    axes[1].bar(labels, [r["atf"] for r in view_rows], color="#6acc65")
    axes[1].set_title(f"texture fidelity error (mean {report.atf:.4f})")
    axes[1].set_ylabel("L1 intensity")
    if pair_rows:
        axes[2].bar([r["subject"] for r in pair_rows], [r["mvc"] for r in pair_rows], color="#d65f5f")
    axes[2].set_title(f"cross-view PSNR (mean {report.mvc:.1f} dB)")
    axes[2].set_ylabel("dB")
    for ax in axes:
        ax.tick_params(axis="x", rotation=45, labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_loss_figure(losses: Sequence[Any], path: Path) -> None:
    """Per-view guidance loss curves over the sampling steps."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    by_view: dict[str, list[Any]] = {}
    for rec in losses:
        by_view.setdefault(rec.view_id, []).append(rec)
    for vid, recs in sorted(by_view.items()):
        steps = [r.step for r in recs]
        axes[0].plot(steps, [r.flow_loss for r in recs], label=vid)
        axes[1].plot(steps, [r.color_loss for r in recs], label=vid)
    axes[0].set_title("flow matching loss")
    axes[1].set_title("color loss")
    for ax in axes:
        ax.set_xlabel("sampling step")
        if by_view:
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_flow_grid(flows: Mapping[str, FlowField], path: Path) -> None:
    """Colorized flow of every view in one figure."""
    ids = sorted(flows)
    cols = min(len(ids), 4) or 1
    rows = (len(ids) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 3.2 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, vid in zip(axes.ravel(), ids):
        ax.imshow(colorize_flow(flows[vid]))
        ax.set_title(vid, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_scene_overview(scene: Scene, path: Path) -> None:
    """Images and depth maps of every view, side by side."""
    views = scene.views
    fig, axes = plt.subplots(2, len(views), figsize=(3.0 * len(views), 6.2), squeeze=False)
    for i, view in enumerate(views):
        axes[0][i].imshow(view.image)
        axes[0][i].set_title(view.view_id, fontsize=9)
        d = axes[1][i].imshow(view.depth, cmap="viridis")
        fig.colorbar(d, ax=axes[1][i], fraction=0.046)
        for ax in (axes[0][i], axes[1][i]):
            ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_edit_comparison(
    inputs: Mapping[str, np.ndarray], outputs: Mapping[str, np.ndarray], path: Path
) -> None:
    """Input view, edited view, and their difference for every view."""
    ids = sorted(inputs)
    fig, axes = plt.subplots(3, len(ids), figsize=(3.0 * len(ids), 9.0), squeeze=False)
    for i, vid in enumerate(ids):
        a = np.asarray(inputs[vid], dtype=np.float64)
        b = np.asarray(outputs[vid], dtype=np.float64)
        if a.dtype == np.uint8 or a.max() > 1.5:
            a = a / 255.0
        if b.max() > 1.5:
            b = b / 255.0
        axes[0][i].imshow(np.clip(a, 0, 1))
        axes[0][i].set_title(f"{vid} input", fontsize=9)
        axes[1][i].imshow(np.clip(b, 0, 1))
        axes[1][i].set_title("edited", fontsize=9)
        axes[2][i].imshow(np.abs(a - b).mean(axis=2), cmap="magma", vmin=0, vmax=0.5)
        axes[2][i].set_title("abs diff", fontsize=9)
        for row in range(3):
            axes[row][i].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
