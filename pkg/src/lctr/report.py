"""Figure rendering for the report paths (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.patches as mpatches
import matplotlib.pyplot as plt
import numpy as np

OVERLAY_LIMIT = 8


def _draw_box(ax, box, color, label=None):
    rect = mpatches.Rectangle(
        (box.x0 - 0.5, box.y0 - 0.5),
        box.x1 - box.x0,
        box.y1 - box.y0,
        fill=False,
        edgecolor=color,
        linewidth=1.6,
        label=label,
    )
    ax.add_patch(rect)


def render_overlays(samples, evals, out_dir, limit: int = OVERLAY_LIMIT):
    """Image, heatmap, and heatmap-over-image panels with both boxes."""
    for i, (sample, ev) in enumerate(zip(samples, evals)):
        if i >= limit:
            break
        fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
        rgb = np.transpose(sample.image, (1, 2, 0))
        axes[0].imshow(rgb)
        axes[0].set_title(f"class {sample.label}")
        axes[1].imshow(ev.pred_heatmap, cmap="magma", vmin=0.0, vmax=1.0)
        axes[1].set_title("fused heatmap")
        axes[2].imshow(rgb)
        axes[2].imshow(ev.pred_heatmap, cmap="magma", alpha=0.45, vmin=0.0, vmax=1.0)
        _draw_box(axes[2], sample.gt_box, "red", "ground truth")
        _draw_box(axes[2], ev.pred_box, "lime", "prediction")
        axes[2].legend(loc="lower right", fontsize=7)
        axes[2].set_title("overlay")
        for ax in axes:
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        fig.savefig(out_dir / f"overlay_{i}.png", dpi=120)
        plt.close(fig)


def render_sweep_curve(rows, path):
    ratios = [r for r, _ in rows]
    accs = [a for _, a in rows]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(ratios, accs, marker="o", color="tab:blue")
    ax.set_xlabel("threshold ratio")
    ax.set_ylabel("Gt-known accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ablation_chart(rows, path):
    modes = [mode for mode, _ in rows]
    gt_known = [m.gt_known for _, m in rows]
    top1_loc = [m.top1_loc for _, m in rows]
    x = np.arange(len(modes))
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.bar(x - 0.18, gt_known, width=0.36, label="Gt-known")
    ax.bar(x + 0.18, top1_loc, width=0.36, label="Top-1 Loc.")
    ax.set_xticks(x)
    ax.set_xticklabels(modes)
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_attention_grid(image, class_maps, relation_map, path):
    """Per-block class-token maps next to the final relation map."""
    n = len(class_maps)
    fig, axes = plt.subplots(1, n + 2, figsize=(2.3 * (n + 2), 2.6))
    axes[0].imshow(np.transpose(image, (1, 2, 0)))
    axes[0].set_title("image", fontsize=8)
    for i, m in enumerate(class_maps):
        axes[i + 1].imshow(m, cmap="viridis")
        axes[i + 1].set_title(f"block {i}", fontsize=8)
    axes[-1].imshow(relation_map, cmap="magma")
    axes[-1].set_title("relation map", fontsize=8)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
