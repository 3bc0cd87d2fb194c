"""Colour-band timelines of ground truth versus prediction."""

from __future__ import annotations

import numpy as np

from .data import segments_from_frames

# tab20 reordered so neighbouring ids contrast; ids beyond 20 wrap
_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
    "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
]


def class_color(k: int) -> str:
    return _PALETTE[int(k) % len(_PALETTE)]


def plot_timeline(pred, gt, out_path: str, class_names=None, title: str | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Patch

    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction length {pred.shape} != ground truth length {gt.shape}")

    fig, ax = plt.subplots(figsize=(10, 1.6))
    for row, labels in ((1, gt), (0, pred)):
        for seg in segments_from_frames(labels):
            ax.broken_barh([(seg.start, seg.length)], (row + 0.1, 0.8), facecolors=class_color(seg.label))
    ax.set_xlim(0, gt.size)
    ax.set_ylim(0, 2)
    ax.set_yticks([0.5, 1.5])
    ax.set_yticklabels(["prediction", "ground truth"])
    ax.set_xlabel("frame")
    present = sorted(set(gt.tolist()) | set(pred.tolist()))
    names = class_names or {}
    handles = [Patch(color=class_color(k), label=names[k] if k < len(names) else str(k)) for k in present]
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize="small", frameon=False)
    if title:
        ax.set_title(title)
    fig.savefig(out_path, bbox_inches="tight", dpi=100)
    plt.close(fig)
