"""Boundary regression branch and boundary-driven majority-vote smoothing."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def boundary_probs(F_: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Per-frame boundary probability ``sigmoid(conv1x1(F))``; returns ``[T]``."""
    return torch.sigmoid(weight @ F_ + bias[:, None])[0]


class DilatedResidualLayer(nn.Module):
    def __init__(self, dilation: int, width: int):
        super().__init__()
        self.conv_dilated = nn.Conv1d(width, width, 3, padding=dilation, dilation=dilation)
        self.conv_1x1 = nn.Conv1d(width, width, 1)

    def forward(self, x):
        return x + self.conv_1x1(F.relu(self.conv_dilated(x)))


class RefineStage(nn.Module):
    def __init__(self, num_layers: int, width: int):
        super().__init__()
        self.conv_in = nn.Conv1d(1, width, 1)
        self.layers = nn.ModuleList([DilatedResidualLayer(2 ** i, width) for i in range(num_layers)])
        self.conv_out = nn.Conv1d(width, 1, 1)
        self.receptive_radius = 2 ** num_layers - 1

    def forward(self, p: torch.Tensor) -> torch.Tensor:
        h = self.conv_in(p[None, None])
        for layer in self.layers:
            h = layer(h)
        return torch.sigmoid(self.conv_out(h))[0, 0]


def refine_boundary(p: torch.Tensor, stages: Sequence[RefineStage]) -> list[torch.Tensor]:
    """Run the stage stack; returns ``[p, stage1(p), stage2(stage1(p)), ...]``."""
    outs = [p]
    for stage in stages:
        outs.append(stage(outs[-1]))
    return outs


class BoundaryBranch(nn.Module):
    def __init__(self, hidden: int, num_stages: int = 3, num_layers: int = 10, width: int = 64):
        super().__init__()
        self.head = nn.Conv1d(hidden, 1, 1)
        self.stages = nn.ModuleList([RefineStage(num_layers, width) for _ in range(num_stages)])

    def forward(self, F_: torch.Tensor) -> list[torch.Tensor]:
        p = boundary_probs(F_, self.head.weight[:, :, 0], self.head.bias)
        return refine_boundary(p, self.stages)


def boundary_targets(labels: Sequence[int], radius: int = 2) -> np.ndarray:
    """1 at every label change (the first frame of the new segment), dilated by ``radius``."""
    labels = np.asarray(labels)
    out = np.zeros(labels.size, dtype=np.float32)
    for t in np.flatnonzero(labels[1:] != labels[:-1]) + 1:
        out[max(0, t - radius):t + radius + 1] = 1.0
    return out


def detect_boundaries(p, threshold: float = 0.5) -> list[int]:
    """Peaks of ``p`` that reach ``threshold``.

    A peak is a plateau of equal values whose neighbours on both sides are
    lower; it is reported at its first frame. A single-peaked run of
    candidate frames therefore yields its argmax, and because peaks do not
    depend on the threshold, raising it can only remove boundaries.
    """
    p = np.asarray(p.detach().cpu() if isinstance(p, torch.Tensor) else p, dtype=np.float64)
    out = []
    t, T = 0, p.size
    while t < T:
        end = t
        while end + 1 < T and p[end + 1] == p[t]:
            end += 1
        left_ok = t == 0 or p[t - 1] < p[t]
        right_ok = end == T - 1 or p[end + 1] < p[t]
        if left_ok and right_ok and p[t] >= threshold:
            out.append(t)
        t = end + 1
    return out


def majority_smooth(frame_preds: Sequence[int], boundaries: Sequence[int]) -> np.ndarray:
    """Assign each boundary-delimited region its most frequent label (lowest id on ties)."""
    preds = np.asarray(frame_preds, dtype=np.int64)
    out = preds.copy()
    cuts = sorted({0, *(int(b) for b in boundaries if 0 < b < preds.size)}) + [preds.size]
    for start, end in zip(cuts[:-1], cuts[1:]):
        out[start:end] = np.argmax(np.bincount(preds[start:end]))
    return out
