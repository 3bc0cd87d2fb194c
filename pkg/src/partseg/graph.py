"""Multi-hop skeleton adjacency and the one-pass spatial feature bank."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .data import PartMap


@dataclass
class MultiHopGraph:
    """``hop_masks[z - 1][i, j] == 1`` iff joints i, j are exactly z edges apart, or i == j."""

    hop_masks: np.ndarray  # [Z, V, V]
    trainable_adj: np.ndarray  # [Z, V, V], initial value of the learned residual
    distances: np.ndarray  # [V, V], -1 where unreachable

    @property
    def max_hops(self) -> int:
        return self.hop_masks.shape[0]

    @property
    def num_joints(self) -> int:
        return self.hop_masks.shape[1]

    @property
    def diameter(self) -> int:
        return int(self.distances.max(initial=0))


def hop_distances(edges: Sequence[tuple[int, int]], num_joints: int) -> np.ndarray:
    """All-pairs edge counts by breadth-first search; -1 marks unreachable pairs."""
    nbrs: list[list[int]] = [[] for _ in range(num_joints)]
    for a, b in edges:
        if not (0 <= a < num_joints and 0 <= b < num_joints):
            raise ValueError(f"edge ({a}, {b}) out of range for V={num_joints}")
        nbrs[a].append(b)
        nbrs[b].append(a)
    dist = np.full((num_joints, num_joints), -1, dtype=np.int64)
    for src in range(num_joints):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[src, v] < 0:
                    dist[src, v] = dist[src, u] + 1
                    queue.append(v)
    return dist


def build_multihop(edges: Sequence[tuple[int, int]], num_joints: int, max_hops: int) -> MultiHopGraph:
    if max_hops < 1:
        raise ValueError(f"max_hops must be >= 1, got {max_hops}")
    dist = hop_distances(edges, num_joints)
    eye = np.eye(num_joints)
    masks = np.stack([((dist == z) | (eye > 0)).astype(np.float64) for z in range(1, max_hops + 1)])
    return MultiHopGraph(masks, np.zeros_like(masks), dist)


def part_pool(features, joint_indices: Sequence[int], axis: int = 0):
    """Mean over the listed entries of the joint axis; works on numpy arrays and tensors."""
    if len(joint_indices) == 0:
        raise ValueError("cannot pool over an empty joint set")
    if isinstance(features, torch.Tensor):
        idx = torch.as_tensor(list(joint_indices), device=features.device)
        return features.index_select(axis, idx).mean(dim=axis)
    return np.take(np.asarray(features), list(joint_indices), axis=axis).mean(axis=axis)


@dataclass
class SpatialBankOutput:
    body: torch.Tensor  # [l, T, V]
    parts: list[torch.Tensor]  # each [l, T, |Q_i|]


class SpatialBank(nn.Module):
    """Graph convolution over all hop masks at once, squeezed to ``num_layers`` channels.

    ``x`` is ``[T, V, C]``. Each joint gathers ``(A_z + adj_z) @ (x W_s)`` for
    every hop z; the hop-concatenated features go through a two-layer MLP that
    outputs one channel per temporal layer.
    """

    def __init__(self, graph: MultiHopGraph, in_channels: int, num_layers: int,
                 mid_channels: int = 16, mlp_hidden: int = 64, activation: nn.Module | None = None):
        super().__init__()
        if num_layers < 2:
            raise ValueError("num_layers must be >= 2")
        Z, V = graph.max_hops, graph.num_joints
        self.num_layers = num_layers
        self.register_buffer("hop_masks", torch.as_tensor(graph.hop_masks, dtype=torch.float32))
        self.adj = nn.Parameter(torch.as_tensor(graph.trainable_adj, dtype=torch.float32).clone())
        self.W_s = nn.Parameter(torch.empty(mid_channels, in_channels))
        nn.init.kaiming_uniform_(self.W_s, a=5 ** 0.5)
        self.mlp = nn.Sequential(
            nn.Linear(Z * mid_channels, mlp_hidden),
            activation if activation is not None else nn.ReLU(),
            nn.Linear(mlp_hidden, num_layers),
        )
        self.num_joints = V

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        T, V, _ = x.shape
        if V != self.num_joints:
            raise ValueError(f"expected {self.num_joints} joints, got {V}")
        h = x @ self.W_s.t()  # [T, V, Cm]
        adj = self.hop_masks + self.adj  # [Z, V, V]
        y = torch.einsum("zvu,tuc->tvzc", adj, h).reshape(T, V, -1)
        return self.mlp(y).permute(2, 0, 1)  # [l, T, V]

    def split(self, bank: torch.Tensor, parts: PartMap) -> SpatialBankOutput:
        """Per-part banks are the whole-body bank restricted to each part's joints."""
        return SpatialBankOutput(bank, [bank[:, :, idx] for _, idx in parts.parts])


def spatial_bank(x: torch.Tensor, module: SpatialBank, parts: PartMap) -> SpatialBankOutput:
    return module.split(module(x), parts)
