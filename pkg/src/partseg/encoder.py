"""Disentangled part encoder: parallel part/body temporal streams over a shared spatial bank.

Feature maps are ``[C_hid, T]`` tensors without a batch axis; every sequence
is encoded on its own so variable lengths never need padding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .data import PartMap
from .graph import SpatialBank, build_multihop


@dataclass
class EncoderConfig:
    num_joints: int
    in_channels: int
    num_classes: int
    part_map: PartMap
    hidden: int = 64
    bottleneck: int = 16
    num_layers: int = 10
    max_hops: int = 13
    bank_channels: int = 16
    bank_hidden: int = 64
    interaction_per_layer: bool = False
    normalize_attention: bool = True
    layer_norm: bool = True

    def __post_init__(self):
        if self.num_layers < 2:
            raise ValueError("num_layers must be >= 2")
        if self.bottleneck > self.hidden:
            raise ValueError("bottleneck width must not exceed hidden width")
        self.part_map.validate(self.num_joints)

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["part_map"] = self.part_map.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderConfig":
        obj = dict(obj)
        obj["part_map"] = PartMap.from_json(obj["part_map"])
        return cls(**obj)


# --------------------------------------------------------------------------
# functional ops


def temporal_init(S1: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """Kernel-1 convolution lifting a ``[T, J]`` subgroup to ``[C_hid, T]``."""
    out = weight @ S1.t()
    return out if bias is None else out + bias[:, None]


def linear_attention(F_: torch.Tensor, W_Qt, W_Kt, W_Vt, W_t, normalize: bool = True) -> torch.Tensor:
    """``ReLU(sigmoid(Q) (sigmoid(K)^T V) W_t + F)`` with frames as tokens.

    The ``C_t x C_t`` key/value summary is formed first so cost is linear in T.
    With ``normalize`` the summary is a mean over frames instead of a sum.
    """
    X = F_.t()  # [T, C]
    q = torch.sigmoid(X @ W_Qt)
    k = torch.sigmoid(X @ W_Kt)
    v = X @ W_Vt
    kv = k.t() @ v
    if normalize:
        kv = kv / X.shape[0]
    return torch.relu((q @ kv @ W_t).t() + F_)


def channel_attention(query: torch.Tensor, key: torch.Tensor, normalize: bool = True) -> torch.Tensor:
    """Row-stochastic ``[C, C]`` map ``softmax(query @ key^T)`` over the key axis."""
    logits = query @ key.t()
    if normalize:
        logits = logits / query.shape[1]
    return torch.softmax(logits, dim=-1)


def st_cross_attention(F_: torch.Tensor, S: torch.Tensor, W_f: torch.Tensor,
                       normalize: bool = True) -> torch.Tensor:
    """Spatial subgroup ``S`` ([T, J]) re-weights the temporal channels of ``F_``."""
    A = channel_attention(W_f @ S.t(), F_, normalize)
    return A @ F_ + F_


def part_global_interaction(F_i: torch.Tensor, F_g: torch.Tensor, W_g: torch.Tensor,
                            normalize: bool = True) -> torch.Tensor:
    A = channel_attention(W_g @ F_g, F_i, normalize)
    return A @ F_i + F_i


def fuse(parts: list[torch.Tensor], F_g: torch.Tensor, weight: torch.Tensor,
         bias: torch.Tensor | None = None) -> torch.Tensor:
    """Concatenate ``[part_1 .. part_I, body]`` on channels and project back with a 1x1 conv."""
    lengths = {p.shape[1] for p in parts} | {F_g.shape[1]}
    if len(lengths) != 1:
        raise ValueError(f"streams disagree on T: {sorted(lengths)}")
    out = weight @ torch.cat([*parts, F_g], dim=0)
    return out if bias is None else out + bias[:, None]


def classify(F_: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    return weight @ F_ + bias[:, None]


# --------------------------------------------------------------------------
# modules


def _uniform(*shape: int, fan_in: int | None = None) -> nn.Parameter:
    bound = 1.0 / math.sqrt(fan_in or shape[0])
    return nn.Parameter(torch.empty(*shape).uniform_(-bound, bound))


class TemporalLayer(nn.Module):
    """Parameters of one stream layer: linear attention plus spatial cross-attention.

    Both residual updates can double the feature scale, so by default each
    layer ends with a per-frame LayerNorm over channels.
    """

    def __init__(self, hidden: int, bottleneck: int, joints: int, layer_norm: bool = True):
        super().__init__()
        self.W_Qt = _uniform(hidden, bottleneck)
        self.W_Kt = _uniform(hidden, bottleneck)
        self.W_Vt = _uniform(hidden, bottleneck)
        self.W_t = _uniform(bottleneck, hidden)
        self.W_f = _uniform(hidden, joints, fan_in=joints)
        self.norm = nn.LayerNorm(hidden) if layer_norm else None

    def forward(self, F_, S, normalize=True):
        F_ = linear_attention(F_, self.W_Qt, self.W_Kt, self.W_Vt, self.W_t, normalize)
        F_ = st_cross_attention(F_, S, self.W_f, normalize)
        return F_ if self.norm is None else self.norm(F_.t()).t()


class Stream(nn.Module):
    def __init__(self, joints: int, hidden: int, bottleneck: int, num_layers: int, with_interaction: bool,
                 layer_norm: bool = True):
        super().__init__()
        self.init = nn.Conv1d(joints, hidden, 1)
        # registered as layer2..layerL so checkpoint keys read "body.layer3.W_Qt"
        self.layer_names = [f"layer{k}" for k in range(2, num_layers + 1)]
        for name in self.layer_names:
            self.add_module(name, TemporalLayer(hidden, bottleneck, joints, layer_norm))
        if with_interaction:
            self.W_g = _uniform(hidden, hidden)

    def start(self, S: torch.Tensor) -> torch.Tensor:
        return temporal_init(S[0], self.init.weight[:, :, 0], self.init.bias)


def part_key(name: str, index: int) -> str:
    key = re.sub(r"\W+", "_", name).strip("_")
    return key or f"part{index}"


@dataclass
class EncoderOutput:
    logits: torch.Tensor  # [K, T]
    fused: torch.Tensor  # [C_hid, T]
    body: torch.Tensor
    parts: list[torch.Tensor]
    parts_before_interaction: list[torch.Tensor] = field(default_factory=list)


class PartEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        pm = cfg.part_map
        graph = build_multihop(pm.edges, cfg.num_joints, 1)
        hops = min(cfg.max_hops, max(1, graph.diameter))
        graph = build_multihop(pm.edges, cfg.num_joints, hops)
        self.spatial = SpatialBank(graph, cfg.in_channels, cfg.num_layers,
                                   cfg.bank_channels, cfg.bank_hidden)
        args = (cfg.hidden, cfg.bottleneck, cfg.num_layers)
        self.body = Stream(cfg.num_joints, *args, with_interaction=False, layer_norm=cfg.layer_norm)
        keys = [part_key(n, i) for i, n in enumerate(pm.names)]
        if len(set(keys)) != len(keys):
            keys = [f"part{i}" for i in range(len(keys))]
        self.part_keys = keys
        self.parts = nn.ModuleDict({k: Stream(len(idx), *args, with_interaction=True,
                                                   layer_norm=cfg.layer_norm)
                                    for k, (_, idx) in zip(keys, pm.parts)})
        self.fuse = nn.Conv1d(cfg.hidden * (len(keys) + 1), cfg.hidden, 1)
        self.head = nn.Conv1d(cfg.hidden, cfg.num_classes, 1)

    def forward(self, x: torch.Tensor) -> EncoderOutput:
        """``x`` is ``[T, V, C]``."""
        cfg, norm = self.cfg, self.cfg.normalize_attention
        bank = self.spatial.split(self.spatial(x), cfg.part_map)
        part_streams = [self.parts[k] for k in self.part_keys]

        F_g = self.body.start(bank.body)
        F_parts = [s.start(b) for s, b in zip(part_streams, bank.parts)]
        for k in range(2, cfg.num_layers + 1):
            name = f"layer{k}"
            F_g = self.body.get_submodule(name)(F_g, bank.body[k - 1], norm)
            F_parts = [s.get_submodule(name)(f, b[k - 1], norm)
                       for s, f, b in zip(part_streams, F_parts, bank.parts)]
            if cfg.interaction_per_layer:
                F_parts = [part_global_interaction(f, F_g, s.W_g, norm)
                           for s, f in zip(part_streams, F_parts)]

        before = list(F_parts)
        if not cfg.interaction_per_layer:
            F_parts = [part_global_interaction(f, F_g, s.W_g, norm)
                       for s, f in zip(part_streams, F_parts)]
        fused = fuse(F_parts, F_g, self.fuse.weight[:, :, 0], self.fuse.bias)
        logits = classify(fused, self.head.weight[:, :, 0], self.head.bias)
        return EncoderOutput(logits, fused, F_g, F_parts, before)
