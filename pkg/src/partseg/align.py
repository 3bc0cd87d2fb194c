"""Skeleton-text distribution alignment: text banks, segment pooling, offset adapters, loss.

Streams are always ordered ``[part_1, ..., part_I, body]``, matching the
encoder's fusion order. Nothing here is used at inference time.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import Segment
from .errors import DataError, NumericError

BODY = "body"


# --------------------------------------------------------------------------
# prompts


class Prompt(NamedTuple):
    class_name: str
    target: str  # part name or "body"
    text: str


def emit_prompts(class_names: Sequence[str], part_names: Sequence[str]) -> list[Prompt]:
    if not class_names:
        raise ValueError("need at least one class")
    out = []
    for c in class_names:
        out.append(Prompt(c, BODY, f"Please describe the action {c}"))
        for p in part_names:
            out.append(Prompt(c, p, f"Please describe the movement of {p} when doing {c}"))
    return out


def write_prompts(path: str, prompts: Sequence[Prompt]) -> None:
    with open(path, "w") as f:
        for p in prompts:
            f.write(f"{p.class_name}|{p.target}|{p.text}\n")


# --------------------------------------------------------------------------
# text banks


@dataclass
class TextBank:
    """Unit-norm text embeddings per class for the body and every part.

    ``vectors`` is ``[S, K, D]`` in stream order (parts, then body).
    ``access_count`` counts calls to :meth:`matrix`, so callers can prove the
    bank was never consulted.
    """

    class_names: list[str]
    part_names: list[str]
    vectors: np.ndarray
    access_count: int = field(default=0, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        S, K = len(self.part_names) + 1, len(self.class_names)
        if v.ndim != 3 or v.shape[:2] != (S, K):
            raise DataError(f"text bank shape {v.shape} does not match {S} streams x {K} classes")
        if not np.isfinite(v).all():
            raise DataError("text bank contains non-finite values")
        norms = np.linalg.norm(v, axis=-1)
        if (norms == 0).any():
            s, k = np.argwhere(norms == 0)[0]
            raise DataError(f"zero text vector for class {self.class_names[k]!r}, "
                            f"stream {self.stream_names[s]!r}")
        self.vectors = v / norms[..., None]

    @property
    def dim(self) -> int:
        return self.vectors.shape[-1]

    @property
    def stream_names(self) -> list[str]:
        return [*self.part_names, BODY]

    def matrix(self, dtype=torch.float32) -> torch.Tensor:
        self.access_count += 1
        return torch.as_tensor(self.vectors, dtype=dtype)

    def entry(self, class_name: str, target: str = BODY) -> np.ndarray:
        return self.vectors[self.stream_names.index(target), self.class_names.index(class_name)]

    def to_json(self) -> dict:
        classes = {}
        for k, c in enumerate(self.class_names):
            classes[c] = {
                "body": self.vectors[-1, k].tolist(),
                "parts": {p: self.vectors[i, k].tolist() for i, p in enumerate(self.part_names)},
            }
        return {"dim": self.dim, "classes": classes}


def save_text_bank(bank: TextBank, path: str) -> None:
    with open(path, "w") as f:
        json.dump(bank.to_json(), f)


def load_text_bank(path: str, class_names: Sequence[str], part_names: Sequence[str]) -> TextBank:
    """Load a bank file and check it covers every (class, part) and the body."""
    try:
        with open(path) as f:
            obj = json.load(f)
        dim = int(obj["dim"])
        entries = obj["classes"]
    except FileNotFoundError as e:
        raise DataError(f"missing file: {path}") from e
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: malformed text bank ({e})") from e

    vecs = np.zeros((len(part_names) + 1, len(class_names), dim))
    for k, c in enumerate(class_names):
        if c not in entries:
            raise DataError(f"{path}: missing class {c!r}")
        entry = entries[c]
        rows = [(i, entry.get("parts", {}).get(p), f"part {p!r}") for i, p in enumerate(part_names)]
        rows.append((len(part_names), entry.get("body"), "body"))
        for s, vec, what in rows:
            if vec is None:
                raise DataError(f"{path}: class {c!r} is missing {what}")
            if len(vec) != dim:
                raise DataError(f"{path}: class {c!r} {what} has length {len(vec)}, expected {dim}")
            vecs[s, k] = vec
    return TextBank(list(class_names), list(part_names), vecs)


def stub_text_bank(class_names: Sequence[str], part_names: Sequence[str], dim: int = 512,
                   seed: int = 0, max_abs_cos: float = 0.5) -> TextBank:
    """Deterministic stand-in for encoded descriptions.

    Each (class, stream) key seeds its own generator through a hash, so a
    vector does not depend on which other keys exist. A vector whose
    |cosine| with an earlier one reaches ``max_abs_cos`` is redrawn.
    """
    streams = [*part_names, BODY]
    vecs = np.zeros((len(streams), len(class_names), dim))
    accepted: list[np.ndarray] = []
    for s, target in enumerate(streams):
        for k, c in enumerate(class_names):
            for attempt in range(1000):
                h = hashlib.sha256(f"{seed}|{c}|{target}|{attempt}".encode()).digest()
                v = np.random.default_rng(int.from_bytes(h[:8], "little")).standard_normal(dim)
                v /= np.linalg.norm(v)
                if all(abs(v @ u) < max_abs_cos for u in accepted):
                    break
            else:
                raise ValueError(f"could not draw {len(accepted) + 1} separated vectors in {dim} dims")
            accepted.append(v)
            vecs[s, k] = v
    return TextBank(list(class_names), list(part_names), vecs)


# --------------------------------------------------------------------------
# segment pooling and class weights


def segment_pool(features: torch.Tensor, segments: Sequence[Segment]) -> tuple[torch.Tensor, torch.Tensor]:
    """Frame-mean of ``[C, T]`` features over each segment; returns ``(labels [N], emb [N, C])``."""
    rows = []
    for label, start, end in segments:
        if end < start:
            raise ValueError(f"empty segment [{start}, {end}]")
        rows.append(features[:, start:end + 1].mean(dim=1))
    labels = torch.tensor([s[0] for s in segments], dtype=torch.long)
    return labels, torch.stack(rows)


def class_weights(labels: torch.Tensor, num_classes: int, invert: bool = False) -> torch.Tensor:
    """Batch class frequency ``count(k) / count(instances)``.

    ``invert`` gives inverse-frequency weights normalised over present classes instead.
    """
    counts = torch.bincount(labels, minlength=num_classes).double()
    if not invert:
        return counts / counts.sum()
    inv = torch.where(counts > 0, 1.0 / counts.clamp(min=1), torch.zeros_like(counts))
    return inv / inv.sum()


# --------------------------------------------------------------------------
# semantic offset adapters


SOA_VARIANTS = ("none", "residual", "prompt", "cross_domain")


@dataclass
class SOAConfig:
    variant: str = "residual"
    hidden: int = 256
    dropout: float = 0.1
    num_tokens: int = 5
    attn_dim: int = 64

    def __post_init__(self):
        if self.variant not in SOA_VARIANTS:
            raise ValueError(f"unknown SOA variant {self.variant!r}; choose from {SOA_VARIANTS}")


class SemanticOffsetAdapter(nn.Module):
    """Learned offset on the static text bank ``[S, K, D]``.

    * ``residual``: ``T + MLP(T)``; the last affine map starts at zero, so the
      adapter is the identity before any update.
    * ``prompt``: learnable token embeddings added to the bag-of-tokens text
      representation (the stub encoder sums token vectors).
    * ``cross_domain``: queries from per-class motion embeddings, keys/values
      from text; ``T + softmax(QK^T / sqrt(d)) V * T`` (elementwise).
    """

    def __init__(self, dim: int, cfg: SOAConfig):
        super().__init__()
        self.variant = cfg.variant
        if cfg.variant == "residual":
            self.mlp = nn.Sequential(nn.Linear(dim, cfg.hidden), nn.GELU(),
                                     nn.Dropout(cfg.dropout), nn.Linear(cfg.hidden, dim))
            nn.init.zeros_(self.mlp[-1].weight)
            nn.init.zeros_(self.mlp[-1].bias)
        elif cfg.variant == "prompt":
            self.tokens = nn.Parameter(0.02 * torch.randn(cfg.num_tokens, dim))
        elif cfg.variant == "cross_domain":
            self.W_Q = nn.Linear(dim, cfg.attn_dim, bias=False)
            self.W_K = nn.Linear(dim, cfg.attn_dim, bias=False)
            self.W_V = nn.Linear(dim, dim, bias=False)
            nn.init.zeros_(self.W_V.weight)

    def forward(self, text: torch.Tensor, context: torch.Tensor | None = None) -> torch.Tensor:
        if self.variant == "none":
            return text
        if self.variant == "residual":
            return text + self.mlp(text)
        if self.variant == "prompt":
            return text + self.tokens.sum(dim=0)
        if context is None:
            raise ValueError("cross_domain adapter needs motion context embeddings")
        if context.shape != text.shape:
            raise ValueError(f"context {tuple(context.shape)} must match text {tuple(text.shape)}")
        q, k, v = self.W_Q(context), self.W_K(text), self.W_V(text)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(k.shape[-1]), dim=-1) @ v
        return text + att * text


def apply_soa(text: torch.Tensor, adapter: SemanticOffsetAdapter,
              context: torch.Tensor | None = None) -> torch.Tensor:
    return adapter(text, context)


# --------------------------------------------------------------------------
# loss


def alignment_loss(instances: Sequence[tuple[torch.Tensor, torch.Tensor]], text: torch.Tensor,
                   temperature: float = 0.1, invert_weights: bool = False) -> torch.Tensor:
    """Class-weighted KL(one-hot || softmax(cos / temperature)), summed over streams.

    ``instances[s]`` is ``(labels [N], embeddings [N, D])`` for stream ``s``,
    already in text space; ``text`` is ``[S, K, D]``. Per stream the rows are
    weighted by the batch frequency of their class and averaged.
    """
    if len(instances) != text.shape[0]:
        raise ValueError(f"{len(instances)} instance streams vs {text.shape[0]} text streams")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    K = text.shape[1]
    total = text.new_zeros(())
    for s, (labels, emb) in enumerate(instances):
        if emb.shape[0] == 0:
            raise ValueError("alignment needs at least one instance")
        norms = emb.norm(dim=1)
        if (norms == 0).any():
            raise NumericError(f"alignment: zero-norm instance embedding in stream {s}")
        cos = (emb / norms[:, None]) @ F.normalize(text[s], dim=1).t()
        nll = -F.log_softmax(cos / temperature, dim=1).gather(1, labels[:, None])[:, 0]
        w = class_weights(labels, K, invert_weights).to(nll.dtype)
        total = total + (w[labels] * nll).mean()
    return total


class AlignmentHead(nn.Module):
    """Training-only branch: per-stream projections into text space and the offset adapter."""

    def __init__(self, hidden: int, dim: int, num_streams: int, soa: SOAConfig | None = None,
                 temperature: float = 0.1, invert_weights: bool = False):
        super().__init__()
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.projections = nn.ModuleList([nn.Linear(hidden, dim, bias=False) for _ in range(num_streams)])
        self.soa = SemanticOffsetAdapter(dim, soa or SOAConfig())
        self.temperature = temperature
        self.invert_weights = invert_weights

    def soa_parameters(self):
        return list(self.soa.parameters())

    def projection_parameters(self):
        return list(self.projections.parameters())

    def project(self, stream_instances: Sequence[tuple[torch.Tensor, torch.Tensor]]):
        return [(y, proj(e)) for proj, (y, e) in zip(self.projections, stream_instances)]

    def motion_context(self, projected, text: torch.Tensor) -> torch.Tensor:
        """Per-class mean of projected instances; classes absent from the batch fall back to text."""
        ctx = text.clone()
        for s, (labels, emb) in enumerate(projected):
            for k in labels.unique().tolist():
                ctx[s, k] = emb[labels == k].mean(dim=0)
        return ctx

    def forward(self, stream_instances, text: torch.Tensor) -> torch.Tensor:
        projected = self.project(stream_instances)
        context = self.motion_context(projected, text) if self.soa.variant == "cross_domain" else None
        adapted = apply_soa(text, self.soa, context)
        return alignment_loss(projected, adapted, self.temperature, self.invert_weights)
