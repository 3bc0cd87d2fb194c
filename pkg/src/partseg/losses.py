"""Training objectives: framewise CE, GS-TMSE smoothing, boundary regression, composite."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from .errors import NumericError

log = logging.getLogger(__name__)

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    alpha: float = 1.0  # GS-TMSE
    beta: float = 0.1  # boundary regression
    gamma: float = 1.0  # skeleton-text alignment
    w_p: float | None = None  # positive boundary weight; None -> per-batch neg/pos ratio
    sigma: float = 1.0
    clamp: float = 4.0
    similarity_source: str = "input"

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "sigma", "clamp"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")
        if self.w_p is not None and self.w_p < 0:
            raise ValueError("w_p must be non-negative")
        if self.similarity_source not in ("input", "fused"):
            raise ValueError("similarity_source must be 'input' or 'fused'")


def ce_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean framewise cross-entropy; ``logits`` is ``[K, T]``."""
    return F.cross_entropy(logits.t(), labels)


def gs_tmse(logits: torch.Tensor, features: torch.Tensor, sigma: float = 1.0,
            clamp: float = 4.0) -> torch.Tensor:
    """Gaussian-similarity-weighted truncated MSE on adjacent log-probabilities.

    ``logits`` is ``[K, T]`` and ``features`` ``[D, T]``. Frame pairs whose
    features differ a lot (likely true transitions) get a small weight.
    """
    K, T = logits.shape
    if T < 2:
        log.info("gs_tmse: sequence of length %d has no adjacent frames, returning 0", T)
        return logits.sum() * 0.0
    logp = F.log_softmax(logits, dim=0)
    delta = (logp[:, 1:] - logp[:, :-1]).abs().clamp(max=clamp)
    dist2 = ((features[:, 1:] - features[:, :-1]) ** 2).sum(dim=0)
    g = torch.exp(-dist2 / (2 * sigma ** 2))
    return (g * (delta ** 2).sum(dim=0)).sum() / ((T - 1) * K)


def positive_weight(targets: Sequence[torch.Tensor]) -> float:
    """Negative/positive frame ratio over a batch, floored at 1."""
    pos = sum(float(t.sum()) for t in targets)
    neg = sum(float(t.numel()) for t in targets) - pos
    return max(1.0, neg / pos) if pos > 0 else 1.0


def boundary_loss(stage_probs: Sequence[torch.Tensor], target: torch.Tensor, w_p: float = 1.0) -> torch.Tensor:
    """Weighted binary log-loss, averaged over frames and then over stages."""
    if target.dim() != 1:
        raise ValueError("boundary target must be 1-D")
    total = 0.0
    for p in stage_probs:
        if p.shape != target.shape:
            raise ValueError(f"boundary probs {tuple(p.shape)} vs target {tuple(target.shape)}")
        if torch.isnan(p).any():
            raise NumericError("NaN in boundary probabilities")
        p = p.clamp(PROB_EPS, 1 - PROB_EPS)
        nll = w_p * target * torch.log(p) + (1 - target) * torch.log(1 - p)
        total = total - nll.mean()
    return total / len(stage_probs)


def total_loss(components: dict[str, torch.Tensor], weights: LossWeights) -> tuple[torch.Tensor, dict[str, float]]:
    """``ce + alpha*gs_tmse + beta*boundary + gamma*align``; missing components count as 0.

    Returns the scalar and a float breakdown holding every raw component plus
    ``cls`` and ``total``.
    """
    zero = next(iter(components.values())) * 0.0
    get = lambda k: components.get(k, zero)  # noqa: E731
    cls = get("ce") + weights.alpha * get("gs_tmse") + weights.beta * get("boundary")
    loss = cls + weights.gamma * get("align") if "align" in components else cls
    breakdown = {k: float(v.detach()) for k, v in components.items()}
    breakdown["cls"] = float(cls.detach())
    breakdown["total"] = float(loss.detach())
    return loss, breakdown
