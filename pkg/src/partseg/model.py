"""Full segmentation network (encoder + boundary branch) and checkpoint archives.

Checkpoint parameter names are the module's ``state_dict`` keys, e.g.
``body.layer3.W_Qt``, ``parts.left_limb.W_g``, ``spatial.adj``,
``boundary.stages.0.conv_in.weight``. Training-only alignment parameters are
stored under ``align.`` and never loaded for inference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .boundary import BoundaryBranch, detect_boundaries, majority_smooth
from .encoder import EncoderConfig, EncoderOutput, PartEncoder
from .errors import DataError


@dataclass
class ModelConfig:
    encoder: EncoderConfig
    boundary_stages: int = 3
    boundary_layers: int = 10
    boundary_width: int = 64

    def to_json(self) -> dict:
        return {"encoder": self.encoder.to_json(), "boundary_stages": self.boundary_stages,
                "boundary_layers": self.boundary_layers, "boundary_width": self.boundary_width}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["encoder"] = EncoderConfig.from_json(obj["encoder"])
        return cls(**obj)


@dataclass
class ModelOutput:
    logits: torch.Tensor
    boundary: list[torch.Tensor]  # stage-0 probabilities then each refinement stage
    features: EncoderOutput = field(repr=False)


class SegmentationModel(PartEncoder):
    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg.encoder)
        self.model_cfg = cfg
        self.boundary = BoundaryBranch(cfg.encoder.hidden, cfg.boundary_stages,
                                       cfg.boundary_layers, cfg.boundary_width)

    def forward(self, x: torch.Tensor) -> ModelOutput:
        enc = super().forward(x)
        return ModelOutput(enc.logits, self.boundary(enc.fused), enc)

    @torch.no_grad()
    def predict(self, x: torch.Tensor, smooth: bool = False, threshold: float = 0.5) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            out = self(x)
        finally:
            self.train(was_training)
        pred = out.logits.argmax(dim=0).cpu().numpy()
        if smooth:
            pred = majority_smooth(pred, detect_boundaries(out.boundary[-1], threshold))
        return pred


def save_checkpoint(path: str, model: SegmentationModel, align=None, meta: dict | None = None) -> None:
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    if align is not None:
        arrays.update({f"align.{k}": v.detach().cpu().numpy() for k, v in align.state_dict().items()})
    arrays["__config__"] = np.array(json.dumps(model.model_cfg.to_json()))
    arrays["__meta__"] = np.array(json.dumps(meta or {}))
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path: str, dtype=torch.float32) -> tuple[SegmentationModel, dict]:
    """Rebuild the inference model from an archive; alignment arrays are skipped."""
    try:
        with np.load(path, allow_pickle=False) as z:
            cfg = ModelConfig.from_json(json.loads(str(z["__config__"])))
            meta = json.loads(str(z["__meta__"]))
            state = {k: torch.as_tensor(z[k]) for k in z.files
                     if not k.startswith("__") and not k.startswith("align.")}
    except (OSError, KeyError, ValueError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    model = SegmentationModel(cfg).to(dtype)
    model.load_state_dict(state)
    model.eval()
    return model, meta


def load_align_state(path: str) -> dict[str, torch.Tensor]:
    with np.load(path, allow_pickle=False) as z:
        return {k[len("align."):]: torch.as_tensor(z[k]) for k in z.files if k.startswith("align.")}
