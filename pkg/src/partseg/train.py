"""Training loop, evaluation and prediction."""

from __future__ import annotations

import contextlib
import json
import logging
import math
import os
import random
import shutil
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .align import AlignmentHead, SOAConfig, TextBank, load_text_bank, segment_pool, stub_text_bank
from .boundary import boundary_targets
from .config import TrainConfig
from .data import Dataset, SkeletonSequence, load_dataset, segments_from_frames
from .encoder import EncoderConfig
from .errors import DataError, NumericError
from .losses import LossWeights, boundary_loss, ce_loss, gs_tmse, positive_weight, total_loss
from .metrics import MetricsReport, evaluate
from .model import ModelConfig, SegmentationModel, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


def soa_learning_rate(epoch: int, lr: float = 0.01, lr_min: float = 0.001, decay_epochs: int = 50) -> float:
    """Cosine decay from ``lr`` to ``lr_min`` over ``decay_epochs``, then held."""
    if epoch >= decay_epochs:
        return lr_min
    return lr_min + 0.5 * (lr - lr_min) * (1 + math.cos(math.pi * epoch / decay_epochs))


def set_deterministic(seed: int, deterministic: bool) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


@contextlib.contextmanager
def seeded(seed: int, deterministic: bool):
    """Seed every generator; in deterministic mode run single-threaded, restoring the old settings after."""
    threads, strict = torch.get_num_threads(), torch.are_deterministic_algorithms_enabled()
    set_deterministic(seed, deterministic)
    try:
        yield
    finally:
        if deterministic:
            torch.set_num_threads(threads)
            torch.use_deterministic_algorithms(strict)


def model_config_for(cfg: TrainConfig, ds: Dataset) -> ModelConfig:
    m = cfg.model
    seq = ds.sequences[0]
    enc = EncoderConfig(seq.num_joints, seq.num_channels, ds.num_classes, ds.part_map,
                        hidden=m.hidden, bottleneck=m.bottleneck, num_layers=m.layers,
                        max_hops=m.max_hops, bank_channels=m.bank_channels, bank_hidden=m.bank_hidden,
                        interaction_per_layer=m.interaction_per_layer,
                        normalize_attention=m.normalize_attention, layer_norm=m.layer_norm)
    return ModelConfig(enc, m.boundary_stages, m.boundary_layers, m.boundary_width)


def loss_weights_for(cfg: TrainConfig) -> LossWeights:
    l = cfg.loss
    return LossWeights(l.alpha, l.beta, l.gamma, None if l.w_p == "auto" else float(l.w_p),
                       l.sigma, l.clamp, l.similarity_source)


def split_indices(n: int, val_fraction: float) -> tuple[list[int], list[int]]:
    """The last ``val_fraction`` of sequences (by index) validate; at least one sequence trains."""
    n_val = min(int(round(n * val_fraction)), n - 1)
    return list(range(n - n_val)), list(range(n - n_val, n))


@dataclass
class Batch:
    x: list[torch.Tensor]
    labels: list[torch.Tensor]
    boundary: list[torch.Tensor]
    segments: list[list]


def make_batch(seqs: list[SkeletonSequence], radius: int, dtype=torch.float32) -> Batch:
    return Batch(
        [torch.as_tensor(s.data, dtype=dtype) for s in seqs],
        [torch.as_tensor(s.labels) for s in seqs],
        [torch.as_tensor(boundary_targets(s.labels, radius), dtype=dtype) for s in seqs],
        [segments_from_frames(s.labels) for s in seqs],
    )


def batch_loss(model: SegmentationModel, batch: Batch, weights: LossWeights,
               align: AlignmentHead | None = None, text: Callable[[], torch.Tensor] | None = None):
    """Composite loss over a batch of whole sequences; returns ``(loss, breakdown)``.

    Framewise terms are averaged over sequences. Alignment instances from all
    sequences are pooled so class weights reflect the whole batch. ``text``
    is only called when the alignment term is active.
    """
    w_p = weights.w_p if weights.w_p is not None else positive_weight(batch.boundary)
    ce = gs = brb = 0.0
    streams: list[list] = []
    for x, y, b, segs in zip(batch.x, batch.labels, batch.boundary, batch.segments):
        out = model(x)
        if weights.similarity_source == "input":
            sim = x.mean(dim=1).t()
        else:
            sim = out.features.fused.detach()
        ce = ce + ce_loss(out.logits, y)
        gs = gs + gs_tmse(out.logits, sim, weights.sigma, weights.clamp)
        brb = brb + boundary_loss(out.boundary, b, w_p)
        if align is not None:
            feats = [*out.features.parts, out.features.body]
            streams.append([segment_pool(f, segs) for f in feats])
    n = len(batch.x)
    comps = {"ce": ce / n, "gs_tmse": gs / n, "boundary": brb / n}
    if align is not None and weights.gamma > 0:
        per_stream = []
        for s in range(len(streams[0])):
            per_stream.append((torch.cat([seq[s][0] for seq in streams]),
                               torch.cat([seq[s][1] for seq in streams])))
        comps["align"] = align(per_stream, text())
    for name, value in comps.items():
        if not torch.isfinite(value):
            raise NumericError(f"non-finite {name} loss ({float(value)})")
    return total_loss(comps, weights)


@dataclass
class RunRecord:
    out_dir: str
    seed: int
    epochs: list[dict] = field(default_factory=list)
    checkpoint: str = ""
    best_checkpoint: str = ""
    best_f1: float = -1.0
    config_snapshot: str = ""
    wall_clock: float = 0.0
    model: SegmentationModel | None = field(default=None, repr=False)
    align: AlignmentHead | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k not in ("model", "align")}


def predict_all(model: SegmentationModel, seqs: list[SkeletonSequence], smooth: bool = False,
                threshold: float = 0.5, dtype=torch.float32) -> list[np.ndarray]:
    return [model.predict(torch.as_tensor(s.data, dtype=dtype), smooth, threshold) for s in seqs]


def score(model, seqs, cfg: TrainConfig, smooth: bool = False) -> MetricsReport:
    preds = predict_all(model, seqs, smooth, cfg.boundary.threshold)
    return evaluate([(p, s.labels) for p, s in zip(preds, seqs)],
                    names=[s.sequence_id for s in seqs], exclude=cfg.metrics.exclude_classes,
                    matching=cfg.metrics.matching)


def _summary(report: MetricsReport) -> dict:
    return {"acc": report.acc, "edit": report.edit, "f1": {str(t): v for t, v in report.f1.items()}}


def train(cfg: TrainConfig, dataset: Dataset | None = None, text_bank: TextBank | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> RunRecord:
    """Fit the model described by ``cfg``; every artefact goes under ``cfg.run.out_dir``.

    ``dataset`` and ``text_bank`` override what the config points at. When
    ``loss.gamma`` is 0 the text bank is never loaded or read.
    """
    cfg.validate()
    with seeded(cfg.run.seed, cfg.run.deterministic):
        return _train(cfg, dataset, text_bank, on_epoch)


def _train(cfg, dataset, text_bank, on_epoch) -> RunRecord:
    start = time.time()
    ds = dataset if dataset is not None else load_dataset(cfg.resolve(cfg.data.manifest))
    out_dir = cfg.resolve(cfg.run.out_dir)
    os.makedirs(out_dir, exist_ok=True)

    record = RunRecord(out_dir, cfg.run.seed)
    if cfg.source_path is not None:
        record.config_snapshot = os.path.join(out_dir, "config.toml")
        shutil.copyfile(cfg.source_path, record.config_snapshot)
    else:
        record.config_snapshot = os.path.join(out_dir, "config.toml")
        with open(record.config_snapshot, "w") as f:
            f.write(cfg.dumps())

    train_idx, val_idx = split_indices(len(ds.sequences), cfg.data.val_fraction)
    train_seqs = [ds.sequences[i] for i in train_idx]
    val_seqs = [ds.sequences[i] for i in val_idx]

    model = SegmentationModel(model_config_for(cfg, ds))
    weights = loss_weights_for(cfg)

    align = None
    bank_cache: dict[str, torch.Tensor] = {}
    if weights.gamma > 0:
        bank = text_bank
        if bank is None:
            parts = ds.part_map.names
            if cfg.align.text_bank:
                bank = load_text_bank(cfg.resolve(cfg.align.text_bank), ds.classes, parts)
            else:
                bank = stub_text_bank(ds.classes, parts, cfg.align.stub_dim, cfg.align.stub_seed)
        soa = SOAConfig(cfg.soa.variant, cfg.soa.hidden, cfg.soa.dropout, cfg.soa.num_tokens)
        align = AlignmentHead(cfg.model.hidden, bank.dim, ds.part_map.num_parts + 1, soa,
                              cfg.align.temperature, cfg.align.invert_class_weights)

        def text() -> torch.Tensor:
            if "t" not in bank_cache:
                bank_cache["t"] = bank.matrix()
            return bank_cache["t"]
    else:
        text = None

    main_params = list(model.parameters()) + (align.projection_parameters() if align else [])
    opt = torch.optim.Adam(main_params, lr=cfg.optim.lr)
    soa_params = align.soa_parameters() if align else []
    soa_opt = torch.optim.SGD(soa_params, lr=cfg.soa.lr, momentum=cfg.soa.momentum) if soa_params else None

    rng = np.random.default_rng(cfg.run.seed)
    meta = {"classes": ds.classes, "seed": cfg.run.seed}
    for epoch in range(cfg.optim.epochs):
        if soa_opt is not None:
            for g in soa_opt.param_groups:
                g["lr"] = soa_learning_rate(epoch, cfg.soa.lr, cfg.soa.lr_min, cfg.soa.decay_epochs)
        model.train()
        if align is not None:
            align.train()
        order = rng.permutation(len(train_seqs))
        sums: dict[str, float] = {}
        n_batches = 0
        for b0 in range(0, len(order), cfg.optim.batch_size):
            seqs = [train_seqs[i] for i in order[b0:b0 + cfg.optim.batch_size]]
            batch = make_batch(seqs, cfg.boundary.radius)
            loss, parts = batch_loss(model, batch, weights, align, text)
            opt.zero_grad()
            if soa_opt is not None:
                soa_opt.zero_grad()
            loss.backward()
            opt.step()
            if soa_opt is not None:
                soa_opt.step()
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1

        entry = {"epoch": epoch, "loss": {k: v / n_batches for k, v in sums.items()}}
        entry["train"] = _summary(score(model, train_seqs, cfg))
        if val_seqs:
            entry["val"] = _summary(score(model, val_seqs, cfg))
        select = entry.get("val", entry["train"])["f1"]["0.5"]
        record.epochs.append(entry)
        log.info("epoch %d loss %.4f train acc %.1f", epoch, entry["loss"]["total"], entry["train"]["acc"])
        if on_epoch is not None:
            on_epoch(entry)

        last = epoch == cfg.optim.epochs - 1
        if last or (epoch + 1) % cfg.run.checkpoint_every == 0:
            record.checkpoint = os.path.join(out_dir, "checkpoint_last.npz")
            save_checkpoint(record.checkpoint, model, align, {**meta, "epoch": epoch})
        if select > record.best_f1:
            record.best_f1 = select
            record.best_checkpoint = os.path.join(out_dir, "checkpoint_best.npz")
            save_checkpoint(record.best_checkpoint, model, align, {**meta, "epoch": epoch})

    record.wall_clock = time.time() - start
    with open(os.path.join(out_dir, "run.json"), "w") as f:
        json.dump(record.to_json(), f, indent=1)
    record.model = model
    record.align = align
    return record


def predict(checkpoint: str | SegmentationModel, seq: SkeletonSequence, smooth: bool = False,
            threshold: float = 0.5) -> np.ndarray:
    """Framewise argmax labels, optionally majority-smoothed between detected boundaries."""
    model = load_checkpoint(checkpoint)[0] if isinstance(checkpoint, str) else checkpoint
    enc = model.cfg
    if (seq.num_joints, seq.num_channels) != (enc.num_joints, enc.in_channels):
        raise DataError(f"sequence has V={seq.num_joints}, C={seq.num_channels}; checkpoint expects "
                        f"V={enc.num_joints}, C={enc.in_channels}")
    return model.predict(torch.as_tensor(seq.data), smooth, threshold)


def evaluate_checkpoint(checkpoint: str, ds: Dataset, smooth: bool = False, threshold: float = 0.5,
                        exclude: list[int] | tuple = (), matching: str = "optimal") -> MetricsReport:
    model, _ = load_checkpoint(checkpoint)
    preds = [predict(model, s, smooth, threshold) for s in ds.sequences]
    return evaluate([(p, s.labels) for p, s in zip(preds, ds.sequences)],
                    names=[s.sequence_id for s in ds.sequences], exclude=exclude, matching=matching)
