"""Frame accuracy, segmental edit score and segmental F1@IoU."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import segments_from_frames

DEFAULT_THRESHOLDS = (0.1, 0.25, 0.5)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction length {pred.shape} != ground truth length {gt.shape}")
    if pred.size == 0:
        raise ValueError("empty label sequence")
    return pred, gt


def frame_accuracy(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return 100.0 * int(np.count_nonzero(pred == gt)) / len(gt)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance, two-row dynamic programme."""
    prev = np.arange(len(b) + 1)
    for i, x in enumerate(a, 1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return int(prev[-1])


def edit_score(pred, gt, ignore: Sequence[int] = ()) -> float:
    pred, gt = _pair(pred, gt)
    p = [s.label for s in segments_from_frames(pred) if s.label not in ignore]
    g = [s.label for s in segments_from_frames(gt) if s.label not in ignore]
    if not p and not g:
        return 100.0
    return 100.0 * (1.0 - levenshtein(p, g) / max(len(p), len(g)))


@dataclass
class F1Result:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    prec = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    rec = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


def _iou(p, g) -> float:
    inter = min(p.end, g.end) - max(p.start, g.start) + 1
    if inter <= 0:
        return 0.0
    return inter / (max(p.end, g.end) - min(p.start, g.start) + 1)


def _greedy_tp(pred_segs, gt_segs, tau: float) -> int:
    matched = [False] * len(gt_segs)
    for p in pred_segs:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gt_segs):
            if matched[j] or g.label != p.label:
                continue
            iou = _iou(p, g)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= tau:
            matched[best] = True
    return sum(matched)


def _optimal_tp(pred_segs, gt_segs, tau: float) -> int:
    ok = np.array([[float(p.label == g.label and _iou(p, g) >= tau) for g in gt_segs] for p in pred_segs])
    if ok.size == 0:
        return 0
    rows, cols = linear_sum_assignment(ok, maximize=True)
    return int(ok[rows, cols].sum())


def f1_at(pred, gt, tau: float, ignore: Sequence[int] = (), matching: str = "optimal") -> F1Result:
    """Segmental F1 with same-class IoU >= ``tau`` as the match criterion.

    ``matching="optimal"`` pairs predicted and ground-truth segments one to
    one so the number of true positives is as large as possible.
    ``matching="greedy"`` is the common temporal-order protocol: each
    predicted segment takes the unmatched same-class ground-truth segment of
    highest IoU. Greedy can undercount when an early prediction claims a
    segment a later one needed. Segments whose class is in ``ignore`` are
    dropped from both sides.
    """
    if not 0 < tau <= 1:
        raise ValueError(f"IoU threshold must lie in (0, 1], got {tau}")
    if matching not in ("optimal", "greedy"):
        raise ValueError(f"matching must be 'optimal' or 'greedy', got {matching!r}")
    pred, gt = _pair(pred, gt)
    pred_segs = [s for s in segments_from_frames(pred) if s.label not in ignore]
    gt_segs = [s for s in segments_from_frames(gt) if s.label not in ignore]
    tp = (_optimal_tp if matching == "optimal" else _greedy_tp)(pred_segs, gt_segs, tau)
    fp, fn = len(pred_segs) - tp, len(gt_segs) - tp
    return F1Result(*f1_from_counts(tp, fp, fn), tp, fp, fn)


@dataclass
class MetricsReport:
    acc: float
    edit: float
    f1: dict[float, float]
    counts: dict[float, tuple[int, int, int]]
    per_sequence: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "acc": self.acc,
            "edit": self.edit,
            "f1": {str(t): v for t, v in self.f1.items()},
            "counts": {str(t): {"tp": c[0], "fp": c[1], "fn": c[2]} for t, c in self.counts.items()},
            "per_sequence": self.per_sequence,
        }

    def table(self) -> str:
        head = ["Acc", "Edit"] + [f"F1@{t:g}" for t in self.f1]
        vals = [self.acc, self.edit, *self.f1.values()]
        width = max(len(h) for h in head) + 2
        return "".join(h.rjust(width) for h in head) + "\n" + "".join(f"{v:.2f}".rjust(width) for v in vals)


def evaluate(pairs: Iterable[tuple], thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
             names: Sequence[str] | None = None, exclude: Sequence[int] = (),
             matching: str = "optimal") -> MetricsReport:
    """Pool accuracy over frames and F1 counts over segments; average edit per sequence.

    ``exclude`` drops classes from scoring: their ground-truth frames do not
    count towards accuracy and their segments are ignored by edit and F1.
    """
    pairs = [_pair(p, g) for p, g in pairs]
    if not pairs:
        raise ValueError("evaluate needs at least one (pred, gt) pair")
    correct = total = 0
    edits = []
    counts = {t: [0, 0, 0] for t in thresholds}
    per_seq = []
    for i, (p, g) in enumerate(pairs):
        keep = ~np.isin(g, list(exclude))
        correct += int((p == g)[keep].sum())
        total += int(keep.sum())
        e = edit_score(p, g, exclude)
        edits.append(e)
        acc = 100.0 * float(np.mean((p == g)[keep])) if keep.any() else 0.0
        row = {"id": names[i] if names else str(i), "acc": acc, "edit": e, "f1": {}}
        for t in thresholds:
            r = f1_at(p, g, t, exclude, matching)
            counts[t][0] += r.tp
            counts[t][1] += r.fp
            counts[t][2] += r.fn
            row["f1"][str(t)] = r.f1
        per_seq.append(row)
    f1 = {t: f1_from_counts(*c)[2] for t, c in counts.items()}
    return MetricsReport(100.0 * correct / total if total else 0.0, float(np.mean(edits)), f1,
                         {t: tuple(c) for t, c in counts.items()}, per_seq)
