"""Skeleton sequences on disk, run-length segment codec and synthetic data."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError


class Segment(NamedTuple):
    label: int
    start: int  # inclusive
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class SkeletonSequence:
    """One recording: ``data`` is ``[T, V, C]`` float32, ``labels`` is ``[T]``."""

    data: np.ndarray
    labels: np.ndarray
    sequence_id: str = ""
    fps: float = 0.0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3:
            raise DataError(f"data must be [T, V, C], got shape {self.data.shape}")
        T, V, C = self.data.shape
        if T < 1 or V < 2 or C < 1:
            raise DataError(f"need T >= 1, V >= 2, C >= 1, got T={T} V={V} C={C}")
        if self.labels.shape != (T,):
            raise DataError(f"expected {T} labels, got shape {self.labels.shape}")
        if T and self.labels.min() < 0:
            raise DataError("negative frame label")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_joints(self) -> int:
        return self.data.shape[1]

    @property
    def num_channels(self) -> int:
        return self.data.shape[2]

    def check_labels(self, num_classes: int) -> None:
        bad = np.flatnonzero((self.labels < 0) | (self.labels >= num_classes))
        if bad.size:
            raise DataError(
                f"{self.sequence_id or 'sequence'}: label {self.labels[bad[0]]} at frame "
                f"{bad[0]} outside [0, {num_classes})"
            )


@dataclass
class PartMap:
    """Ordered named joint groups plus the skeleton edge list."""

    parts: list[tuple[str, list[int]]]
    edges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.parts = [(str(n), [int(j) for j in idx]) for n, idx in self.parts]
        self.edges = [(int(a), int(b)) for a, b in self.edges]
        names = [n for n, _ in self.parts]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate part names in {names}")
        for name, idx in self.parts:
            if not idx:
                raise DataError(f"part {name!r} is empty")
            if len(set(idx)) != len(idx):
                raise DataError(f"part {name!r} lists a joint twice")
            if min(idx) < 0:
                raise DataError(f"part {name!r} has a negative joint index")

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.parts]

    @property
    def num_parts(self) -> int:
        return len(self.parts)

    def validate(self, num_joints: int) -> None:
        for name, idx in self.parts:
            if max(idx) >= num_joints:
                raise DataError(f"part {name!r} references joint {max(idx)} >= V={num_joints}")
        for a, b in self.edges:
            if not (0 <= a < num_joints and 0 <= b < num_joints):
                raise DataError(f"edge ({a}, {b}) out of range for V={num_joints}")

    def to_json(self) -> dict:
        out = {name: list(idx) for name, idx in self.parts}
        out["edges"] = [list(e) for e in self.edges]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PartMap":
        obj = dict(obj)
        edges = obj.pop("edges", [])
        return cls(parts=list(obj.items()), edges=[tuple(e) for e in edges])


def load_part_map(path: str) -> PartMap:
    try:
        with open(path) as f:
            return PartMap.from_json(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read part map {path}: {e}") from e


# --------------------------------------------------------------------------
# sequence directories


def load_sequence(path: str, num_classes: int | None = None) -> SkeletonSequence:
    """Read ``meta.json``, ``data.f32`` and ``labels.txt`` from a sequence directory."""
    try:
        with open(os.path.join(path, "meta.json")) as f:
            meta = json.load(f)
        raw = open(os.path.join(path, "data.f32"), "rb").read()
        label_lines = open(os.path.join(path, "labels.txt")).read().split("\n")
    except FileNotFoundError as e:
        raise DataError(f"missing file: {e.filename}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}/meta.json: {e}") from e

    try:
        T, V, C = int(meta["T"]), int(meta["V"]), int(meta["C"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}/meta.json: bad or missing T/V/C ({e})") from e
    expected = 4 * T * V * C
    if len(raw) != expected:
        raise DataError(f"{path}/data.f32: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4").reshape(T, V, C).astype(np.float32)

    if label_lines and label_lines[-1] == "":
        label_lines = label_lines[:-1]
    labels = []
    for i, line in enumerate(label_lines):
        try:
            labels.append(int(line.strip()))
        except ValueError:
            raise DataError(f"{path}/labels.txt line {i + 1}: not an integer: {line!r}") from None
    if len(labels) != T:
        raise DataError(f"{path}/labels.txt: expected {T} lines, got {len(labels)}")

    seq = SkeletonSequence(data, np.array(labels, dtype=np.int64),
                           str(meta.get("id", os.path.basename(path))), float(meta.get("fps", 0.0)))
    if num_classes is not None:
        seq.check_labels(num_classes)
    return seq


def save_sequence(seq: SkeletonSequence, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    T, V, C = seq.data.shape
    with open(os.path.join(path, "meta.json"), "w") as f:
        json.dump({"T": T, "V": V, "C": C, "id": seq.sequence_id, "fps": seq.fps}, f)
    with open(os.path.join(path, "data.f32"), "wb") as f:
        f.write(seq.data.astype("<f4").tobytes())
    write_labels(os.path.join(path, "labels.txt"), seq.labels)


def write_labels(path: str, labels: Sequence[int]) -> None:
    with open(path, "w") as f:
        f.write("".join(f"{int(x)}\n" for x in labels))


def read_labels(path: str) -> np.ndarray:
    """Read a one-integer-per-line label file (or ``labels.txt`` inside a directory)."""
    if os.path.isdir(path):
        path = os.path.join(path, "labels.txt")
    try:
        lines = [ln.strip() for ln in open(path).read().splitlines() if ln.strip()]
        return np.array([int(x) for x in lines], dtype=np.int64)
    except FileNotFoundError as e:
        raise DataError(f"missing file: {path}") from e
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


@dataclass
class Dataset:
    classes: list[str]
    sequences: list[SkeletonSequence]
    part_map: PartMap
    root: str = ""

    @property
    def num_classes(self) -> int:
        return len(self.classes)


def load_manifest(manifest_path: str) -> tuple[list[str], PartMap, list[str]]:
    """Class names, part map and absolute sequence paths from ``dataset.json``."""
    root = os.path.dirname(os.path.abspath(manifest_path))
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
        classes = list(manifest["classes"])
        seq_paths = [os.path.join(root, p) for p in manifest["sequences"]]
        pm_path = manifest["part_map"]
    except FileNotFoundError as e:
        raise DataError(f"missing file: {manifest_path}") from e
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataError(f"{manifest_path}: malformed manifest ({e})") from e
    if len(classes) < 2:
        raise DataError("manifest needs at least two classes")
    return classes, load_part_map(os.path.join(root, pm_path)), seq_paths


def load_dataset(manifest_path: str) -> Dataset:
    """Load ``dataset.json``; relative paths resolve against the manifest's directory."""
    classes, part_map, seq_paths = load_manifest(manifest_path)
    seqs = [load_sequence(p, num_classes=len(classes)) for p in seq_paths]
    if not seqs:
        raise DataError(f"{manifest_path}: no sequences")
    shapes = {(s.num_joints, s.num_channels) for s in seqs}
    if len(shapes) != 1:
        raise DataError(f"sequences disagree on (V, C): {sorted(shapes)}")
    part_map.validate(seqs[0].num_joints)
    return Dataset(classes, seqs, part_map, os.path.dirname(os.path.abspath(manifest_path)))


def write_dataset(out_dir: str, classes: list[str], sequences: list[SkeletonSequence],
                  part_map: PartMap) -> str:
    """Write sequences, ``part_map.json`` and ``dataset.json``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, seq in enumerate(sequences):
        rel = os.path.join("sequences", seq.sequence_id or f"seq{i:04d}")
        save_sequence(seq, os.path.join(out_dir, rel))
        paths.append(rel)
    with open(os.path.join(out_dir, "part_map.json"), "w") as f:
        json.dump(part_map.to_json(), f, indent=1)
    manifest = os.path.join(out_dir, "dataset.json")
    with open(manifest, "w") as f:
        json.dump({"classes": classes, "sequences": paths, "part_map": "part_map.json"}, f, indent=1)
    return manifest


# --------------------------------------------------------------------------
# run-length codec


def segments_from_frames(frame_labels: Sequence[int]) -> list[Segment]:
    labels = np.asarray(frame_labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("frame labels must be a non-empty 1-D array")
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [labels.size - 1]])
    return [Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def check_segments(segs: Sequence[Segment]) -> None:
    if not segs:
        raise ValueError("empty segment list")
    expected = 0
    for i, (label, start, end) in enumerate(segs):
        if start != expected:
            kind = "gap" if start > expected else "overlap"
            raise ValueError(f"segment {i} starts at {start}, expected {expected} ({kind})")
        if end < start:
            raise ValueError(f"segment {i} ends before it starts")
        if i and label == segs[i - 1][0]:
            raise ValueError(f"segments {i - 1} and {i} share class {label}; runs must be maximal")
        expected = end + 1


def frames_from_segments(segs: Sequence[Segment]) -> np.ndarray:
    check_segments(segs)
    out = np.empty(segs[-1][2] + 1, dtype=np.int64)
    for label, start, end in segs:
        out[start:end + 1] = label
    return out


# --------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    num_classes: int = 3
    num_joints: int = 8
    channels: int = 3
    parts: PartMap | None = None
    min_segment: int = 20
    max_segment: int = 50
    sequences: int = 8
    seed: int = 0
    length: int = 200
    noise: float = 0.05
    fps: float = 50.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.min_segment < 4 or self.max_segment < self.min_segment:
            raise ValueError("need 4 <= min_segment <= max_segment")
        if self.num_joints < 2 or self.channels < 1 or self.sequences < 1 or self.length < 1:
            raise ValueError("num_joints >= 2, channels >= 1, sequences >= 1, length >= 1")
        if self.parts is None:
            self.parts = default_part_map(self.num_joints)
        self.parts.validate(self.num_joints)

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticSpec":
        obj = dict(obj)
        if "parts" in obj and obj["parts"] is not None:
            obj["parts"] = PartMap.from_json(obj["parts"])
        return cls(**obj)


def default_part_map(num_joints: int) -> PartMap:
    """Joint 0 is a torso root; the remaining joints form two chains, one per part."""
    rest = list(range(1, num_joints))
    half = (len(rest) + 1) // 2
    chains = [c for c in (rest[:half], rest[half:]) if c]
    edges = []
    for chain in chains:
        edges.append((0, chain[0]))
        edges.extend(zip(chain[:-1], chain[1:]))
    names = ["left limb", "right limb"]
    return PartMap([(names[i], c) for i, c in enumerate(chains)], edges)


def class_signature(spec: SyntheticSpec, k: int) -> tuple[int, float, float]:
    """(designated part index, amplitude, frequency in cycles/frame) for class ``k``."""
    n_parts = spec.parts.num_parts
    return k % n_parts, 1.0 + 0.6 * (k // n_parts), 0.02 + 0.015 * k


def _draw_labels(rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    labels, prev = [], -1
    while len(labels) < spec.length:
        k = int(rng.integers(spec.num_classes - (prev >= 0)))
        if prev >= 0 and k >= prev:
            k += 1
        labels.extend([k] * int(rng.integers(spec.min_segment, spec.max_segment + 1)))
        prev = k
    return np.array(labels, dtype=np.int64)


def gen_synthetic(spec: SyntheticSpec) -> list[SkeletonSequence]:
    """Deterministic part-localised sinusoid dataset.

    Each class animates one part with a class-keyed amplitude and frequency.
    Channels carry phase-shifted copies, so with ``C >= 3`` the instantaneous
    per-frame energy of the moving part is constant within a segment.
    Sequence lengths are whole segments and therefore only approximately
    ``spec.length``.
    """
    digest = hashlib.sha256(f"synthetic|{spec.seed}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    V, C = spec.num_joints, spec.channels
    chan_phase = 2 * np.pi * np.arange(C) / max(C, 3)
    sigs = [class_signature(spec, k) for k in range(spec.num_classes)]
    out = []
    for n in range(spec.sequences):
        labels = _draw_labels(rng, spec)
        T = labels.size
        data = spec.noise * rng.standard_normal((T, V, C))
        t = np.arange(T)
        for k, (p, amp, freq) in enumerate(sigs):
            frames = labels == k
            if not frames.any():
                continue
            for rank, j in enumerate(spec.parts.parts[p][1]):
                phase = 2 * np.pi * freq * t[frames, None] + chan_phase[None, :] + 0.3 * rank
                data[frames, j, :] += amp * np.sin(phase)
        out.append(SkeletonSequence(data.astype(np.float32), labels, f"synth{n:03d}", spec.fps))
    return out
