"""Part-aware skeleton temporal action segmentation with language-assisted alignment."""

from .data import (PartMap, Segment, SkeletonSequence, SyntheticSpec, frames_from_segments,
                   gen_synthetic, load_dataset, load_sequence, segments_from_frames)
from .errors import ConfigError, DataError, NumericError
from .metrics import edit_score, evaluate, f1_at, frame_accuracy

__version__ = "0.1.0"
