"""Training configuration: TOML sections mapped onto dataclasses, unknown keys rejected.

Defaults follow the published training recipe where it states a value
(hop count, layer count, loss weights, learning rates, boundary threshold,
prompt-token count) and are plain engineering choices elsewhere.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .errors import ConfigError


@dataclass
class DataSection:
    manifest: str = ""
    val_fraction: float = 0.2


@dataclass
class ModelSection:
    hidden: int = 64
    bottleneck: int = 16
    layers: int = 10
    max_hops: int = 13
    bank_channels: int = 16
    bank_hidden: int = 64
    interaction_per_layer: bool = False
    normalize_attention: bool = True
    layer_norm: bool = True
    boundary_stages: int = 3
    boundary_layers: int = 10
    boundary_width: int = 64


@dataclass
class LossSection:
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 1.0
    w_p: float | str = "auto"
    sigma: float = 1.0
    clamp: float = 4.0
    similarity_source: str = "input"


@dataclass
class AlignSection:
    text_bank: str = ""  # empty -> deterministic stub bank
    stub_dim: int = 512
    stub_seed: int = 0
    temperature: float = 0.1
    invert_class_weights: bool = False


@dataclass
class SOASection:
    variant: str = "residual"
    hidden: int = 256
    dropout: float = 0.1
    num_tokens: int = 5
    lr: float = 0.01
    lr_min: float = 0.001
    decay_epochs: int = 50
    momentum: float = 0.9


@dataclass
class OptimSection:
    lr: float = 0.001
    epochs: int = 100
    batch_size: int = 6


@dataclass
class BoundarySection:
    threshold: float = 0.5
    tie_break: str = "lowest_class_id"
    radius: int = 2


@dataclass
class MetricsSection:
    exclude_classes: list[int] = field(default_factory=list)
    matching: str = "optimal"  # or "greedy"


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "runs/default"
    deterministic: bool = False
    checkpoint_every: int = 1


@dataclass
class TrainConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    align: AlignSection = field(default_factory=AlignSection)
    soa: SOASection = field(default_factory=SOASection)
    optim: OptimSection = field(default_factory=OptimSection)
    boundary: BoundarySection = field(default_factory=BoundarySection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    run: RunSection = field(default_factory=RunSection)
    source_path: str | None = field(default=None, compare=False)

    def validate(self) -> "TrainConfig":
        checks = [
            (self.optim.lr > 0, "optim.lr must be > 0"),
            (self.soa.lr > 0 and self.soa.lr_min > 0, "soa.lr and soa.lr_min must be > 0"),
            (self.optim.epochs >= 1, "optim.epochs must be >= 1"),
            (self.optim.batch_size >= 1, "optim.batch_size must be >= 1"),
            (self.model.layers >= 2, "model.layers must be >= 2"),
            (self.model.max_hops >= 1, "model.max_hops must be >= 1"),
            (self.model.bottleneck <= self.model.hidden, "model.bottleneck must be <= model.hidden"),
            (0 <= self.data.val_fraction < 1, "data.val_fraction must lie in [0, 1)"),
            (self.align.temperature > 0, "align.temperature must be > 0"),
            (self.soa.variant in ("none", "residual", "prompt", "cross_domain"),
             f"unknown soa.variant {self.soa.variant!r}"),
            (self.loss.similarity_source in ("input", "fused"),
             "loss.similarity_source must be 'input' or 'fused'"),
            (self.loss.w_p == "auto" or (isinstance(self.loss.w_p, (int, float)) and self.loss.w_p >= 0),
             "loss.w_p must be 'auto' or a non-negative number"),
            (all(getattr(self.loss, k) >= 0 for k in ("alpha", "beta", "gamma", "sigma", "clamp")),
             "loss weights must be non-negative"),
            (0 < self.boundary.threshold < 1, "boundary.threshold must lie in (0, 1)"),
            (self.metrics.matching in ("optimal", "greedy"), "metrics.matching must be 'optimal' or 'greedy'"),
            (self.boundary.tie_break == "lowest_class_id", "boundary.tie_break only supports 'lowest_class_id'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("source_path")
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def resolve(self, path: str) -> str:
        """Resolve a path from the config relative to the config file's directory."""
        if not path or os.path.isabs(path) or self.source_path is None:
            return path
        return os.path.join(os.path.dirname(os.path.abspath(self.source_path)), path)


def _coerce(section_cls, name: str, values: dict):
    known = {f.name: f for f in dataclasses.fields(section_cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    defaults = section_cls()
    kwargs = {}
    for key, value in values.items():
        default = getattr(defaults, key)
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"{name}.{key} must be a boolean")
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif isinstance(default, int) and not isinstance(default, bool) and not isinstance(value, int):
            raise ConfigError(f"{name}.{key} must be an integer")
        kwargs[key] = value
    return section_cls(**kwargs)


def config_from_dict(obj: dict, source_path: str | None = None) -> TrainConfig:
    sections = {f.name: f.type for f in dataclasses.fields(TrainConfig) if f.name != "source_path"}
    unknown = sorted(set(obj) - set(sections))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name in obj:
            if not isinstance(obj[f.name], dict):
                raise ConfigError(f"[{f.name}] must be a table")
            cls = type(f.default_factory())
            kwargs[f.name] = _coerce(cls, f.name, obj[f.name])
    try:
        cfg = TrainConfig(**kwargs, source_path=source_path)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    return cfg.validate()


def load_config(path: str) -> TrainConfig:
    try:
        with open(path, "rb") as f:
            obj = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return config_from_dict(obj, source_path=path)


# Per-dataset schedules from the published setup; recorded, not asserted at desk scale.
PRESETS = {
    "lara": {"optim": {"lr": 0.001, "epochs": 100, "batch_size": 6}},
    "tcg": {"optim": {"lr": 0.001, "epochs": 100, "batch_size": 6}},
    "pku-mmd": {"optim": {"lr": 0.0005, "epochs": 200, "batch_size": 8}},
}
