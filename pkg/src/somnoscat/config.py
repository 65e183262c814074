"""Pipeline configuration: ``key = value`` text with dotted sections.

Both ``net.hidden = 200`` and an INI-style ``[net]`` header followed by
``hidden = 200`` are accepted.  :func:`render_config` writes the flat dotted
form, and ``parse_config(render_config(c)) == c``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .bilstm import NetworkConfig, TrainConfig
from .features import FeatureSet
from .scattering import DECIMATE, TARGET_DIM

DATA_DIR_ENV = "SOMNOSCAT_DATA_DIR"


@dataclass(frozen=True)
class ScatterConfig:
    decimate: int = DECIMATE
    target_dim: int = TARGET_DIM


@dataclass(frozen=True)
class TrainSection:
    """Training hyper-parameters; the seed comes from the top-level config."""

    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 30
    lr_decay: float = 0.7
    lr_drop_every: int = 10
    clip_norm: float = 1.0
    batch_subjects: int = 20
    weight_target: float = 0.9
    weight_non_arousal: float = 0.1
    standardize: bool = True


def _default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, "data")


@dataclass(frozen=True)
class PipelineConfig:
    data_dir: str = field(default_factory=_default_data_dir)
    seed: int = 0
    feature_set: str = FeatureSet.ALL465.value
    jobs: int = 1
    restarts: int = 1
    cv_folds: int = 0
    select_top: int = 0
    net: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainSection = field(default_factory=TrainSection)
    scatter: ScatterConfig = field(default_factory=ScatterConfig)

    def __post_init__(self):
        FeatureSet(self.feature_set)
        if self.jobs < 1 or self.restarts < 1 or self.cv_folds < 0 or self.select_top < 0:
            raise ValueError("jobs and restarts must be >= 1; cv_folds and select_top >= 0")

    def train_config(self) -> TrainConfig:
        return TrainConfig(**dataclasses.asdict(self.train), seed=self.seed)

    @property
    def feature_dim(self) -> int:
        fs = FeatureSet(self.feature_set)
        n_scatter = 6 * self.scatter.target_dim
        return {FeatureSet.PHYSIO75: 75, FeatureSet.SCATTER390: n_scatter, FeatureSet.ALL465: 75 + n_scatter}[fs]

    @property
    def root(self) -> Path:
        return Path(self.data_dir)

    def with_overrides(self, **updates) -> "PipelineConfig":
        """Apply flat dotted-key overrides such as ``{"net.hidden": 8}``."""
        top = {}
        nested: dict[str, dict] = {}
        for key, value in updates.items():
            if value is None:
                continue
            section, dot, name = key.partition(".")
            if dot:
                nested.setdefault(section, {})[name] = value
            else:
                top[key] = value
        for section, values in nested.items():
            top[section] = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **top)


_SECTIONS = ("net", "train", "scatter")


def _coerce(text: str, kind):
    if kind in (bool, "bool"):
        low = text.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text.strip()


def _field_types(cls) -> dict[str, object]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def render_config(config: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name in _SECTIONS:
            for sub in dataclasses.fields(value):
                lines.append(f"{f.name}.{sub.name} = {_render_value(getattr(value, sub.name))}")
        else:
            lines.append(f"{f.name} = {_render_value(value)}")
    return "\n".join(lines) + "\n"


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    top_types = _field_types(PipelineConfig)
    section_types = {s: _field_types(type(getattr(base, s))) for s in _SECTIONS}
    updates = {}
    prefix = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            prefix = line[1:-1].strip()
            if prefix and prefix not in _SECTIONS:
                raise ValueError(f"line {lineno}: unknown section [{prefix}]")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        key = key.strip()
        if prefix and "." not in key:
            key = f"{prefix}.{key}"
        section, dot, name = key.partition(".")
        if dot:
            types = section_types.get(section)
            if types is None or name not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            updates[key] = _coerce(value, types[name])
        else:
            if key not in top_types or key in _SECTIONS:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            updates[key] = _coerce(value, top_types[key])
    return base.with_overrides(**updates)


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    return parse_config(Path(path).read_text(), base)
