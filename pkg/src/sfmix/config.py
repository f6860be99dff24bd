"""Experiment configuration and its INI-style file format.

One ``[section]`` per sub-config, ``key = value`` lines, ``#`` comments. Lists
(seeds, hidden widths, proportions) are comma separated; an empty value means
"none". Every key and its default is listed in ``configs/default.cfg``.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import ShiftSpec
from .errors import FormatError, InvalidArgumentError
from .mixadapt import AdaptConfig, MixupConfig
from .proxy import SELECTORS, ProxyConfig
from .pseudo import PseudoConfig


@dataclass(frozen=True)
class DataConfig:
    family: str = "rotated-blobs"
    n_classes: int = 4
    n_per_domain: int = 2000
    angle: float = 50.0
    noise: float = 0.35
    proportions: tuple | None = None
    layout: str = "hub-ring"
    radius: float = 1.5
    test_fraction: float = 0.2

    def shift_spec(self, seed: int) -> ShiftSpec:
        return ShiftSpec(self.family, self.n_classes, self.n_per_domain, self.angle, self.noise,
                         self.proportions, seed, self.layout, self.radius)


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (32,)
    feature_dim: int = 16


@dataclass(frozen=True)
class SourceConfig:
    epochs: int = 50
    lr: float = 0.01
    batch_size: int = 64
    alpha: float = 0.1


@dataclass(frozen=True)
class ProxySection:
    selector: str = "prototype"
    n_per_class: int = 10

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise InvalidArgumentError(f"selector must be one of {SELECTORS}")
        ProxyConfig(self.n_per_class)


@dataclass(frozen=True)
class ExperimentSection:
    seeds: tuple = (0, 1, 2)
    output_dir: str = "runs"
    name: str = "default"

    def __post_init__(self):
        if not self.seeds:
            raise InvalidArgumentError("seed list must be nonempty")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    proxy: ProxySection = field(default_factory=ProxySection)
    pseudo: PseudoConfig = field(default_factory=PseudoConfig)
    mixup: MixupConfig = field(default_factory=MixupConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        sub = dataclasses.replace(getattr(self, section), **changes)
        return dataclasses.replace(self, **{section: sub})

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            sub = getattr(self, f.name)
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v
                           for k, v in dataclasses.asdict(sub).items()}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            sub_cls = type(getattr(cls(), f.name))
            values = d.get(f.name, {})
            kwargs[f.name] = _build(sub_cls, {k: _coerce_json(v) for k, v in values.items()}, f.name)
        return cls(**kwargs)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _coerce_json(v):
    return tuple(v) if isinstance(v, list) else v


def _build(sub_cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(sub_cls)}
    unknown = set(values) - names
    if unknown:
        raise FormatError(f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")
    try:
        return sub_cls(**values)
    except (TypeError, InvalidArgumentError) as exc:
        raise FormatError(f"[{section}] {exc}") from None


def _parse_value(raw: str, default, key: str, section: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw
        # tuples / optional tuples
        if raw == "" or raw.lower() == "none":
            return None
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if key in ("seeds", "hidden"):
            return tuple(int(s) for s in items)
        return tuple(float(s) for s in items)
    except ValueError:
        raise FormatError(f"[{section}] {key}: cannot parse {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise FormatError(f"config syntax error: {exc}") from None
    base = ExperimentConfig()
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(parser.sections()) - known
    if extra:
        raise FormatError(f"unknown section(s): {', '.join(sorted(extra))}")
    kwargs = {}
    for name in known:
        sub = getattr(base, name)
        values = {}
        if parser.has_section(name):
            defaults = dataclasses.asdict(sub)
            for key, raw in parser.items(name):
                if key not in defaults:
                    raise FormatError(f"[{name}] unknown key: {key}")
                values[key] = _parse_value(raw, defaults[key], key, name)
        merged = {**dataclasses.asdict(sub), **values}
        merged = {k: tuple(v) if isinstance(v, list) else v for k, v in merged.items()}
        kwargs[name] = _build(type(sub), merged, name)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, v in values.items():
            if isinstance(v, list):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif v is None:
                v = ""
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
