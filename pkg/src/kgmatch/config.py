"""Pipeline configuration: TOML file, flag overrides, seed fan-out.

Flags win over the config file, which wins over built-in desk-scale
defaults. A single global seed fans out to stage-specific seeds by stable
hashing so each stage is independently reproducible.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .graph import OWL_SAMEAS
from .synth import SOURCE_NAME_PREDICATE, TARGET_NAME_PREDICATE


class ConfigError(Exception):
    """Invalid configuration or usage; maps to exit code 1."""


class DataError(Exception):
    """Missing or malformed input data; maps to exit code 2."""


@dataclass
class PathsConfig:
    source_triples: str = ""
    target_triples: str = ""
    alignment_triples: str = ""
    workdir: str = "kgmatch-out"


@dataclass
class IngestConfig:
    source_name_predicates: list[str] = field(
        default_factory=lambda: [SOURCE_NAME_PREDICATE])
    target_name_predicates: list[str] = field(
        default_factory=lambda: [TARGET_NAME_PREDICATE])
    alignment_predicate: str = OWL_SAMEAS
    disambiguation_class: str = ""
    disambiguation_substring: str = ""
    casefold: bool = False


@dataclass
class WalksConfig:
    walks_per_entity: int = 20
    depth: int = 4


@dataclass
class SkipgramSection:
    dim: int = 32
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    subsample: float = 0.0


@dataclass
class MatcherSection:
    kind: str = "mlp"
    hidden: int = 64
    learning_rate: float = 3e-3
    batch_size: int = 256
    epochs: int = 20
    patience: int = 3


@dataclass
class SplitSection:
    ratios: list[float] = field(default_factory=lambda: [0.7, 0.1, 0.2])


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    walks: WalksConfig = field(default_factory=WalksConfig)
    skipgram: SkipgramSection = field(default_factory=SkipgramSection)
    matcher: MatcherSection = field(default_factory=MatcherSection)
    split: SplitSection = field(default_factory=SplitSection)
    seed: int = 7
    threads: int = 0  # 0 = all cores; every mode is deterministic

    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)


_SECTIONS = {
    "paths": PathsConfig,
    "ingest": IngestConfig,
    "walks": WalksConfig,
    "skipgram": SkipgramSection,
    "matcher": MatcherSection,
    "split": SplitSection,
}


def _apply_section(obj, data: dict, section: str) -> None:
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        setattr(obj, key, value)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table")
            _apply_section(getattr(cfg, key), value, key)
        elif key == "seed":
            cfg.seed = int(value)
        elif key == "threads":
            cfg.threads = int(value)
        else:
            raise ConfigError(f"unknown top-level config key {key!r}")
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return config_from_dict(data)
