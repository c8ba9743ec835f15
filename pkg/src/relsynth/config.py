"""Run configuration from a sectioned ``key = value`` text file.

Sections and their keys mirror the dataclasses they fill:

    [run]        seed, missing
    [model]      HyperParams fields
    [train]      TrainConfig fields
    [structure]  simple_graph, swap_factor and InferenceConfig fields
    [sample]     SampleConfig fields except ``structure``

Unknown sections or keys are errors.  ``none`` (any case) unsets an optional value.
``defaults_text()`` renders the full default file.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .denoiser import HyperParams
from .encoders import MissingPolicy
from .structgen import InferenceConfig, StructureConfig
from .synthesizer import SampleConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    missing: str = "indicator"
    model: HyperParams = field(default_factory=HyperParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    structure: StructureConfig = field(default_factory=StructureConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    @property
    def policy(self) -> MissingPolicy:
        return MissingPolicy(self.missing)

    def to_dict(self) -> dict:
        s = self.structure
        return {
            "run": {"seed": self.seed, "missing": self.missing},
            "model": dataclasses.asdict(self.model),
            "train": dataclasses.asdict(self.train),
            "structure": {"simple_graph": s.simple_graph, "swap_factor": s.swap_factor,
                          **dataclasses.asdict(s.inference)},
            "sample": {k: v for k, v in dataclasses.asdict(self.sample).items() if k != "structure"},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _coerce(cls, name: str, raw: str):
    hints = typing.get_type_hints(cls)
    if name not in hints:
        raise ConfigError(f"unknown key {name!r} for {cls.__name__}")
    hint = hints[name]
    text = raw.strip()
    optional = type(None) in typing.get_args(hint)
    if optional:
        if text.lower() == "none":
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{cls.__name__}.{name}: cannot read {raw!r} as {getattr(hint, '__name__', hint)}") \
            from None


def _fill(obj, items: dict[str, str]):
    return dataclasses.replace(obj, **{k: _coerce(type(obj), k, v) for k, v in items.items()})


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    cfg = RunConfig()
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "run":
            for k, v in items.items():
                if k == "seed":
                    cfg.seed = _coerce(RunConfig, k, v)
                elif k == "missing":
                    cfg.missing = v.strip()
                else:
                    raise ConfigError(f"unknown key {k!r} in [run]")
        elif section == "model":
            cfg.model = _fill(cfg.model, items)
        elif section == "train":
            cfg.train = _fill(cfg.train, items)
        elif section == "structure":
            outer = {k: items.pop(k) for k in ("simple_graph", "swap_factor") if k in items}
            cfg.structure = dataclasses.replace(_fill(cfg.structure, outer),
                                                inference=_fill(cfg.structure.inference, items))
        elif section == "sample":
            if "structure" in items:
                raise ConfigError("the structure mode is chosen on the command line")
            cfg.sample = _fill(cfg.sample, items)
        else:
            raise ConfigError(f"unknown section [{section}]")
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.missing not in ("indicator", "impute"):
        raise ConfigError(f"missing must be 'indicator' or 'impute', got {cfg.missing!r}")
    if cfg.train.steps <= 0:
        raise ConfigError("train.steps must be positive")
    if cfg.structure.simple_graph not in ("auto", "never"):
        raise ConfigError("structure.simple_graph must be 'auto' or 'never'")
    if cfg.model.d_token <= 0 or cfg.model.dim_h <= 0:
        raise ConfigError("model dimensions must be positive")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def defaults_text() -> str:
    lines = []
    for section, values in RunConfig().to_dict().items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {'none' if v is None else v}" for k, v in values.items()]
        lines.append("")
    return "\n".join(lines)
