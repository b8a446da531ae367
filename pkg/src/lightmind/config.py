"""Harness configuration from a small TOML-like ``key = value`` file.

Values are read as JSON where possible (numbers, true/false, quoted strings,
lists) and as bare strings otherwise. ``[section]`` headers are allowed and
only group keys visually; key names must be unique across the file.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import ModelConfig
from .ranker import TrainConfig
from .utility import RephraseConfig


class ConfigError(ValueError):
    pass


@dataclass
class HarnessConfig:
    # model sizes
    max_entities: int = 64          # N
    n_relations: int = 8            # R
    dim: int = 64
    gru_hidden: int = 64
    scorer_hidden: int = 64
    layers: int = 6
    bases: int = 3
    n_slots: int = 32
    n_buckets: int = 4096
    context_turns: int = 4
    graph_mode: str = "hybrid"
    use_graph: bool = True
    # ranking
    n_candidates: int = 20
    top_k: int = 3
    mask_mode: str = "strict"       # strict | lenient | off
    # utility
    scorer: str = "off"             # heuristic | remote | constant | off
    endpoint: str = ""
    timeout: float = 2.0
    attempts: int = 3
    third_person: bool = True
    max_turns: int = 4
    include_persona: bool = False
    # training
    epochs: int = 10
    lr: float = 2e-3
    batch_episodes: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.mask_mode not in ("strict", "lenient", "off"):
            raise ConfigError(f"mask_mode must be strict, lenient or off, not {self.mask_mode!r}")
        if self.scorer not in ("heuristic", "remote", "constant", "off"):
            raise ConfigError(f"unknown scorer {self.scorer!r}")
        if self.graph_mode not in ("discrete", "continuous", "hybrid"):
            raise ConfigError(f"unknown graph_mode {self.graph_mode!r}")
        if self.scorer == "remote" and not self.endpoint:
            raise ConfigError("scorer = remote needs an endpoint")

    def to_dict(self) -> dict:
        return asdict(self)

    def model_config(self) -> ModelConfig:
        return ModelConfig(dim=self.dim, layers=self.layers, bases=self.bases, n_relations=self.n_relations,
                           max_entities=self.max_entities, n_slots=self.n_slots, gru_hidden=self.gru_hidden,
                           n_buckets=self.n_buckets, scorer_hidden=self.scorer_hidden,
                           context_turns=self.context_turns, graph_mode=self.graph_mode,
                           use_graph=self.use_graph, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, batch_episodes=self.batch_episodes, seed=self.seed)

    def rephrase_config(self) -> RephraseConfig:
        return RephraseConfig(self.third_person, self.max_turns, self.include_persona)


def parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if len(raw) >= 2 and raw[0] == raw[-1] == "'":
            return raw[1:-1]
        return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split(" #", 1)[0].strip() if not line.lstrip().startswith("#") else ""
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def config_from_dict(values: dict) -> HarnessConfig:
    known = {f.name: f for f in fields(HarnessConfig)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    typed = {}
    for k, v in values.items():
        default = known[k].default
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{k} must be true or false")
        elif isinstance(default, int) and (not isinstance(v, int) or isinstance(v, bool)):
            raise ConfigError(f"{k} must be an integer")
        elif isinstance(default, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{k} must be a number")
            v = float(v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{k} must be a string")
        typed[k] = v
    return HarnessConfig(**typed)


def load_config(path: str | Path | None = None, **overrides) -> HarnessConfig:
    values = parse_config_text(Path(path).read_text("utf-8")) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(values)


def render_config(cfg: HarnessConfig) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in cfg.to_dict().items())
