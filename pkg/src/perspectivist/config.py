"""Flat ``key=value`` run configuration shared by every command.

Every key is listed in :data:`FIELDS`; unknown keys are rejected.  Output files
embed the resolved configuration, and :func:`load_config_source` can read it
back from any of them so a run can be repeated exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .models.training import TrainConfig
from .synthgen import GenConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # shared
    seed: int = 0
    data: str = ""
    label_mapping: str = "already_binary"
    tie_break: int = 0
    # stats
    alpha_split: str = "train"
    # synth
    gen_instances: int = 1000
    gen_vocab: int = 20
    gen_annotators: int = 3
    gen_clusters: int = 3
    gen_per_instance: int = 3
    gen_unseen: float = 0.0
    gen_split: str = "0.7,0.15,0.15"
    gen_flip: float = 0.05
    gen_participation: str = "uniform"
    gen_powerlaw: float = 1.0
    gen_min_length: int = 10
    gen_max_length: int = 30
    gen_topic: float = 0.1
    gen_min_margin: float = 0.0
    # train
    model: str = "multitask"
    hidden: str = "768"
    lr: float = 1e-2
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 40
    ce_epsilon: float = 1e-12
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    singletask_target: str = "hard"
    min_df: int = 1
    svm_lambda: float = 1e-4
    svm_epochs: int = 50
    # train (checkpoint selection) and eval
    mode: str = "unconstrained"
    aggregation: str = "argmax-count"
    # eval
    checkpoint: str = ""
    split: str = "test"

    def to_dict(self) -> dict[str, object]:
        return dataclasses.asdict(self)

    def lines(self, prefix: str = "") -> list[str]:
        return [f"{prefix}{k}={format_value(v)}" for k, v in self.to_dict().items()]

    def gen_config(self) -> GenConfig:
        split = tuple(float(x) for x in self.gen_split.split(","))
        return GenConfig(
            num_instances=self.gen_instances, vocab_size=self.gen_vocab, num_annotators=self.gen_annotators,
            num_clusters=self.gen_clusters, annotators_per_instance=self.gen_per_instance,
            unseen_fraction=self.gen_unseen, split_fractions=split, flip_rate=self.gen_flip,  # type: ignore[arg-type]
            participation=self.gen_participation, powerlaw_exponent=self.gen_powerlaw,
            min_length=self.gen_min_length, max_length=self.gen_max_length,
            topic_concentration=self.gen_topic, min_margin=self.gen_min_margin, seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        hidden = tuple(int(x) for x in self.hidden.split(",") if x.strip())
        return TrainConfig(
            lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs, patience=self.patience,
            epsilon=self.ce_epsilon, adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon, seed=self.seed, hidden_dims=hidden, mode=self.mode,
            aggregation=self.aggregation, singletask_target=self.singletask_target, tie_break=self.tie_break,
            min_df=self.min_df, svm_lambda=self.svm_lambda, svm_epochs=self.svm_epochs,
        )


FIELDS = {f.name: f for f in fields(RunConfig)}

CHOICES = {
    "label_mapping": ("already_binary", "convabuse_scale"),
    "model": ("multitask", "singletask", "svm"),
    "mode": ("unconstrained", "constrained"),
    "aggregation": ("argmax-count", "mean-prob"),
    "singletask_target": ("hard", "soft"),
    "gen_participation": ("uniform", "powerlaw"),
    "split": ("train", "dev", "test"),
    "alpha_split": ("train", "dev", "test"),
}


def format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, raw: str):
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = type(FIELDS[key].default)
    try:
        value = kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from None
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError(f"config key {key!r} must be one of {CHOICES[key]}, got {value!r}")
    return value


def parse_lines(lines, prefix: str = "") -> dict[str, object]:
    values: dict[str, object] = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if prefix:
            if not key.startswith(prefix):
                continue
            key = key[len(prefix):]
        values[key] = _coerce(key, raw)
    return values


def resolve(base: dict[str, object] | None = None, **overrides) -> RunConfig:
    values = dict(base or {})
    for key, value in overrides.items():
        if value is not None:
            values[key] = _coerce(key, str(value)) if isinstance(value, str) else value
    unknown = set(values) - set(FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values)  # type: ignore[arg-type]


def load_config_source(path) -> dict[str, object]:
    """Read a config file, or the configuration embedded in one of this tool's outputs."""
    path = Path(path)
    data = path.read_bytes()
    from .models import checkpoint

    if data[:8] == checkpoint.MAGIC:
        return {k: _coerce(k, format_value(v)) for k, v in checkpoint.embedded_config(path).items()}
    text = data.decode("utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        embedded = doc.get("meta", {}).get("config") if isinstance(doc, dict) else None
        if embedded is None:
            raise ConfigError(f"{path} carries no embedded config")
        return {k: _coerce(k, format_value(v)) for k, v in embedded.items()}
    lines = text.splitlines()
    if any(line.startswith("config.") for line in lines):
        return parse_lines(lines, prefix="config.")
    if any(line.startswith("# config.") for line in lines):
        return parse_lines([line[2:] for line in lines if line.startswith("# config.")], prefix="config.")
    return parse_lines(lines)
