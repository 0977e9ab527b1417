"""Flat ``key=value`` run configuration shared by every CLI subcommand."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

from .augment import AugmentConfig
from .errors import ConfigError
from .model import ModelConfig
from .objectives import ObjectiveConfig
from .seqcore import SyntheticTaskSpec
from .trainer import TrainConfig


@dataclass
class RunConfig:
    # synthetic task
    task: str = "reverse"
    content_vocab: int = 12
    min_len: int = 5
    max_len: int = 10
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    data_seed: int = 0
    # proposal
    tau: float = 3.0
    samples_per_pair: int = 8
    edit_fraction: float = 0.2
    augment_seed: int = 0
    augmented_path: str = ""
    # objective
    objective: str = "alpha_dimt"
    alpha: float = 0.5
    # model
    embed_dim: int = 16
    hidden_dim: int = 32
    max_decode_len: int = 30
    init_scale: float = 0.08
    model_seed: int = 0
    # training
    lr0: float = 1.0
    lr_min: float = 0.05
    decay: float = 0.5
    batch_size: int = 32
    max_epochs: int = 30
    clip_norm: float = 5.0
    train_seed: int = 0
    # evaluation and paths
    beam: int = 10
    data_dir: str = "data"
    out_dir: str = "runs/default"

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def set(self, key: str, value: str) -> None:
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = {"int": int, "float": float, "str": str}[types[key]]
        try:
            setattr(self, key, kind(value.strip()))
        except ValueError:
            raise ConfigError(f"config key {key!r} expects {types[key]}, got {value!r}") from None

    def apply(self, assignments: Iterable[str], source: str = "command line") -> None:
        for lineno, raw in enumerate(assignments, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
            self.set(key.strip(), value)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Iterable[str] = ()) -> "RunConfig":
        cfg = cls()
        if path:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            cfg.apply(text.splitlines(), str(path))
        cfg.apply(overrides)
        cfg.validate()
        return cfg

    def dump(self) -> str:
        return "".join(f"{k}={getattr(self, k)}\n" for k in self.keys())

    def write(self, directory: str | Path, name: str = "config.resolved") -> Path:
        Path(directory).mkdir(parents=True, exist_ok=True)
        path = Path(directory) / name
        path.write_text(self.dump(), encoding="utf-8")
        return path

    # typed views -----------------------------------------------------------

    def task_spec(self) -> SyntheticTaskSpec:
        return SyntheticTaskSpec(self.task, self.content_vocab, self.min_len, self.max_len,
                                 self.n_train, self.n_dev, self.n_test, self.data_seed)

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(self.tau, self.samples_per_pair, self.edit_fraction, self.augment_seed)

    def objective_config(self) -> ObjectiveConfig:
        alpha = 0.0 if self.objective == "raml" else self.alpha
        return ObjectiveConfig(self.objective, alpha, self.tau)

    def model_config(self, src_vocab: int, tgt_vocab: int) -> ModelConfig:
        return ModelConfig(src_vocab, tgt_vocab, self.embed_dim, self.hidden_dim, self.max_decode_len,
                           self.init_scale, self.model_seed)

    def train_config(self, checkpoint_dir: str | None = None) -> TrainConfig:
        return TrainConfig(self.objective_config(), self.augment_config(), self.lr0, self.lr_min, self.decay,
                           self.batch_size, self.max_epochs, self.clip_norm, self.train_seed, checkpoint_dir)

    def validate(self) -> None:
        self.task_spec().validate()
        self.objective_config()
        self.train_config().validate()
        try:
            self.model_config(3, 3)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.beam < 1:
            raise ConfigError("beam must be >= 1")
