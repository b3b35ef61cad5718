"""Run configuration: one flat document holding every knob of a CLI run.

Values are resolved as defaults < JSON config file < command-line flags and
the effective result is written next to every output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .classify import LrConfig
from .experiment import ExperimentConfig
from .mdm import MdmConfig
from .synth import SynthConfig
from .train import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # paths
    events: str | None = None
    labels: str | None = None
    out: str | None = None
    checkpoint: str | None = None
    features: str | None = None
    delimiter: str = ","
    # model
    d: int = 32
    n: int = 6
    k: int = 4
    L: int = 4
    window: str = "s45"
    relation_sum: str = "set"
    components: str = "full"
    feature_mode: str = "sum"
    # training
    lam: float = 1e-4
    epochs: int = 20
    lr: float = 1e-3
    batch_pairs: int = 64
    embed_epochs: int = 20
    embed_lr: float = 1e-2
    embed_target: str = "current"
    seed: int = 0
    # evaluation
    which: str = "all"
    seeds: int = 10
    test_fraction: float = 0.3
    C: float = 1.0
    threshold: float = 0.5
    # synthetic corpus
    users: int = 1000
    spam: float = 0.0445
    mean_length: float = 21.0

    def mdm_config(self) -> MdmConfig:
        return MdmConfig(d=self.d, n=self.n, k=self.k, L=self.L, window=self.window,
                         relation_sum=self.relation_sum, components=self.components)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lam=self.lam, epochs=self.epochs, lr=self.lr,
                           batch_pairs=self.batch_pairs, seed=self.seed)

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            mdm=self.mdm_config(), train=self.train_config(),
            embed_epochs=self.embed_epochs, embed_lr=self.embed_lr,
            embed_target=self.embed_target, n_seeds=self.seeds,
            test_fraction=self.test_fraction, feature_mode=self.feature_mode,
            lr=LrConfig(C=self.C), init_seed=self.seed)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_users=self.users, spam_fraction=self.spam,
                           mean_length=self.mean_length, seed=self.seed)

    def to_json(self, command: str | None = None) -> str:
        data = asdict(self)
        if command is not None:
            data["command"] = command
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


FIELD_NAMES = frozenset(f.name for f in fields(RunConfig))


def load_config_file(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(data) - FIELD_NAMES
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Defaults, overridden by the config file, overridden by flags.
    ``None`` flag values mean "not given"."""
    cfg = RunConfig()
    if file_values:
        cfg = replace(cfg, **file_values)
    if flag_values:
        cfg = replace(cfg, **{k: v for k, v in flag_values.items() if v is not None})
    return cfg
