"""Run configuration and the plain-text ``key = value`` config format.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
A ``preset = <name>`` line (anywhere) loads a named preset first, and the
remaining keys override it.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .models import ModelOptions
from .schedules import ScheduleSetting
from .surrogates import SurrogateSpec


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    dataset: str = "mnist"
    data_dir: str = "data/mnist"
    arch: str = "toycnn"
    epochs: int = 5
    batch_size: int = 128
    eval_batch_size: int = 500
    lr: float = 0.01
    optimizer: str = "sgd"
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_schedule: str = "cosine"
    lr_milestones: tuple[int, ...] = ()
    surrogate: str = "fda"
    ste_variant: str = "clip"
    omega: float = math.pi
    beta: float = 1.0
    schedule: str = "ramp_from_ns"
    n_p: int = 4
    n_s: int = 2
    weight_adapter: bool = True
    activation_adapter: bool = True
    adapter_k: int = 64
    eta: str = "sine"
    eta_a: float = 0.1
    alpha0: float = 0.1
    weight_scale: str = "layer_mean"
    activation_scale: str = "none"
    augment: bool = True
    train_limit: int = 0
    test_limit: int = 0
    seed: int = 0
    out_dir: str = "runs/default"
    log_wall_time: bool = True
    figures: bool = False

    def validate(self) -> "TrainConfig":
        positive = ("epochs", "batch_size", "eval_batch_size", "lr", "omega", "beta", "adapter_k")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("momentum", "weight_decay", "alpha0", "eta_a", "train_limit", "test_limit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        choices = {
            "dataset": ("mnist", "cifar10"),
            "optimizer": ("sgd", "adam"),
            "lr_schedule": ("cosine", "step", "constant"),
            "surrogate": ("ste", "fda", "tanh", "signswish"),
            "ste_variant": ("clip", "gated"),
            "schedule": ("fixed", "ramp_from_one", "ramp_from_ns"),
            "eta": ("zero", "linear", "sine"),
            "weight_scale": ("none", "layer_mean"),
            "activation_scale": ("none", "layer_mean"),
            "arch": ("toycnn", "vggsmall", "resnet20"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        try:
            self.schedule_setting()
            self.surrogate_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @property
    def uses_adapter(self) -> bool:
        return self.weight_adapter or self.activation_adapter

    def surrogate_spec(self) -> SurrogateSpec:
        return SurrogateSpec(self.surrogate, n=self.schedule_setting().n_p, omega=self.omega,
                             beta=self.beta, ste_variant=self.ste_variant)

    def schedule_setting(self) -> ScheduleSetting:
        return ScheduleSetting(self.schedule, self.n_p, self.n_s, self.epochs)

    def model_options(self, in_channels: int, image_size: int, num_classes: int = 10) -> ModelOptions:
        return ModelOptions(
            in_channels=in_channels, image_size=image_size, num_classes=num_classes,
            surrogate=self.surrogate_spec(),
            weight_adapter=self.weight_adapter, activation_adapter=self.activation_adapter,
            adapter_k=self.adapter_k, eta_kind=self.eta, eta_a=self.eta_a,
            weight_scale=self.weight_scale, activation_scale=self.activation_scale,
            seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        cfg = cls()
        for key, value in d.items():
            set_value(cfg, key, value)
        return cfg


PRESETS: dict[str, dict[str, Any]] = {
    # desk-scale runs; lr 0.01 because the Fourier surrogate's gradient peaks at 4(n+1)
    "mnist_toycnn": dict(dataset="mnist", data_dir="data/mnist", arch="toycnn", epochs=5, batch_size=128,
                         lr=0.01, optimizer="sgd", momentum=0.9, weight_decay=1e-4, lr_schedule="cosine",
                         surrogate="fda", schedule="ramp_from_ns", n_s=2, n_p=4, augment=False),
    "mnist_toycnn_ste": dict(dataset="mnist", data_dir="data/mnist", arch="toycnn", epochs=5, batch_size=128,
                             lr=0.01, optimizer="sgd", momentum=0.9, weight_decay=1e-4, lr_schedule="cosine",
                             surrogate="ste", weight_adapter=False, activation_adapter=False, augment=False),
    "cifar10_resnet20": dict(dataset="cifar10", data_dir="data/cifar-10-batches-bin", arch="resnet20",
                             epochs=400, batch_size=128, lr=0.1, optimizer="sgd", momentum=0.9,
                             weight_decay=1e-4, lr_schedule="cosine", surrogate="fda",
                             schedule="ramp_from_ns", n_s=10, n_p=20, augment=True),
    "cifar10_vggsmall": dict(dataset="cifar10", data_dir="data/cifar-10-batches-bin", arch="vggsmall",
                             epochs=400, batch_size=128, lr=0.1, optimizer="sgd", momentum=0.9,
                             weight_decay=1e-4, lr_schedule="cosine", surrogate="fda",
                             schedule="ramp_from_ns", n_s=10, n_p=20, augment=True),
    # optimizer recipe used for large-scale runs; no ImageNet loader ships here
    "imagenet_adam": dict(optimizer="adam", lr=1e-3, weight_decay=0.0, lr_schedule="cosine"),
}


def _coerce(template: Any, raw: Any, key: str) -> Any:
    if not isinstance(raw, str):
        if isinstance(template, tuple):
            return tuple(int(v) for v in raw)
        return raw
    text = raw.strip()
    try:
        if isinstance(template, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(template, int):
            return int(text)
        if isinstance(template, float):
            return float(text)
        if isinstance(template, tuple):
            return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return text.lower() if key not in ("data_dir", "out_dir") else text


def set_value(cfg: TrainConfig, key: str, raw: Any) -> None:
    key = key.strip()
    names = {f.name for f in fields(cfg)}
    if key not in names:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(cfg, key, _coerce(getattr(cfg, key), raw, key))


def parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def apply_pairs(cfg: TrainConfig, pairs: list[tuple[str, str]]) -> TrainConfig:
    for key, value in pairs:
        if key == "preset":
            continue
        set_value(cfg, key, value)
    return cfg


def config_from_pairs(pairs: list[tuple[str, str]]) -> TrainConfig:
    cfg = TrainConfig()
    for key, value in pairs:
        if key == "preset":
            if value not in PRESETS:
                raise ConfigError(f"unknown preset {value!r}; known: {sorted(PRESETS)}")
            for k, v in PRESETS[value].items():
                set_value(cfg, k, v)
    return apply_pairs(cfg, pairs)


def load_config(path: str | Path, overrides: list[str] = ()) -> TrainConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = config_from_pairs(parse_pairs(text))
    apply_overrides(cfg, overrides)
    return cfg.validate()


def apply_overrides(cfg: TrainConfig, overrides) -> TrainConfig:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        set_value(cfg, key, value)
    return cfg


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = " ".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
