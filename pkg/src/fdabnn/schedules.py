"""Per-epoch schedules for the Fourier term count and the learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

SETTING_KINDS = ("fixed", "ramp_from_one", "ramp_from_ns")


@dataclass(frozen=True)
class ScheduleSetting:
    """How many Fourier terms each epoch uses.

    ``fixed``: always ``n_p``. ``ramp_from_one``: 1 up to ``n_p``.
    ``ramp_from_ns``: ``n_s`` up to ``n_p`` (``2 * n_s`` when unset). Ramps are
    linear in the epoch index, floored, and hit ``n_p`` at epoch ``epochs - 1``.
    """

    kind: str = "ramp_from_ns"
    n_p: int | None = None
    n_s: int | None = 10
    epochs: int = 1

    def __post_init__(self):
        if self.kind not in SETTING_KINDS:
            raise ValueError(f"schedule kind must be one of {SETTING_KINDS}")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.kind == "ramp_from_ns":
            if self.n_s is None or self.n_s < 0:
                raise ValueError("ramp_from_ns needs n_s >= 0")
            if self.n_p is None:
                object.__setattr__(self, "n_p", 2 * self.n_s)
        if self.n_p is None or self.n_p < 0:
            raise ValueError("n_p must be a non-negative integer")
        if self.start > self.n_p:
            raise ValueError(f"ramp start {self.start} exceeds n_p {self.n_p}")

    @property
    def start(self) -> int:
        if self.kind == "fixed":
            return self.n_p
        if self.kind == "ramp_from_one":
            return min(1, self.n_p)
        return self.n_s


def n_at(epoch: int, setting: ScheduleSetting) -> int:
    if not 0 <= epoch < setting.epochs:
        raise ValueError(f"epoch {epoch} outside run of {setting.epochs}")
    if setting.kind == "fixed" or setting.epochs == 1:
        return setting.n_p
    start, stop = setting.start, setting.n_p
    n = start + math.floor((stop - start) * epoch / (setting.epochs - 1))
    return min(max(n, start), stop)


def lr_at(epoch: int, base_lr: float, epochs: int, kind: str = "cosine",
          milestones: tuple[int, ...] = (), gamma: float = 0.1) -> float:
    if kind == "constant":
        return base_lr
    if kind == "cosine":
        return 0.5 * base_lr * (1 + math.cos(math.pi * epoch / epochs))
    if kind == "step":
        return base_lr * gamma ** sum(epoch >= m for m in milestones)
    raise ValueError(f"unknown lr schedule {kind!r}")
