"""Training loop, evaluation and ablation sweeps."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autograd as ag
from .adapter import AlphaSchedule, alpha_at
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, apply_overrides
from .data import Dataset, load_dataset
from .models import BinaryNet, build_model
from .optim import make_optimizer
from .schedules import lr_at, n_at

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "train_acc", "test_acc", "n_terms", "alpha", "seconds")


class NumericalError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


@dataclass
class RunResult:
    metrics_path: Path
    checkpoint_path: Path
    history: list[dict] = field(default_factory=list)

    @property
    def final_test_acc(self) -> float:
        return self.history[-1]["test_acc"]


def alpha_for_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Adapter weight for ``epoch``; exactly 0 at the final epoch."""
    if not cfg.uses_adapter or cfg.epochs == 1:
        return 0.0
    return alpha_at(epoch, AlphaSchedule(cfg.alpha0, cfg.epochs - 1))


def model_for(cfg: TrainConfig, geometry: tuple[int, int]) -> BinaryNet:
    channels, size = geometry
    return build_model(cfg.arch, cfg.model_options(channels, size))


def evaluate_model(model: BinaryNet, data: Dataset, batch_size: int = 500, packed: bool = True) -> float:
    """Top-1 accuracy in eval mode; ``packed`` selects the XNOR-popcount path."""
    was_training = model.training
    model.eval()
    correct = 0
    try:
        with ag.no_grad():
            for x, y in data.batches(batch_size):
                logits = model(x, packed=packed).data
                correct += int((logits.argmax(axis=1) == y).sum())
    finally:
        model.train(was_training)
    return correct / len(data)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def train(cfg: TrainConfig, train_data: Dataset | None = None, test_data: Dataset | None = None,
          progress: Callable[[dict], None] | None = None) -> RunResult:
    """Run every epoch of minibatch training and write metrics and a checkpoint.

    Per step: forward through sign/surrogate layers, cross-entropy, backward,
    one optimizer update for all weights and adapter parameters, then latent
    weights are clipped back to [-1, 1].
    """
    cfg.validate()
    if train_data is None:
        train_data = load_dataset(cfg.dataset, "train", cfg.data_dir)
    if test_data is None:
        test_data = load_dataset(cfg.dataset, "test", cfg.data_dir)
    train_data = train_data.subset(cfg.train_limit)
    test_data = test_data.subset(cfg.test_limit)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    ckpt_path = out_dir / "model.ckpt"

    model = model_for(cfg, train_data.geometry)
    params = model.parameters()
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.momentum, cfg.weight_decay)
    setting = cfg.schedule_setting()
    data_rng = np.random.default_rng([cfg.seed, 1])
    augment = cfg.augment and cfg.dataset == "cifar10"
    history: list[dict] = []

    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            n_terms = n_at(epoch, setting)
            alpha = alpha_for_epoch(cfg, epoch)
            model.set_terms(n_terms)
            model.set_alpha(alpha)
            opt.lr = lr_at(epoch, cfg.lr, cfg.epochs, cfg.lr_schedule, cfg.lr_milestones)
            model.train()
            loss_sum, correct, seen = 0.0, 0, 0
            for x, y in train_data.batches(cfg.batch_size, data_rng, augment):
                opt.zero_grad()
                try:
                    logits = model(x)
                    loss = ag.cross_entropy(logits, y)
                    ag.backward(loss)
                    opt.step()
                except ag.NonFiniteError as exc:
                    raise NumericalError(f"epoch {epoch}: {exc}") from exc
                model.clip_latent()
                loss_sum += loss.item() * len(y)
                correct += int((logits.data.argmax(axis=1) == y).sum())
                seen += len(y)
            test_acc = evaluate_model(model, test_data, cfg.eval_batch_size)
            seconds = time.perf_counter() - started if cfg.log_wall_time else 0.0
            row = dict(epoch=epoch, train_loss=loss_sum / seen, train_acc=correct / seen, test_acc=test_acc,
                       n_terms=n_terms, alpha=alpha, seconds=seconds)
            history.append(row)
            writer.writerow([epoch, _fmt(row["train_loss"]), _fmt(row["train_acc"]), _fmt(test_acc),
                             n_terms, _fmt(alpha), f"{seconds:.3f}"])
            fh.flush()
            log.info("epoch %d loss %.4f train %.4f test %.4f n=%d alpha=%.4f (%.1fs)", epoch,
                     row["train_loss"], row["train_acc"], test_acc, n_terms, alpha, seconds)
            if progress is not None:
                progress(row)

    meta = {"config": cfg.to_dict(), "geometry": list(train_data.geometry),
            "epochs_run": cfg.epochs, "final_test_acc": history[-1]["test_acc"]}
    save_checkpoint(ckpt_path, model.state_dict(), meta)
    if cfg.figures:
        from .plotting import plot_training_curves
        plot_training_curves(history, out_dir / "curves.png")
    return RunResult(metrics_path, ckpt_path, history)


def load_model(checkpoint: str | Path) -> tuple[BinaryNet, TrainConfig, dict]:
    state, meta = load_checkpoint(checkpoint)
    cfg = TrainConfig.from_dict(meta["config"])
    model = model_for(cfg, tuple(meta["geometry"]))
    model.load_state_dict(state)
    model.set_alpha(0.0)
    return model, cfg, meta


def evaluate(checkpoint: str | Path, data_dir: str | Path | None = None, limit: int | None = None) -> float:
    """Test-split accuracy of a checkpoint through the packed inference path."""
    model, cfg, meta = load_model(checkpoint)
    data = load_dataset(cfg.dataset, "test", data_dir or cfg.data_dir)
    data = data.subset(cfg.test_limit if limit is None else limit)
    if data.geometry != tuple(meta["geometry"]):
        raise ag.ShapeError(f"checkpoint expects {tuple(meta['geometry'])} inputs, dataset has {data.geometry}")
    return evaluate_model(model, data, cfg.eval_batch_size)


# ---------------------------------------------------------------------------
# ablation sweeps
# ---------------------------------------------------------------------------

ABLATION_GRIDS: dict[str, list[tuple[str, dict[str, str]]]] = {
    "surrogate_adapter": [
        ("ste", dict(surrogate="ste", weight_adapter="false", activation_adapter="false")),
        ("fda", dict(surrogate="fda", weight_adapter="false", activation_adapter="false")),
        ("fda+adapter", dict(surrogate="fda", weight_adapter="true", activation_adapter="true")),
        ("ste+adapter", dict(surrogate="ste", weight_adapter="true", activation_adapter="true")),
    ],
    "baseline_adapter": [
        (f"{s}{'+adapter' if on else ''}", dict(surrogate=s, weight_adapter=str(on), activation_adapter=str(on)))
        for s in ("tanh", "signswish", "fda") for on in (False, True)
    ],
    "shortcut": [
        (f"eta={eta}", dict(surrogate="fda", weight_adapter="true", activation_adapter="true", eta=eta))
        for eta in ("zero", "linear", "sine")
    ],
}

SWEEP_HEADER = ("variant", "surrogate", "adapter", "eta", "final_test_acc", "best_test_acc", "final_train_loss")


def parse_sweep_spec(text: str) -> tuple[list[tuple[str, str]], list[tuple[str, dict[str, str]]]]:
    """Split a sweep file into base config pairs and named variants.

    Lines ``grid = surrogate_adapter`` add a predefined grid; lines
    ``variant = name: key=value, key=value`` add one variant; every other
    ``key = value`` line configures the shared base run.
    """
    from .config import ConfigError, parse_pairs

    base, variants = [], []
    for key, value in parse_pairs(text):
        if key == "grid":
            if value not in ABLATION_GRIDS:
                raise ConfigError(f"unknown grid {value!r}; known: {sorted(ABLATION_GRIDS)}")
            variants.extend(ABLATION_GRIDS[value])
        elif key == "variant":
            name, _, body = value.partition(":")
            overrides = {}
            for item in filter(None, (p.strip() for p in body.split(","))):
                k, eq, v = item.partition("=")
                if not eq:
                    raise ConfigError(f"variant {name!r}: bad override {item!r}")
                overrides[k.strip()] = v.strip()
            variants.append((name.strip(), overrides))
        else:
            base.append((key, value))
    if not variants:
        raise ConfigError("sweep spec lists no variants")
    return base, variants


def ablation_sweep(base: TrainConfig, variants: list[tuple[str, dict[str, str]]],
                   out_path: str | Path, train_data: Dataset | None = None,
                   test_data: Dataset | None = None) -> list[dict]:
    """Train every variant with the base seed and data order; write a table."""
    import copy

    if train_data is None:
        train_data = load_dataset(base.dataset, "train", base.data_dir)
    if test_data is None:
        test_data = load_dataset(base.dataset, "test", base.data_dir)
    rows = []
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    for name, overrides in variants:
        cfg = copy.deepcopy(base)
        apply_overrides(cfg, [f"{k}={v}" for k, v in overrides.items()])
        cfg.out_dir = str(Path(base.out_dir) / name.replace("/", "_").replace("=", "_").replace("+", "_"))
        result = train(cfg, train_data, test_data)
        rows.append({
            "variant": name, "surrogate": cfg.surrogate,
            "adapter": "on" if cfg.uses_adapter else "off",
            "eta": cfg.eta if cfg.uses_adapter else "-",
            "final_test_acc": result.final_test_acc,
            "best_test_acc": max(r["test_acc"] for r in result.history),
            "final_train_loss": result.history[-1]["train_loss"],
        })
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for r in rows:
            writer.writerow([r["variant"], r["surrogate"], r["adapter"], r["eta"], _fmt(r["final_test_acc"]),
                             _fmt(r["best_test_acc"]), _fmt(r["final_train_loss"])])
    return rows
