"""Adam training loop with validation-based early stopping.

One loop serves both surrogates; the model-specific part is reduced to a
flat parameter vector plus loss/gradient callables.  Everything downstream
of ``(seed, config, dataset)`` is deterministic: shuffling uses a seeded
generator and the best-validation parameters are restored at the end.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import models as _models
from .mlp import GradientError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 5000
    patience: int = 200  # epochs without validation improvement
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        for name in ("learning_rate", "beta1", "beta2", "epsilon", "batch_size",
                     "max_epochs", "patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


class TrainingDiverged(RuntimeError):
    """Validation loss became non-finite; carries the partial report."""

    def __init__(self, message: str, report: "TrainReport | None" = None):
        super().__init__(message)
        self.report = report


def adam_step(theta, grad, m, v, t, config: TrainConfig):
    """One bias-corrected Adam update; t is the 1-based step index."""
    if t < 1:
        raise ValueError("step index t must be >= 1")
    if not np.all(np.isfinite(grad)):
        raise GradientError("non-finite gradient passed to the optimizer")
    m = config.beta1 * m + (1.0 - config.beta1) * grad
    v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    theta = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return theta, m, v


@dataclass
class TrainReport:
    seed: int
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    wall_time_s: float = 0.0
    epochs: list = field(default_factory=list)  # {epoch, train_loss, val_loss, val_terms}
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stopped_early": self.stopped_early,
            "n_epochs": len(self.epochs),
            "wall_time_s": self.wall_time_s,
            "epochs": self.epochs,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def save_curves_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        term_names = sorted(self.epochs[0]["val_terms"]) if self.epochs else []
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(["epoch", "train_loss", "val_loss", *("val_" + t for t in term_names)]) + "\n")
            for row in self.epochs:
                cells = [str(row["epoch"]), "%.17g" % row["train_loss"], "%.17g" % row["val_loss"]]
                cells += ["%.17g" % row["val_terms"][t] for t in term_names]
                fh.write(",".join(cells) + "\n")
        return path


def _subset(rows: dict, idx: np.ndarray) -> dict:
    return {name: arr[idx] for name, arr in rows.items()}


def _loss_interface(model, dataset):
    """(theta0, set_theta, batch_loss_grad, full_loss) for either model kind."""
    if isinstance(model, _models.NaiveStressModel):
        theta0 = model.params.to_vector()

        def set_theta(theta):
            model.params = model.params.from_vector(theta)

        def batch_loss_grad(batch):
            loss, grad = _models.naive_loss_and_grad(model, batch)
            return loss, grad

        def full_loss(batch):
            loss = _models.naive_loss(model, batch)
            return loss, {"sigma": loss}

        return theta0, set_theta, batch_loss_grad, full_loss

    if isinstance(model, _models.EnergyModel):
        na = model.state_params.n_values()
        theta0 = np.concatenate([model.state_params.to_vector(), model.energy_params.to_vector()])

        def set_theta(theta):
            model.state_params = model.state_params.from_vector(theta[:na])
            model.energy_params = model.energy_params.from_vector(theta[na:])

        def batch_loss_grad(batch):
            total, _, ga, gb = _models.energy_loss_and_grad(model, batch)
            return total, np.concatenate([ga, gb])

        def full_loss(batch):
            return _models.energy_loss(model, batch)

        return theta0, set_theta, batch_loss_grad, full_loss

    raise TypeError(f"cannot train {type(model)!r}")


def train(model, dataset, config: TrainConfig):
    """Fit in place; returns (model, TrainReport) at the best-validation epoch."""
    train_rows = dataset.rows(dataset.mask_for_split("train"))
    val_rows = dataset.rows(dataset.mask_for_split("val"))
    n_train = train_rows["eps_next"].size
    if n_train == 0 or val_rows["eps_next"].size == 0:
        raise ValueError("dataset must provide non-empty train and val splits")

    theta, set_theta, batch_loss_grad, full_loss = _loss_interface(model, dataset)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    t = 0
    rng = np.random.default_rng(config.seed)
    batch_size = min(config.batch_size, n_train)  # full-batch fallback

    report = TrainReport(seed=config.seed)
    best_theta = theta.copy()
    started = time.perf_counter()

    for epoch in range(config.max_epochs):
        order = rng.permutation(n_train) if config.shuffle else np.arange(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, batch_size):
            idx = order[start : start + batch_size]
            set_theta(theta)
            loss, grad = batch_loss_grad(_subset(train_rows, idx))
            t += 1
            theta, m, v = adam_step(theta, grad, m, v, t, config)
            epoch_loss += loss * idx.size
        set_theta(theta)
        val_loss, val_terms = full_loss(val_rows)
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / n_train,
                "val_loss": val_loss,
                "val_terms": val_terms,
            }
        )
        if not np.isfinite(val_loss):
            report.wall_time_s = time.perf_counter() - started
            raise TrainingDiverged(f"validation loss became {val_loss!r} at epoch {epoch}", report)
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_theta = theta.copy()
        elif epoch - report.best_epoch >= config.patience:
            report.stopped_early = True
            break

    set_theta(best_theta)
    report.wall_time_s = time.perf_counter() - started
    return model, report


def config_from_dict(d: dict) -> TrainConfig:
    allowed = {f for f in TrainConfig.__dataclass_fields__}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown training config keys: {sorted(unknown)}")
    return TrainConfig(**d)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
