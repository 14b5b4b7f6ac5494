"""Experiment configuration: one JSON document, dotted overrides, stable hash.

Every command takes the same resolved structure; outputs embed the sha256 of
the canonical (sorted, separators-normalized) JSON so artifacts can be traced
back to the exact configuration that produced them.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .datagen import GenConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "mode": "brittle",  # brittle | ductile
    "variant": "full",  # full | reduced
    "model": "energy",  # naive | energy
    "seed": 0,
    "paths": {
        "dataset": "out/dataset.csv",
        "checkpoint": "out/checkpoint.json",
        "train_report": "out/train_report.json",
        "curves": "out/loss_curves.csv",
        "report": "out/report.json",
        "predictions_dir": "out",
    },
    "datagen": {
        "n_trainval": 20,
        "n_steps": None,  # null -> 150 brittle / 300 ductile
        "e_range": [20.0, 50.0],
        "y0_range": [0.4, 0.85],
        "psi_c_range": [0.05, 0.155],
        "zeta": 1.0,
        "h": 0.0,
        "eta_p": 0.0,
        "eta_d": 0.0,
        "history_normalized": False,
        "eps_max_policy": None,  # null -> damage_target (brittle) / onset_scale (ductile)
        "damage_target": 0.92,
        "onset_scale": 3.0,
        "train_onset_scales": None,  # null -> (1.2, 2.0, 3.0) for ductile
    },
    "train": {
        "seed": None,  # null -> top-level seed
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "batch_size": 64,
        "max_epochs": 5000,
        "patience": 200,
        "shuffle": True,
    },
    "eval": {
        "modes": ["teacher_forced", "autoregressive"],
        "onset_window": 5,
        "mape_floor": 1e-6,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults overlaid with the JSON file at ``path`` (file optional)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge(DEFAULTS, user)


def apply_overrides(cfg: dict, sets: list[str]) -> dict:
    """Apply ``--set a.b=value`` pairs; values parse as JSON, else strings."""
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown configuration key {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown configuration key {key!r}")
        node[parts[-1]] = value
    return cfg


def validate(cfg: dict) -> dict:
    if cfg["mode"] not in ("brittle", "ductile"):
        raise ConfigError(f"mode must be brittle or ductile, got {cfg['mode']!r}")
    if cfg["variant"] not in ("full", "reduced"):
        raise ConfigError(f"variant must be full or reduced, got {cfg['variant']!r}")
    if cfg["model"] not in ("naive", "energy"):
        raise ConfigError(f"model must be naive or energy, got {cfg['model']!r}")
    for mode in cfg["eval"]["modes"]:
        if mode not in ("teacher_forced", "autoregressive"):
            raise ConfigError(f"unknown rollout mode {mode!r}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def gen_config(cfg: dict) -> GenConfig:
    d = cfg["datagen"]
    try:
        return GenConfig(
            mode=cfg["mode"],
            seed=int(cfg["seed"]),
            n_trainval=int(d["n_trainval"]),
            n_steps=None if d["n_steps"] is None else int(d["n_steps"]),
            e_range=tuple(d["e_range"]),
            y0_range=tuple(d["y0_range"]),
            psi_c_range=tuple(d["psi_c_range"]),
            zeta=float(d["zeta"]),
            h=float(d["h"]),
            eta_p=float(d["eta_p"]),
            eta_d=float(d["eta_d"]),
            history_normalized=bool(d["history_normalized"]),
            eps_max_policy=d["eps_max_policy"],
            damage_target=float(d["damage_target"]),
            onset_scale=float(d["onset_scale"]),
            train_onset_scales=(None if d["train_onset_scales"] is None
                                else tuple(d["train_onset_scales"])),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def train_config(cfg: dict) -> TrainConfig:
    t = dict(cfg["train"])
    seed = t.pop("seed", None)
    try:
        return TrainConfig(seed=int(cfg["seed"] if seed is None else seed), **t)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
