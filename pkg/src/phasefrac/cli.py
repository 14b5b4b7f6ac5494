"""Reproduction driver: generate / train / evaluate / gradcheck / bench.

All commands take ``--config FILE`` (JSON, overlaid on built-in defaults)
plus repeatable ``--set key.path=value`` overrides.  Exit codes: 0 success,
2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from . import datagen, evaluation, models, training
from .config import ConfigError
from .mlp import GradientError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _resolved_config(args) -> tuple[dict, str]:
    cfg = cfgmod.load_config(args.config)
    cfgmod.apply_overrides(cfg, args.set or [])
    cfgmod.validate(cfg)
    return cfg, cfgmod.config_hash(cfg)


def cmd_generate(args) -> int:
    cfg, chash = _resolved_config(args)
    gen = cfgmod.gen_config(cfg)
    dataset = datagen.generate_dataset(
        gen, cfg["variant"], meta={"config_hash": chash, "seed": cfg["seed"]}
    )
    csv_path, meta_path = datagen.save_dataset(dataset, cfg["paths"]["dataset"])
    print(f"{len(dataset.split)} paths, {dataset.n_rows} rows")
    print(f"wrote {csv_path} and {meta_path}")
    return EXIT_OK


def _load_dataset(cfg) -> datagen.Dataset:
    return datagen.load_dataset(cfg["paths"]["dataset"])


def _build_model(cfg, dataset, seed: int):
    if cfg["model"] == "naive":
        return models.make_naive_model(dataset.norm, seed)
    return models.make_energy_model(dataset.norm, seed, plastic=dataset.mode == "ductile")


def cmd_train(args) -> int:
    cfg, chash = _resolved_config(args)
    dataset = _load_dataset(cfg)
    tcfg = cfgmod.train_config(cfg)
    model = _build_model(cfg, dataset, tcfg.seed)
    extra = {
        "seed": tcfg.seed,
        "config_hash": chash,
        "dataset_mode": dataset.mode,
        "variant": dataset.variant,
        "model": cfg["model"],
    }
    try:
        model, report = training.train(model, dataset, tcfg)
    except training.TrainingDiverged as err:
        if err.report is not None:
            err.report.save(cfg["paths"]["train_report"])
        print(f"training diverged: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    ck = models.save_checkpoint(cfg["paths"]["checkpoint"], model, extra)
    report.save(cfg["paths"]["train_report"])
    report.save_curves_csv(cfg["paths"]["curves"])
    print(
        f"trained {cfg['model']} on {dataset.mode}/{dataset.variant}: "
        f"best epoch {report.best_epoch}, val loss {report.best_val_loss:.6g}"
    )
    print(f"wrote {ck}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg, chash = _resolved_config(args)
    dataset = _load_dataset(cfg)
    ck_path = Path(cfg["paths"]["checkpoint"])
    if not ck_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ck_path}")
    model, doc = models.load_checkpoint(ck_path)
    if doc.get("dataset_mode") != dataset.mode:
        raise ConfigError(
            f"checkpoint was trained on {doc.get('dataset_mode')!r} data, "
            f"dataset is {dataset.mode!r}"
        )
    if models.checkpoint_doc(model)["norm"] != dataset.norm.to_dict():
        raise ConfigError("checkpoint normalization does not match the dataset")
    ecfg = cfg["eval"]
    report = evaluation.evaluate(
        model,
        dataset,
        modes=tuple(ecfg["modes"]),
        onset_window=int(ecfg["onset_window"]),
        mape_floor=float(ecfg["mape_floor"]),
        info={"config_hash": chash, "seed": doc.get("seed"), "model": doc.get("model")},
    )
    out = report.save(cfg["paths"]["report"])
    pred_dir = Path(cfg["paths"]["predictions_dir"])
    for scenario in datagen.SCENARIOS:
        evaluation.save_predictions_csv(
            model, dataset, scenario, pred_dir / f"predictions_{scenario}.csv",
            modes=tuple(ecfg["modes"]),
        )
    for scenario in datagen.SCENARIOS:
        for mode in report.modes:
            r2 = report.metric(scenario, mode, "sigma", "r2")
            print(f"{scenario:>7s} {mode:<15s} stress R2 = {r2:+.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    cfg, _ = _resolved_config(args)
    ok, lines = gradcheck.run_all(seed=int(cfg["seed"]))
    for line in lines:
        print(line)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_bench(args) -> int:
    from . import bench

    _resolved_config(args)
    for line in bench.run_bench():
        print(line)
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasefrac",
        description="Phase-field fracture data generation and surrogate training",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "integrate the 23-path sweep and write dataset.csv + meta"),
        ("train", "train the configured surrogate on an existing dataset"),
        ("evaluate", "roll out a checkpoint on the test scenarios and write report.json"),
        ("gradcheck", "finite-difference certification of all gradient paths"),
        ("bench", "compare the compiled kernel core against the NumPy reference"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override a config entry (dotted path, JSON value)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, datagen.DatasetError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (GradientError, training.TrainingDiverged) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
