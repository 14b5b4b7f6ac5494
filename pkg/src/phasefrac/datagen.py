"""Dataset construction: parameter sweeps, trajectories, splits, scaling, IO.

A dataset is 23 monotone load paths (20 train/val + 3 held-out tests at the
range minima / midpoints / maxima), integrated with the material-point model
and flattened into per-step transition rows.  The ``full`` variant trains on
18 paths, the ``reduced`` variant on a deterministic 9-path subsample; both
share the same validation pool and the same three test paths.

Everything is reproducible from (config, seed): sampling uses a seeded
generator, splits are seeded permutations, and the CSV is written with
17-significant-digit round-trip formatting.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import material
from .material import MaterialParams, Trajectory

SCHEMA_VERSION = 1

COLUMNS = (
    "path_id",
    "step",
    "eps_next",
    "eps_n",
    "eps_p_n",
    "eps_p_next",
    "sigma_n",
    "sigma_next",
    "d_n",
    "d_next",
    "psi_next",
    "D_p_n",
    "D_p_next",
    "D_d_n",
    "D_d_next",
    "E",
    "y0",
    "psi_c",
)
INT_COLUMNS = ("path_id", "step")

# physical quantity behind each column; one scale is shared by all time
# indices of a quantity so derivative relations survive scaling
COLUMN_QUANTITY = {
    "eps_next": "eps",
    "eps_n": "eps",
    "eps_p_n": "eps_p",
    "eps_p_next": "eps_p",
    "sigma_n": "sigma",
    "sigma_next": "sigma",
    "d_n": "d",
    "d_next": "d",
    "psi_next": "psi",
    "E": "E",
}
QUANTITIES = ("eps", "eps_p", "sigma", "d", "psi", "D", "E")

SPLITS = ("train", "val", "test_lower", "test_interp", "test_upper")
SCENARIOS = ("lower", "interp", "upper")

MARGIN = 0.05  # training hull margin as a fraction of each parameter span


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    """Generation settings for one dataset (mode fixes plasticity on/off)."""

    mode: str  # "brittle" | "ductile"
    seed: int = 0
    n_trainval: int = 20
    n_steps: int | None = None  # defaults: 150 brittle, 300 ductile
    e_range: tuple[float, float] = (20.0, 50.0)
    y0_range: tuple[float, float] = (0.4, 0.85)
    psi_c_range: tuple[float, float] = (0.05, 0.155)
    zeta: float = 1.0
    h: float = 0.0
    eta_p: float = 0.0
    eta_d: float = 0.0
    history_normalized: bool = False
    eps_max_policy: str | None = None  # damage_target | onset_scale; default by mode
    damage_target: float = 0.92
    onset_scale: float = 3.0
    # optional cycle of onset scales over the train/val paths so every regime
    # (elastic, plastic plateau, softening) is densely covered; test paths
    # always use the single configured policy
    train_onset_scales: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("brittle", "ductile"):
            raise DatasetError(f"mode must be brittle or ductile, got {self.mode!r}")
        if self.eps_max_policy is None:
            policy = "damage_target" if self.mode == "brittle" else "onset_scale"
            object.__setattr__(self, "eps_max_policy", policy)
        if self.eps_max_policy not in ("damage_target", "onset_scale"):
            raise DatasetError(f"unknown eps_max_policy {self.eps_max_policy!r}")
        if self.train_onset_scales is None and self.mode == "ductile":
            object.__setattr__(self, "train_onset_scales", (1.2, 2.0, 3.0))

    @property
    def steps(self) -> int:
        if self.n_steps is not None:
            return int(self.n_steps)
        return 150 if self.mode == "brittle" else 300

    @property
    def ranges(self) -> dict[str, tuple[float, float]]:
        ranges = {"E": self.e_range, "psi_c": self.psi_c_range}
        if self.mode == "ductile":
            ranges["y0"] = self.y0_range
        return ranges

    @property
    def fixed(self) -> dict[str, float]:
        fixed = {"zeta": self.zeta, "h": self.h, "eta_p": self.eta_p, "eta_d": self.eta_d}
        if self.mode == "brittle":
            fixed["y0"] = math.inf
        return fixed


@dataclass(frozen=True)
class LoadPath:
    path_id: int
    params: MaterialParams
    eps_max: float
    n_steps: int
    mode: str

    def __post_init__(self) -> None:
        if self.n_steps < 2:
            raise DatasetError("n_steps must be >= 2")
        if not self.eps_max > 0.0:
            raise DatasetError("eps_max must be positive")


def sample_parameter_grid(
    ranges: dict[str, tuple[float, float]],
    n_train_val: int,
    seed: int,
    fixed: dict[str, float] | None = None,
) -> list[MaterialParams]:
    """Latin-hypercube sample strictly inside the 5%-margin training hull.

    Each parameter is split into ``n_train_val`` equal strata of the
    margin-shrunk interval with one draw per stratum; per-parameter shuffles
    decorrelate the pairing.  Deterministic for a fixed seed.
    """
    if n_train_val < 2:
        raise DatasetError(f"n_train_val must be >= 2, got {n_train_val}")
    for name, (lo, hi) in ranges.items():
        if not lo < hi:
            raise DatasetError(f"invalid range for {name}: [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    cols: dict[str, np.ndarray] = {}
    for name, (lo, hi) in ranges.items():
        span = hi - lo
        inner_lo = lo + MARGIN * span
        width = (span - 2.0 * MARGIN * span) / n_train_val
        values = inner_lo + (np.arange(n_train_val) + rng.uniform(size=n_train_val)) * width
        rng.shuffle(values)
        cols[name] = values
    fixed = fixed or {}
    return [
        MaterialParams(**{name: float(cols[name][i]) for name in cols}, **fixed)
        for i in range(n_train_val)
    ]


def make_test_paths(
    ranges: dict[str, tuple[float, float]], fixed: dict[str, float] | None = None
) -> dict[str, MaterialParams]:
    """Held-out parameter points: range minima, midpoints, and maxima."""
    fixed = fixed or {}
    lower = {name: lo for name, (lo, hi) in ranges.items()}
    upper = {name: hi for name, (lo, hi) in ranges.items()}
    interp = {name: 0.5 * (lo + hi) for name, (lo, hi) in ranges.items()}
    return {
        "lower": MaterialParams(**lower, **fixed),
        "interp": MaterialParams(**interp, **fixed),
        "upper": MaterialParams(**upper, **fixed),
    }


def path_eps_max(params: MaterialParams, cfg: GenConfig, onset_scale: float | None = None) -> float:
    if onset_scale is not None:
        return onset_scale * material.onset_strain(params)
    if cfg.eps_max_policy == "damage_target":
        return material.strain_for_damage(params, cfg.damage_target, cfg.history_normalized)
    return cfg.onset_scale * material.onset_strain(params)


def build_load_paths(cfg: GenConfig) -> list[LoadPath]:
    """The 23 paths of one dataset; ids 0-19 train/val pool, 20-22 tests."""
    grid = sample_parameter_grid(cfg.ranges, cfg.n_trainval, cfg.seed, cfg.fixed)
    tests = make_test_paths(cfg.ranges, cfg.fixed)
    cycle = cfg.train_onset_scales
    paths = [
        LoadPath(i, p, path_eps_max(p, cfg, cycle[i % len(cycle)] if cycle else None),
                 cfg.steps, cfg.mode)
        for i, p in enumerate(grid)
    ]
    for offset, scenario in enumerate(SCENARIOS):
        p = tests[scenario]
        paths.append(LoadPath(cfg.n_trainval + offset, p, path_eps_max(p, cfg), cfg.steps, cfg.mode))
    return paths


def generate_trajectory(path: LoadPath, history_normalized: bool = False) -> Trajectory:
    return material.simulate(
        path.params,
        path.eps_max,
        path.n_steps,
        dt=1.0 / path.n_steps,
        history_normalized=history_normalized,
    )


def replay_check(path: LoadPath, traj: Trajectory, rng: np.random.Generator, fraction: float = 0.01) -> None:
    """Re-apply the integrator on a row sample; transitions must reproduce exactly."""
    n = traj.n_steps
    count = max(1, int(fraction * n))
    for k in rng.choice(n, size=count, replace=False):
        redo = material.step(
            traj.states[k], traj.states[k + 1].eps, traj.dt, path.params, traj.history_normalized
        )
        if redo != traj.states[k + 1]:
            raise DatasetError(f"path {path.path_id} step {k} is not replayable")


@dataclass
class NormScales:
    """Per-quantity affine min-max scales fitted on the training split.

    ``apply`` maps train min/max to 0/1; quantities with a degenerate range
    fall back to the identity scale and are listed in ``degenerate``.
    """

    scales: dict[str, tuple[float, float]]
    degenerate: tuple[str, ...] = ()

    def lo(self, quantity: str) -> float:
        return self.scales[quantity][0]

    def span(self, quantity: str) -> float:
        lo, hi = self.scales[quantity]
        return hi - lo

    def apply(self, quantity: str, x):
        lo, hi = self.scales[quantity]
        return (x - lo) / (hi - lo)

    def invert(self, quantity: str, xhat):
        lo, hi = self.scales[quantity]
        return lo + (hi - lo) * xhat

    def to_dict(self) -> dict:
        return {
            "scales": {q: list(v) for q, v in self.scales.items()},
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormScales":
        return cls(
            scales={q: (float(v[0]), float(v[1])) for q, v in d["scales"].items()},
            degenerate=tuple(d.get("degenerate", ())),
        )


def fit_normalization(columns: dict[str, np.ndarray], train_mask: np.ndarray) -> NormScales:
    """Min-max per physical quantity over training rows only."""
    if not np.any(train_mask):
        raise DatasetError("cannot fit normalization without training rows")
    series: dict[str, list[np.ndarray]] = {q: [] for q in QUANTITIES}
    for col, quantity in COLUMN_QUANTITY.items():
        series[quantity].append(columns[col][train_mask])
    series["D"].append((columns["D_p_next"] + columns["D_d_next"])[train_mask])
    scales: dict[str, tuple[float, float]] = {}
    degenerate: list[str] = []
    for quantity in QUANTITIES:
        stacked = np.concatenate(series[quantity])
        lo, hi = float(np.min(stacked)), float(np.max(stacked))
        if hi - lo <= 0.0:
            scales[quantity] = (0.0, 1.0)  # identity fallback
            degenerate.append(quantity)
        else:
            scales[quantity] = (lo, hi)
    return NormScales(scales=scales, degenerate=tuple(degenerate))


@dataclass
class Dataset:
    """Flattened step rows plus split labels, scales, and provenance."""

    columns: dict[str, np.ndarray]
    split: dict[int, str]
    norm: NormScales
    variant: str
    mode: str
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return int(self.columns["path_id"].shape[0])

    def path_ids(self, label: str | None = None) -> list[int]:
        if label is None:
            return sorted(self.split)
        return sorted(pid for pid, lab in self.split.items() if lab == label)

    def mask_for_paths(self, path_ids) -> np.ndarray:
        return np.isin(self.columns["path_id"], list(path_ids))

    def mask_for_split(self, label: str) -> np.ndarray:
        return self.mask_for_paths(self.path_ids(label))

    def rows(self, mask: np.ndarray | None = None) -> dict[str, np.ndarray]:
        if mask is None:
            return self.columns
        return {name: arr[mask] for name, arr in self.columns.items()}

    def test_path_id(self, scenario: str) -> int:
        ids = self.path_ids(f"test_{scenario}")
        if len(ids) != 1:
            raise DatasetError(f"expected exactly one test_{scenario} path, got {ids}")
        return ids[0]

    def path_rows(self, path_id: int) -> dict[str, np.ndarray]:
        rows = self.rows(self.mask_for_paths([path_id]))
        order = np.argsort(rows["step"], kind="stable")
        return {name: arr[order] for name, arr in rows.items()}


def _rows_from_trajectory(path: LoadPath, traj: Trajectory) -> dict[str, np.ndarray]:
    n = traj.n_steps
    get = traj.column
    eps = get("eps")
    eps_p = get("eps_p")
    sigma = get("sigma")
    d = get("d")
    psi = get("psi_e_stored")
    dp = get("D_p")
    dd = get("D_d")
    return {
        "path_id": np.full(n, path.path_id, dtype=np.int64),
        "step": np.arange(n, dtype=np.int64),
        "eps_next": eps[1:],
        "eps_n": eps[:-1],
        "eps_p_n": eps_p[:-1],
        "eps_p_next": eps_p[1:],
        "sigma_n": sigma[:-1],
        "sigma_next": sigma[1:],
        "d_n": d[:-1],
        "d_next": d[1:],
        "psi_next": psi[1:],
        "D_p_n": dp[:-1],
        "D_p_next": dp[1:],
        "D_d_n": dd[:-1],
        "D_d_next": dd[1:],
        "E": np.full(n, path.params.E),
        "y0": np.full(n, path.params.y0),
        "psi_c": np.full(n, path.params.psi_c),
    }


def assemble_dataset(
    pairs: list[tuple[LoadPath, Trajectory]],
    variant: str,
    seed: int,
    meta: dict | None = None,
    regime_key: list[float] | None = None,
) -> Dataset:
    """Split, normalize, and flatten the 23-path sweep into one dataset.

    ``pairs`` must hold the 20 train/val paths followed by the three test
    paths in (lower, interp, upper) order.  The reduced variant keeps a
    seeded 9-path subsample of the full training paths and the first
    validation path, so reduced-train is a subset of full-train.

    When the train paths span different strain-reach regimes (``regime_key``
    per train/val path, larger = deeper into softening), validation picks one
    deep-reach and one mid-reach path deterministically so early stopping
    sees every regime; otherwise the validation pair is a seeded draw.
    """
    if variant not in ("full", "reduced"):
        raise DatasetError(f"variant must be full or reduced, got {variant!r}")
    if len(pairs) != 23:
        raise DatasetError(f"expected 23 trajectories (20 train/val + 3 test), got {len(pairs)}")
    trainval = pairs[:20]
    tests = pairs[20:]

    rng = np.random.default_rng(seed)
    if regime_key is None:
        perm = rng.permutation(20)
        train_pool, val_pool = perm[:18], perm[18:]
    else:
        if len(regime_key) != 20:
            raise DatasetError("regime_key must cover the 20 train/val paths")
        order = np.argsort(-np.asarray(regime_key), kind="stable")
        val_pool = np.array([order[1], order[len(order) // 2]])
        rest = np.array([i for i in range(20) if i not in set(val_pool.tolist())])
        train_pool = rest[rng.permutation(rest.size)]
    if variant == "full":
        train_idx, val_idx = train_pool, val_pool
    else:
        train_idx, val_idx = train_pool[:9], val_pool[:1]

    split: dict[int, str] = {}
    for i in train_idx:
        split[trainval[i][0].path_id] = "train"
    for i in val_idx:
        split[trainval[i][0].path_id] = "val"
    for (path, _), scenario in zip(tests, SCENARIOS):
        split[path.path_id] = f"test_{scenario}"

    included = [(p, t) for p, t in pairs if p.path_id in split]
    parts = [_rows_from_trajectory(p, t) for p, t in included]
    columns = {name: np.concatenate([part[name] for part in parts]) for name in COLUMNS}

    train_ids = [trainval[i][0].path_id for i in train_idx]
    train_mask = np.isin(columns["path_id"], train_ids)
    norm = fit_normalization(columns, train_mask)

    mode = pairs[0][0].mode
    info = {
        "schema_version": SCHEMA_VERSION,
        "variant": variant,
        "mode": mode,
        "seed": seed,
        "n_paths": len(included),
        "n_rows": int(columns["path_id"].shape[0]),
    }
    if meta:
        info.update(meta)
    return Dataset(columns=columns, split=split, norm=norm, variant=variant, mode=mode, meta=info)


def generate_dataset(cfg: GenConfig, variant: str, meta: dict | None = None) -> Dataset:
    """End-to-end build: paths -> trajectories -> replay check -> dataset."""
    paths = build_load_paths(cfg)
    pairs = [(p, generate_trajectory(p, cfg.history_normalized)) for p in paths]
    rng = np.random.default_rng(cfg.seed + 1)
    for path, traj in pairs:
        replay_check(path, traj, rng)
    info = {"gen": dataclasses.asdict(cfg)}
    if meta:
        info.update(meta)
    regime_key = None
    if cfg.train_onset_scales and len(set(cfg.train_onset_scales)) > 1:
        regime_key = [p.eps_max / material.onset_strain(p.params) for p, _ in pairs[:20]]
    return assemble_dataset(pairs, variant, cfg.seed, meta=info, regime_key=regime_key)


def _format_value(name: str, value) -> str:
    if name in INT_COLUMNS:
        return str(int(value))
    return "%.17g" % value


def save_dataset(dataset: Dataset, csv_path: str | Path) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and ``<name>.meta.json``; returns both paths."""
    csv_path = Path(csv_path)
    meta_path = csv_path.with_suffix(".meta.json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    cols = dataset.columns
    n = dataset.n_rows
    with open(csv_path, "w", newline="\n") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for i in range(n):
            fh.write(",".join(_format_value(name, cols[name][i]) for name in COLUMNS) + "\n")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "variant": dataset.variant,
        "mode": dataset.mode,
        "split": {str(pid): label for pid, label in sorted(dataset.split.items())},
        "norm": dataset.norm.to_dict(),
        "meta": dataset.meta,
    }
    with open(meta_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, meta_path


def load_dataset(csv_path: str | Path) -> Dataset:
    csv_path = Path(csv_path)
    meta_path = csv_path.with_suffix(".meta.json")
    if not csv_path.exists() or not meta_path.exists():
        raise FileNotFoundError(f"dataset files not found: {csv_path}, {meta_path}")
    with open(meta_path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"unsupported dataset schema {doc.get('schema_version')!r}")
    raw = np.genfromtxt(csv_path, delimiter=",", names=True, dtype=np.float64)
    columns = {}
    for name in COLUMNS:
        arr = np.atleast_1d(raw[name])
        columns[name] = arr.astype(np.int64) if name in INT_COLUMNS else arr
    return Dataset(
        columns=columns,
        split={int(pid): label for pid, label in doc["split"].items()},
        norm=NormScales.from_dict(doc["norm"]),
        variant=doc["variant"],
        mode=doc["mode"],
        meta=doc["meta"],
    )
