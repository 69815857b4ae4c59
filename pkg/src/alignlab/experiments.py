"""Replicated experiment harness: sweeps, ablations and sensitivity grids.

Seeds. Every random stream is ``derive_seed(base, *keys)`` (sha256 of the keys
XOR the base seed):

* data, split and alignment draw: ``("data", replicate)``
* noise weights: ``("noise", replicate)``
* network init and batching: ``("train", replicate)``
* random search: ``("tune", setting, arm)`` on replicate 0's data
  (``("tune", setting, arm, replicate)`` with per-seed tuning)

None of these depend on the arm or the grid axis, so all arms of a replicate
see the same data (common random numbers), and two grid points that describe
the same setting produce identical rows.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import AXES, Config, DataSettings, NoiseSettings, SearchSettings
from .data import DataError, Dataset, generate_synthetic, load_csv, normalize_minmax
from .data import select_alignment, split_dataset
from .noisegen import NoiseSpec, inject
from .pipeline import ABLATION_ARMS, ARMS, TrainConfig, arm_config, config_to_dict
from .pipeline import evaluate, random_search, train_arm

log = logging.getLogger(__name__)

SENSITIVITY_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
WEIGHT_AXES = ("alpha1", "gamma", "alpha2")
METRICS = ("auroc", "aueoc", "hm")


def derive_seed(base: int, *keys) -> int:
    digest = hashlib.sha256("/".join(repr(k) for k in keys).encode()).digest()
    return (int(base) ^ int.from_bytes(digest[:8], "big")) & (2**63 - 1)


@dataclass(frozen=True)
class Setting:
    """One grid point resolved to concrete data, noise and loss-weight values."""
    axis: str
    x: float
    majority_rate: float
    minority_rate: float
    alignment_fraction: float
    minority_proportion: float | None
    weights: tuple = ()  # (name, value) loss-weight overrides

    def key(self) -> tuple:
        # identity of the experiment itself, independent of how the grid named it
        return (self.majority_rate, self.minority_rate, self.alignment_fraction,
                self.minority_proportion, self.weights)

    def data_key(self) -> tuple:
        return self.key()[:4]


@dataclass(frozen=True)
class ExperimentPlan:
    arms: tuple = ARMS
    axis: str = "noise_rate"
    grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    replications: int = 10
    data: DataSettings = DataSettings()
    noise: NoiseSettings = NoiseSettings()
    train: TrainConfig = TrainConfig()
    search: SearchSettings = SearchSettings()

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for arm in self.arms:
            if arm not in ARMS + ABLATION_ARMS:
                raise ValueError(f"unknown arm {arm!r}")

    @property
    def base_seed(self) -> int:
        return self.train.seed

    @classmethod
    def from_config(cls, cfg: Config, **changes) -> "ExperimentPlan":
        e = cfg.experiment
        plan = cls(arms=tuple(e.arms), axis=e.axis, grid=tuple(e.grid),
                   replications=e.replications, data=cfg.data, noise=cfg.noise,
                   train=cfg.train, search=cfg.search)
        return replace(plan, **changes)

    def with_(self, **changes) -> "ExperimentPlan":
        return replace(self, **changes)


@dataclass(frozen=True)
class RunRow:
    axis: str
    x: float
    arm: str
    replicate: int
    majority_rate: float
    minority_rate: float
    alignment_fraction: float
    minority_proportion: float | None
    data_seed: int
    train_seed: int
    auroc: float
    aueoc: float
    hm: float
    val_hm: float
    best_epoch: int

    def sort_key(self):
        return (self.axis, self.x, self.arm, self.replicate)


@dataclass
class RunResult:
    name: str
    plan: ExperimentPlan
    rows: list
    configs: dict = field(default_factory=dict)  # "axis|x|arm" -> tuned config
    skipped: list = field(default_factory=list)  # (axis, x, reason)

    def aggregate(self) -> list[dict]:
        return aggregate(self.rows)

    def mean_hm(self, arm: str, x: float | None = None, axis: str | None = None) -> float:
        vals = [r.hm for r in self.rows if r.arm == arm and (x is None or r.x == x)
                and (axis is None or r.axis == axis)]
        if not vals:
            raise KeyError(f"no rows for arm={arm!r} x={x!r} axis={axis!r}")
        return float(np.mean(vals))


def aggregate(rows) -> list[dict]:
    """Mean and sample SD (ddof=1; 0 for a single replicate) per (axis, x, arm)."""
    groups: dict[tuple, list] = {}
    for r in sorted(rows, key=RunRow.sort_key):
        groups.setdefault((r.axis, r.x, r.arm), []).append(r)
    out = []
    for (axis, x, arm), rs in groups.items():
        entry = {"axis": axis, "x": x, "arm": arm, "n": len(rs)}
        for m in METRICS:
            v = np.array([getattr(r, m) for r in rs], dtype=np.float64)
            entry[f"{m}_mean"] = float(v.mean())
            entry[f"{m}_sd"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append(entry)
    return out


# -- grid resolution ------------------------------------------------------------

def resolve_grid(plan: ExperimentPlan) -> tuple[list[Setting], list[tuple]]:
    """Map grid values to settings; infeasible points come back as (axis, x, reason)."""
    nz, d = plan.noise, plan.data
    base = dict(majority_rate=nz.majority_rate, minority_rate=nz.minority_rate,
                alignment_fraction=d.alignment_fraction,
                minority_proportion=d.minority_proportion)
    settings, skipped = [], []
    for x in plan.grid:
        x = float(x)
        s = dict(base)
        if plan.axis == "noise_rate":
            s.update(majority_rate=x, minority_rate=_clean_float(x + nz.disparity))
        elif plan.axis == "disparity":
            s.update(minority_rate=_clean_float(nz.majority_rate + x))
        elif plan.axis == "alignment_size":
            s.update(alignment_fraction=x)
        elif plan.axis == "alignment_bias":
            s.update(minority_proportion=x)
        else:
            w = {k: float(getattr(plan.train, k)) for k in WEIGHT_AXES}
            w[plan.axis] = x
            s["weights"] = tuple(sorted(w.items()))
        reason = _infeasible(s)
        if reason:
            log.warning("skipping %s=%g: %s", plan.axis, x, reason)
            skipped.append((plan.axis, x, reason))
            continue
        settings.append(Setting(plan.axis, x, **s))
    return settings, skipped


def _clean_float(v: float) -> float:
    # 0.1 + 0.2 -> 0.3 so equal settings compare and hash equal
    return float(round(v, 12))


def _infeasible(s: dict) -> str | None:
    for key in ("majority_rate", "minority_rate"):
        if not 0.0 <= s[key] <= 1.0:
            return f"{key} {s[key]:g} is outside [0, 1]"
    if not 0.0 < s["alignment_fraction"] < 1.0:
        return f"alignment fraction {s['alignment_fraction']:g} is outside (0, 1)"
    mp = s["minority_proportion"]
    if mp is not None and not 0.0 <= mp <= 1.0:
        return f"minority proportion {mp:g} is outside [0, 1]"
    return None


# -- data ---------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _load_source(path: str) -> Dataset:
    return load_csv(path)


def prepare_clean(plan: ExperimentPlan, alignment_fraction: float,
                  minority_proportion: float | None, replicate: int) -> Dataset:
    """Generate (or load), split and select alignment rows; labels stay clean."""
    rng = np.random.default_rng(derive_seed(plan.base_seed, "data", replicate))
    if plan.data.source == "synthetic":
        data = generate_synthetic(plan.data.n, plan.data.d, rng)
    else:
        src = _load_source(str(plan.data.source))
        data = Dataset(src.X, src.y_true, src.y_true, src.group, np.full(src.n, "train"))
    data = split_dataset(data, plan.data.test_fraction, rng)
    if plan.data.source != "synthetic":
        data = normalize_minmax(data)
    return select_alignment(data, alignment_fraction, minority_proportion, rng)


def noise_spec(plan: ExperimentPlan, rates: tuple, replicate: int) -> NoiseSpec:
    return NoiseSpec(tuple(rates), plan.noise.mode, plan.noise.sigma_w,
                     derive_seed(plan.base_seed, "noise", replicate), plan.noise.include_test)


def build_dataset(plan: ExperimentPlan, setting: Setting, replicate: int) -> Dataset:
    """Clean preparation followed by noise injection at the setting's rates."""
    data = prepare_clean(plan, setting.alignment_fraction, setting.minority_proportion, replicate)
    rates = (setting.majority_rate, setting.minority_rate)
    return inject(data, noise_spec(plan, rates, replicate))[0]


# -- jobs ---------------------------------------------------------------------------

def _train_seed(plan: ExperimentPlan, replicate: int) -> int:
    return derive_seed(plan.base_seed, "train", replicate)


def _tuned_arm(arm: str) -> str:
    # ablation arms reuse the full method's tuned configuration
    return "proposed" if arm in ABLATION_ARMS else arm


def _search_space(plan: ExperimentPlan) -> dict:
    if plan.axis in WEIGHT_AXES:
        # the weights are the swept quantities; only the optimizer is tuned
        return {k: v for k, v in plan.search.space.items() if k not in WEIGHT_AXES}
    return dict(plan.search.space)


def _base_config(plan: ExperimentPlan, setting: Setting, replicate: int) -> TrainConfig:
    return plan.train.with_(seed=_train_seed(plan, replicate))


def tune(plan: ExperimentPlan, setting: Setting, arm: str, replicate: int = 0,
         data: Dataset | None = None) -> TrainConfig:
    """Random search for ``arm`` at ``setting`` on one replicate's data."""
    data = data if data is not None else build_dataset(plan, setting, replicate)
    keys = ("tune", setting.data_key(), arm) + ((replicate,) if plan.search.per_seed else ())
    rng = np.random.default_rng(derive_seed(plan.base_seed, *keys))
    best, _, _ = random_search(data, arm, _search_space(plan), plan.search.budget, rng,
                               _base_config(plan, setting, replicate))
    return best


def _final_config(plan, setting, arm, replicate, tuned) -> TrainConfig:
    cfg = tuned if tuned is not None else plan.train
    cfg = cfg.with_(seed=_train_seed(plan, replicate), **dict(setting.weights))
    return arm_config(arm, cfg) if arm in ABLATION_ARMS else cfg


def _replicate_job(args) -> list[RunRow]:
    plan, setting, replicate, arms, tuned = args
    data = build_dataset(plan, setting, replicate)
    rows = []
    for arm in arms:
        t = tuned.get(_tuned_arm(arm))
        if plan.search.tune and plan.search.per_seed:
            t = tune(plan, setting, _tuned_arm(arm), replicate, data)
        cfg = _final_config(plan, setting, arm, replicate, t)
        out = train_arm(arm, data, cfg)
        m = evaluate(out.model, data)
        rows.append(RunRow(setting.axis, setting.x, arm, replicate, setting.majority_rate,
                           setting.minority_rate, setting.alignment_fraction,
                           setting.minority_proportion,
                           derive_seed(plan.base_seed, "data", replicate), cfg.seed,
                           m["auroc"], m["aueoc"], m["hm"], out.best_val_hm, out.best_epoch))
    return rows


def _tune_job(args) -> TrainConfig:
    plan, setting, arm = args
    return tune(plan, setting, arm)


def _map(fn, jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


def _run(plan: ExperimentPlan, name: str, settings: list[Setting], skipped: list,
         n_jobs: int = 1) -> RunResult:
    # settings that only differ in naming (e.g. the shared 1,1,1 point) run once
    unique: dict[tuple, Setting] = {}
    for s in settings:
        unique.setdefault(s.key(), s)

    tuned: dict[tuple, dict] = {k: {} for k in unique}
    if plan.search.tune and not plan.search.per_seed:
        tune_arms = sorted({_tuned_arm(a) for a in plan.arms})
        # weight axes tune the optimizer once at the base setting, then sweep the weights
        at = {k: replace(s, weights=()) if plan.axis in WEIGHT_AXES else s
              for k, s in unique.items()}
        targets = {t.key(): t for t in at.values()}
        jobs = [(plan, t, a) for t in targets.values() for a in tune_arms]
        found = {(j[1].key(), j[2]): c for j, c in zip(jobs, _map(_tune_job, jobs, n_jobs))}
        for k in unique:
            tuned[k] = {a: found[(at[k].key(), a)] for a in tune_arms}

    live = {}
    for k, s in unique.items():
        try:
            build_dataset(plan, s, 0)
        except DataError as exc:
            log.warning("skipping %s=%g: %s", s.axis, s.x, exc)
            skipped.append((s.axis, s.x, str(exc)))
            continue
        live[k] = s
    jobs = [(plan, s, r, tuple(plan.arms), tuned[k])
            for k, s in live.items() for r in range(plan.replications)]
    by_key: dict[tuple, list] = {}
    for job, rows in zip(jobs, _map(_replicate_job, jobs, n_jobs)):
        by_key.setdefault(job[1].key(), []).extend(rows)

    rows, configs = [], {}
    for s in settings:
        if s.key() not in live:
            continue
        rows.extend(replace(r, axis=s.axis, x=s.x) for r in by_key[s.key()])
        for arm, c in tuned[s.key()].items():
            configs[f"{s.axis}|{s.x!r}|{arm}"] = config_to_dict(c)
    rows.sort(key=RunRow.sort_key)
    return RunResult(name, plan, rows, configs, sorted(skipped))


def run_sweep(plan: ExperimentPlan, n_jobs: int = 1) -> RunResult:
    settings, skipped = resolve_grid(plan)
    return _run(plan, "sweep", settings, skipped, n_jobs)


def run_ablation(plan: ExperimentPlan, n_jobs: int = 1) -> RunResult:
    """All five ablation arms at the plan's noise setting (no grid)."""
    plan = plan.with_(arms=ABLATION_ARMS)
    nz, d = plan.noise, plan.data
    setting = Setting("ablation", 0.0, nz.majority_rate, nz.minority_rate,
                      d.alignment_fraction, d.minority_proportion)
    return _run(plan, "ablation", [setting], [], n_jobs)


def run_sensitivity(plan: ExperimentPlan, grid=SENSITIVITY_GRID, n_jobs: int = 1) -> RunResult:
    """Sweep each loss weight over ``grid`` with the other two fixed at 1."""
    train = plan.train.with_(alpha1=1.0, gamma=1.0, alpha2=1.0)
    settings, skipped = [], []
    for axis in WEIGHT_AXES:
        sub = plan.with_(arms=("proposed",), axis=axis, grid=tuple(grid), train=train)
        s, k = resolve_grid(sub)
        settings += s
        skipped += k
    return _run(plan.with_(arms=("proposed",), axis="alpha1", grid=tuple(grid), train=train),
                "sensitivity", settings, skipped, n_jobs)


# -- output ---------------------------------------------------------------------------

def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_result(result: RunResult, out_dir) -> list[Path]:
    """Write ``<name>_runs.csv``, ``<name>_aggregate.json`` and one
    ``<name>_<axis>_plot.csv`` (x, arm, mean HM, SD HM) per axis."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    cols = [f.name for f in fields(RunRow)]
    runs = out / f"{result.name}_runs.csv"
    with open(runs, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in sorted(result.rows, key=RunRow.sort_key):
            w.writerow([_num(getattr(r, c)) for c in cols])
    written.append(runs)

    agg = result.aggregate()
    plan = asdict(result.plan)
    payload = {
        "name": result.name,
        "base_seed": result.plan.base_seed,
        "replications": result.plan.replications,
        "plan": plan,
        "aggregate": agg,
        "tuned_configs": result.configs,
        "skipped": [{"axis": a, "x": x, "reason": why} for a, x, why in result.skipped],
    }
    agg_path = out / f"{result.name}_aggregate.json"
    agg_path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")
    written.append(agg_path)

    for axis in sorted({e["axis"] for e in agg}):
        path = out / f"{result.name}_{axis}_plot.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "arm", "mean", "sd"])
            for e in agg:
                if e["axis"] == axis:
                    w.writerow([_num(e["x"]), e["arm"], _num(e["hm_mean"]), _num(e["hm_sd"])])
        written.append(path)
    return written


def read_runs_csv(path) -> list[RunRow]:
    """Parse a ``*_runs.csv`` back into rows (for re-aggregation)."""
    types = {f.name: f.type for f in fields(RunRow)}
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k, v in rec.items():
                t = types[k]
                if t == "str":
                    kw[k] = v
                elif t == "int":
                    kw[k] = int(v)
                elif v == "":
                    kw[k] = None
                else:
                    kw[k] = float(v)
            rows.append(RunRow(**kw))
    return rows
