"""Shared plumbing for the experiment scripts: a dataclass config, flag parsing
and a summary table printed after the results are written."""

from __future__ import annotations

import argparse
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from alignlab.config import DataSettings, NoiseSettings, SearchSettings, load_config
from alignlab.experiments import ExperimentPlan, RunResult, write_result


@dataclass(frozen=True)
class ScriptConfig:
    name: str
    axis: str
    grid: tuple
    arms: tuple = ("proposed", "standard", "clean")
    replications: int = 10
    n: int = 5000
    majority_rate: float = 0.2
    minority_rate: float = 0.4
    tune: bool = True
    budget: int = 20
    seed: int = 123456789
    out_dir: Path = field(default=Path("results"))
    jobs: int = 1

    def plan(self, base: ExperimentPlan | None = None) -> ExperimentPlan:
        base = base or ExperimentPlan()
        return base.with_(
            arms=self.arms, axis=self.axis, grid=self.grid, replications=self.replications,
            data=replace(base.data, n=self.n),
            noise=replace(base.noise, majority_rate=self.majority_rate,
                          minority_rate=self.minority_rate),
            train=base.train.with_(seed=self.seed),
            search=replace(base.search, tune=self.tune, budget=self.budget),
        )


def parse(defaults: ScriptConfig, description: str) -> tuple[ScriptConfig, ExperimentPlan]:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path,
                   help="INI file whose [data]/[noise]/[train]/[search] sections seed the plan")
    p.add_argument("--replications", type=int, default=defaults.replications)
    p.add_argument("--n", type=int, default=defaults.n)
    p.add_argument("--budget", type=int, default=defaults.budget)
    p.add_argument("--no-tune", action="store_true", help="skip random search")
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--out-dir", type=Path, default=defaults.out_dir)
    p.add_argument("--jobs", type=int, default=defaults.jobs)
    p.add_argument("--quick", action="store_true",
                   help="2 replications, n=1000, budget 3: a smoke run")
    a = p.parse_args()
    cfg = replace(defaults, replications=a.replications, n=a.n, budget=a.budget,
                  tune=defaults.tune and not a.no_tune, seed=a.seed, out_dir=a.out_dir,
                  jobs=a.jobs)
    if a.quick:
        cfg = replace(cfg, replications=2, n=1000, budget=3)
    base = ExperimentPlan.from_config(load_config(a.config)) if a.config else None
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    return cfg, cfg.plan(base)


def report(result: RunResult, cfg: ScriptConfig, elapsed: float) -> None:
    result = replace(result, name=cfg.name)
    for path in write_result(result, cfg.out_dir):
        print(path)
    agg = result.aggregate()
    print(f"\n{result.name}: {len(result.rows)} runs in {elapsed:.0f}s")
    print(f"{'axis':<15}{'x':>8}  {'arm':<12} {'HM mean':>8} {'HM sd':>7} {'AUROC':>7} {'AUEOC':>7}")
    for row in agg:
        print(f"{row['axis']:<15}{row['x']:>8g}  {row['arm']:<12} {row['hm_mean']:>8.4f} {row['hm_sd']:>7.4f} "
              f"{row['auroc_mean']:>7.4f} {row['aueoc_mean']:>7.4f}")
    for skipped in result.skipped:
        print(f"skipped: {skipped}")


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
