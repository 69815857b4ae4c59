"""Sweep each loss weight over 0.01..100 with the other two held at 1."""

from _harness import ScriptConfig, parse, report, timed

from alignlab.experiments import SENSITIVITY_GRID, run_sensitivity

DEFAULTS = ScriptConfig(name="sensitivity", axis="alpha1", grid=SENSITIVITY_GRID,
                        arms=("proposed",))

if __name__ == "__main__":
    cfg, plan = parse(DEFAULTS, __doc__)
    result, elapsed = timed(run_sensitivity, plan, n_jobs=cfg.jobs)
    report(result, cfg, elapsed)
