"""Test HM as the gap between minority and majority noise rates widens."""

from _harness import ScriptConfig, parse, report, timed

from alignlab.experiments import run_sweep

DEFAULTS = ScriptConfig(name="disparity_sweep", axis="disparity", grid=(0.0, 0.1, 0.2, 0.3, 0.4))

if __name__ == "__main__":
    cfg, plan = parse(DEFAULTS, __doc__)
    result, elapsed = timed(run_sweep, plan, cfg.jobs)
    report(result, cfg, elapsed)
