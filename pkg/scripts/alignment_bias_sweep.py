"""Test HM as the minority share of the alignment set changes."""

from _harness import ScriptConfig, parse, report, timed

from alignlab.experiments import run_sweep

DEFAULTS = ScriptConfig(name="alignment_bias_sweep", axis="alignment_bias", grid=(0.0, 0.1, 0.2, 0.3, 0.5))

if __name__ == "__main__":
    cfg, plan = parse(DEFAULTS, __doc__)
    result, elapsed = timed(run_sweep, plan, cfg.jobs)
    report(result, cfg, elapsed)
