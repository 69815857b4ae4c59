"""Test HM as the clean alignment set shrinks or grows."""

from _harness import ScriptConfig, parse, report, timed

from alignlab.experiments import run_sweep

DEFAULTS = ScriptConfig(name="alignment_size_sweep", axis="alignment_size", grid=(0.01, 0.03, 0.05, 0.1, 0.2))

if __name__ == "__main__":
    cfg, plan = parse(DEFAULTS, __doc__)
    result, elapsed = timed(run_sweep, plan, cfg.jobs)
    report(result, cfg, elapsed)
