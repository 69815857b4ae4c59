"""Test HM as the majority noise rate grows with a fixed minority gap."""

from _harness import ScriptConfig, parse, report, timed

from alignlab.experiments import run_sweep

DEFAULTS = ScriptConfig(name="noise_rate_sweep", axis="noise_rate", grid=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6))

if __name__ == "__main__":
    cfg, plan = parse(DEFAULTS, __doc__)
    result, elapsed = timed(run_sweep, plan, cfg.jobs)
    report(result, cfg, elapsed)
