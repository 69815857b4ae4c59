"""Five-arm ablation of the loss terms at the configured noise rates."""

from _harness import ScriptConfig, parse, report, timed

from alignlab.experiments import run_ablation

DEFAULTS = ScriptConfig(name="ablation", axis="noise_rate", grid=(0.2,))

if __name__ == "__main__":
    cfg, plan = parse(DEFAULTS, __doc__)
    result, elapsed = timed(run_ablation, plan, cfg.jobs)
    report(result, cfg, elapsed)
