"""``alignlab`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (non-finite loss or an undefined metric).

Outputs go to ``--out-dir``, else ``$ALIGNLAB_OUT``, else ``./out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import AXES, Config, ConfigError, load_config
from .data import DataError, Dataset, load_csv, write_csv
from .experiments import (ExperimentPlan, Setting, build_dataset, derive_seed, noise_spec,
                          prepare_clean, run_ablation, run_sensitivity, run_sweep, write_result)
from .metrics import ScoredSet, UndefinedMetricError, write_eo_curve_csv, write_roc_csv
from .model import load_checkpoint, save_checkpoint
from .noisegen import inject
from .pipeline import (ABLATION_ARMS, ARMS, NumericError, config_to_dict, evaluate,
                       random_search, train_arm, write_history_csv)

log = logging.getLogger("alignlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *, arm=False, data=False):
    p.add_argument("--config", type=Path, help="INI config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="base seed; overrides [train] seed")
    p.add_argument("--out-dir", type=Path, help="output directory (default $ALIGNLAB_OUT or ./out)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    if arm:
        p.add_argument("--arm", help="arm to run; for sweeps a comma-separated list")
    if data:
        p.add_argument("--data", type=Path,
                       help="dataset CSV; generated from the config when omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alignlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"alignlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate/split a dataset and mark alignment rows")
    _common(p)
    p = sub.add_parser("inject-noise", help="inject label noise into a dataset CSV")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p = sub.add_parser("train", help="train one arm and evaluate it on the test rows")
    _common(p, arm=True, data=True)
    p = sub.add_parser("tune", help="random search for one arm")
    _common(p, arm=True, data=True)
    p = sub.add_parser("sweep", help="replicated sweep along [experiment] axis")
    _common(p, arm=True)
    p.add_argument("--axis", choices=AXES, help="overrides [experiment] axis")
    p = sub.add_parser("ablate", help="five-arm ablation at the configured noise rates")
    _common(p)
    p = sub.add_parser("sensitivity", help="loss-weight sensitivity grids")
    _common(p)
    p = sub.add_parser("eval", help="evaluate a saved model on a dataset CSV")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--role", default="test", help="rows to evaluate (default: test)")
    return parser


def _out_dir(args) -> Path:
    out = args.out_dir or Path(os.environ.get("ALIGNLAB_OUT") or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg = replace(cfg, train=cfg.train.with_(seed=args.seed))
    return cfg


def _plan(args, cfg: Config) -> ExperimentPlan:
    return ExperimentPlan.from_config(cfg)


def _arm(args, default="proposed") -> str:
    arm = args.arm or default
    if arm not in ARMS + ABLATION_ARMS:
        raise UsageError(f"unknown arm {arm!r}; expected one of {', '.join(ARMS + ABLATION_ARMS)}")
    return arm


def _dataset(args, plan: ExperimentPlan) -> Dataset:
    if args.data:
        return load_csv(args.data)
    nz, d = plan.noise, plan.data
    return build_dataset(plan, Setting("train", 0.0, nz.majority_rate, nz.minority_rate,
                                       d.alignment_fraction, d.minority_proportion), 0)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(args, cfg, out):
    plan = _plan(args, cfg)
    data = prepare_clean(plan, cfg.data.alignment_fraction, cfg.data.minority_proportion, 0)
    write_csv(data, out / "dataset.csv")
    print(out / "dataset.csv")


def cmd_inject_noise(args, cfg, out):
    data = load_csv(args.data)
    n_groups = int(data.group.max()) + 1
    rates = (cfg.noise.majority_rate, cfg.noise.minority_rate)
    if n_groups > 2:
        raise DataError(f"noise config covers two groups, data has {n_groups}")
    noisy, manifest = inject(data, noise_spec(_plan(args, cfg), rates[:n_groups], 0))
    write_csv(noisy, out / "noisy.csv")
    manifest.write_csv(noisy, out / "noise_manifest.csv")
    print(out / "noisy.csv")


def _tuned_config(args, cfg: Config, arm: str, data: Dataset):
    base = cfg.train
    if not cfg.search.tune:
        return base, []
    rng = np.random.default_rng(derive_seed(base.seed, "tune", arm))
    best, _, trials = random_search(data, arm if arm in ARMS else "proposed",
                                    cfg.search.space, cfg.search.budget, rng, base)
    return best.with_(seed=base.seed), trials


def _write_trials(trials, path: Path) -> None:
    keys = ("learning_rate", "l2", "alpha1", "gamma", "alpha2", "seed")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", *keys, "val_hm", "best_epoch"])
        for t in trials:
            w.writerow([t.index, *(repr(getattr(t.config, k)) for k in keys),
                        repr(t.val_hm), t.best_epoch])


def cmd_train(args, cfg, out):
    arm = _arm(args)
    data = _dataset(args, _plan(args, cfg))
    tcfg, trials = _tuned_config(args, cfg, arm, data)
    outcome = train_arm(arm, data, tcfg)
    save_checkpoint(outcome.model, out / "model.json")
    write_history_csv(outcome, out / "history.csv")
    if trials:
        _write_trials(trials, out / "trials.csv")
    metrics = {"arm": arm, "config": config_to_dict(tcfg), "best_epoch": outcome.best_epoch,
               "val_hm": outcome.best_val_hm, "test": evaluate(outcome.model, data)}
    _write_json(out / "metrics.json", metrics)
    t = metrics["test"]
    print(f"{arm}: test AUROC {t['auroc']:.4f}  AUEOC {t['aueoc']:.4f}  HM {t['hm']:.4f}")


def cmd_tune(args, cfg, out):
    arm = _arm(args)
    data = _dataset(args, _plan(args, cfg))
    cfg = replace(cfg, search=replace(cfg.search, tune=True))
    best, trials = _tuned_config(args, cfg, arm, data)
    _write_trials(trials, out / "trials.csv")
    _write_json(out / "best_config.json", config_to_dict(best))
    print(json.dumps(config_to_dict(best), sort_keys=True))


def _report(result, out):
    for path in write_result(result, out):
        print(path)


def cmd_sweep(args, cfg, out):
    plan = _plan(args, cfg)
    if args.arm:
        arms = tuple(a.strip() for a in args.arm.split(",") if a.strip())
        for a in arms:
            if a not in ARMS + ABLATION_ARMS:
                raise UsageError(f"unknown arm {a!r}")
        plan = plan.with_(arms=arms)
    if args.axis:
        plan = plan.with_(axis=args.axis)
    _report(run_sweep(plan, args.jobs), out)


def cmd_ablate(args, cfg, out):
    _report(run_ablation(_plan(args, cfg), args.jobs), out)


def cmd_sensitivity(args, cfg, out):
    _report(run_sensitivity(_plan(args, cfg), n_jobs=args.jobs), out)


def cmd_eval(args, cfg, out):
    try:
        model = load_checkpoint(args.model)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{args.model}: unreadable checkpoint ({exc})") from None
    data = load_csv(args.data)
    m = data.mask(args.role)
    if not m.any():
        raise DataError(f"{args.data}: no rows with role {args.role!r}")
    if data.d != model.n_features:
        raise DataError(f"model expects {model.n_features} features, data has {data.d}")
    result = evaluate(model, data, args.role)
    scores = model.predict_y(data.X[m])
    write_eo_curve_csv(ScoredSet(scores, data.y_true[m], data.group[m]), out / "eo_curve.csv")
    write_roc_csv(scores, data.y_true[m], out / "roc.csv")
    _write_json(out / "eval.json", {"role": args.role, **result})
    print(f"AUROC {result['auroc']:.4f}  AUEOC {result['aueoc']:.4f}  HM {result['hm']:.4f}")


COMMANDS = {
    "gen-data": cmd_gen_data, "inject-noise": cmd_inject_noise, "train": cmd_train,
    "tune": cmd_tune, "sweep": cmd_sweep, "ablate": cmd_ablate,
    "sensitivity": cmd_sensitivity, "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = _load(args)
        COMMANDS[args.command](args, cfg, _out_dir(args))
    except (UsageError, ConfigError) as exc:
        print(f"alignlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"alignlab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, UndefinedMetricError, FloatingPointError) as exc:
        print(f"alignlab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"alignlab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
