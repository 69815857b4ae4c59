"""Acceptance checks, one per criterion.

Each check returns ``(passed, detail)``; the pytest wrappers record a
PASS/FAIL line (printed in the terminal summary) and then assert. Run as a
script to print just the lines::

    python tests/test_acceptance.py            # everything (~15 min)
    python tests/test_acceptance.py 1 2 3 4 8  # fast subset
"""

from __future__ import annotations

import itertools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from alignlab.config import DataSettings, NoiseSettings, SearchSettings
from alignlab.data import generate_synthetic, round_half_up, select_alignment, split_dataset
from alignlab.experiments import ExperimentPlan, run_ablation, run_sweep
from alignlab.metrics import ScoredSet, aueoc, auroc
from alignlab.nn import backward, forward_cached, he_init
from alignlab.noisegen import NoiseSpec, inject, mislabel_scores
from alignlab.objective import (GroupRates, loss_phi, loss_phi_grads, loss_theta,
                                loss_theta_grads, loss_theta_prime, loss_theta_prime_grads)
from alignlab.pipeline import ABLATION_ARMS

RESULTS: list[str] = []

# tolerances and sizes
FD_STEP = 1e-4
FD_MAX_REL_ERR = 1e-4
FD_RUNTIME_S = 10.0
IDENTITY_TOL = 1e-9
IDENTITY_RUNTIME_S = 1.0
AUEOC_IDENTICAL_TOL = 1e-9
AUEOC_DENSE_TOL = 1e-3
AUEOC_DENSE_POINTS = 10_000
ORDERING_MARGIN = 0.02
E2E_RUNTIME_S = 15 * 60
SEEDS = 10


def record(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    RESULTS.append(line)
    print(line, flush=True)


# -- 1. gradient correctness ------------------------------------------------------

def _max_rel_err(net, X, loss, out_grads):
    probs, acts = forward_cached(net, X)
    analytic = backward(net, X, out_grads(probs), reduce="sum", cache=(probs, acts))
    worst = 0.0
    for p, a in zip(net.params(), analytic):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + FD_STEP
            up = loss(forward_cached(net, X)[0])
            p[idx] = old - FD_STEP
            down = loss(forward_cached(net, X)[0])
            p[idx] = old
            num = (up - down) / (2 * FD_STEP)
            scale = max(abs(a[idx]), abs(num))
            if scale > 0:
                worst = max(worst, abs(a[idx] - num) / scale)
    return worst


KINK_MARGIN = 1e-2  # central differences are meaningless across a ReLU kink


def _kink_distance(net, X):
    a, closest = np.asarray(X, dtype=float), np.inf
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        closest = min(closest, float(np.abs(z).min()))
        a = np.maximum(z, 0.0)
    return closest


def check_gradients():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(5):
        d = int(rng.integers(2, 9))
        h1, h2 = (int(v) for v in rng.integers(2, 7, 2))
        n = 12
        y, g = rng.integers(0, 2, n), rng.integers(0, 2, n)
        other = rng.uniform(0.05, 0.95, n)
        rates = GroupRates((0, 1), (0.2, 0.4))
        theta = he_init([d, h1, h2, 1], rng)
        phi = he_init([d + 1, h1, h2, 1], rng)
        for net in (theta, phi):
            for b in net.biases:  # off the ReLU kink
                b[...] = rng.normal(0.0, 0.5, b.shape)
        while True:
            X = rng.normal(size=(n, d))
            Z = np.column_stack([X, y])
            if min(_kink_distance(theta, X), _kink_distance(phi, Z)) > KINK_MARGIN:
                break
        # class network: L_theta + L'_theta with confidences fixed
        worst = max(worst, _max_rel_err(
            theta, X,
            lambda p: loss_theta(p, y) + loss_theta_prime(p, y, other, g, rates),
            lambda p: loss_theta_grads(p, y) + loss_theta_prime_grads(p, y, other, g, rates)[0]))
        # confidence network: L_phi + L'_theta with class predictions fixed
        worst = max(worst, _max_rel_err(
            phi, Z,
            lambda b: loss_phi(b, y) + loss_theta_prime(other, y, b, g, rates),
            lambda b: loss_phi_grads(b, y) + loss_theta_prime_grads(other, y, b, g, rates)[1]))
    elapsed = time.perf_counter() - start
    ok = worst < FD_MAX_REL_ERR and elapsed < FD_RUNTIME_S
    return ok, f"max rel err {worst:.2e} (< {FD_MAX_REL_ERR:g}), {elapsed:.2f}s (< {FD_RUNTIME_S:g}s)"


# -- 2. expectation identity -----------------------------------------------------------

def check_expectation_identity():
    rng = np.random.default_rng(2)
    n = 8
    groups = [0, 0, 0, 0, 0, 1, 1, 1]
    p_group = {0: 0.8, 1: 0.6}
    p = [p_group[k] for k in groups]
    yhat = rng.uniform(0.02, 0.98, n)
    y = rng.integers(0, 2, n)
    # clean rate 1 - r_k equals the group's correctness probability
    rates = GroupRates((0, 1), (1 - p_group[0], 1 - p_group[1]))
    start = time.perf_counter()
    expect = 0.0
    for kept in itertools.product((True, False), repeat=n):
        prob = math.prod(pi if k else 1 - pi for pi, k in zip(p, kept))
        y_obs = np.where(kept, y, 1 - y)
        beta = np.array(kept, dtype=float)  # confidence = 1[observed label is correct]
        expect += prob * loss_theta_prime(yhat, y_obs, beta, groups, rates)
    elapsed = time.perf_counter() - start
    gap = abs(expect - loss_theta(yhat, y))
    ok = gap < IDENTITY_TOL and elapsed < IDENTITY_RUNTIME_S
    return ok, f"|E[L'] - clean CE| = {gap:.1e} (< {IDENTITY_TOL:g}), {elapsed:.3f}s (< {IDENTITY_RUNTIME_S:g}s)"


# -- 3. metric oracles -------------------------------------------------------------------

def _pairwise_auroc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (pos.size * neg.size)


def _dense_aueoc(ss):
    taus = (np.arange(AUEOC_DENSE_POINTS) + 0.5) / AUEOC_DENSE_POINTS
    a, b = np.unique(ss.groups)
    terms = []
    for cls in (1, 0):
        sa = ss.scores[(ss.groups == a) & (ss.labels == cls)]
        sb = ss.scores[(ss.groups == b) & (ss.labels == cls)]
        ra = (sa[None, :] >= taus[:, None]).mean(axis=1)
        rb = (sb[None, :] >= taus[:, None]).mean(axis=1)
        terms.append(np.abs(ra - rb))
    return float(np.mean(1.0 - (terms[0] + terms[1]) / 2))


def _two_group_set(rng, n, decimals=3):
    s = rng.uniform(size=n)
    if decimals is not None:
        s = np.round(s, decimals)
    y, g = rng.integers(0, 2, n), rng.integers(0, 2, n)
    y[:4], g[:4] = [0, 1, 0, 1], [0, 0, 1, 1]
    return ScoredSet(s, y, g)


def check_metric_oracles():
    rng = np.random.default_rng(3)
    auroc_exact = 0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        s = rng.choice([0.0, 0.2, 0.5, 0.7, 1.0], n) if rng.random() < 0.5 else rng.uniform(size=n)
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        auroc_exact += auroc(s, y) == _pairwise_auroc(s, y)
    ident_err = 0.0
    for _ in range(20):
        base = _two_group_set(rng, 20)
        m = base.groups == 0
        twin = ScoredSet(np.r_[base.scores[m], base.scores[m]],
                         np.r_[base.labels[m], base.labels[m]],
                         np.r_[np.zeros(m.sum()), np.ones(m.sum())])
        ident_err = max(ident_err, abs(aueoc(twin) - 1.0))
    dense_err = max(abs(aueoc(ss) - _dense_aueoc(ss))
                    for ss in (_two_group_set(rng, int(rng.integers(6, 41)), None) for _ in range(20)))
    ok = auroc_exact == 100 and ident_err <= AUEOC_IDENTICAL_TOL and dense_err < AUEOC_DENSE_TOL
    return ok, (f"auroc exact {auroc_exact}/100; identical-group |AUEOC-1| {ident_err:.1e}; "
                f"dense-grid max err {dense_err:.1e} (< {AUEOC_DENSE_TOL:g})")


# -- 4. noise injection exactness -----------------------------------------------------------

def check_noise_exactness():
    rng = np.random.default_rng(4)
    data = generate_synthetic(2000, 30, rng)
    data = select_alignment(split_dataset(data, 0.2, rng), 0.1, None, rng)
    align = data.mask("alignment_train", "alignment_val")
    problems = []
    for rate in (0.0, 0.1, 0.3, 0.7, 1.0):
        for mode in ("feature_dependent", "uniform_random"):
            spec = NoiseSpec((rate, rate), mode, seed=17)
            out, manifest = inject(data, spec)
            if (out.y_obs[align] != out.y_true[align]).any():
                problems.append(f"{mode} {rate}: alignment row flipped")
            for g in (0, 1):
                pool = np.flatnonzero(data.mask("train") & (data.group == g))
                k = round_half_up(rate * pool.size)
                if manifest.flipped[pool].sum() != k:
                    problems.append(f"{mode} {rate} group {g}: count")
                if mode == "feature_dependent":
                    z = mislabel_scores(data, spec)
                    oracle = sorted(pool.tolist(), key=lambda i: (-z[i], i))[:k]
                    if set(np.flatnonzero(manifest.flipped & (data.group == g))) != set(oracle):
                        problems.append(f"{mode} {rate} group {g}: not top-k")
    return not problems, "; ".join(problems) or "counts exact, alignment untouched, top-k by z_m"


# -- 5-7. end-to-end ------------------------------------------------------------------------

def e2e_plan(**changes) -> ExperimentPlan:
    plan = ExperimentPlan(
        arms=("proposed", "standard", "clean"), axis="noise_rate", grid=(0.2,),
        replications=SEEDS, data=DataSettings(n=5000),
        noise=NoiseSettings(majority_rate=0.2, minority_rate=0.4),
        search=SearchSettings(tune=True, budget=20))
    return plan.with_(**changes)


def check_ordering():
    start = time.perf_counter()
    res = run_sweep(e2e_plan())
    elapsed = time.perf_counter() - start
    c, p, s = (res.mean_hm(a) for a in ("clean", "proposed", "standard"))
    ok = c >= p >= s and p - s >= ORDERING_MARGIN and elapsed < E2E_RUNTIME_S
    return ok, (f"HM clean {c:.4f}, proposed {p:.4f}, standard {s:.4f}; "
                f"proposed - standard {p - s:+.4f} (need >= {ORDERING_MARGIN}); {elapsed:.0f}s")


def check_robustness_trend():
    res = run_sweep(e2e_plan(arms=("proposed", "standard"), grid=(0.1, 0.5)))
    drop = {a: res.mean_hm(a, 0.1) - res.mean_hm(a, 0.5) for a in ("proposed", "standard")}
    ok = drop["standard"] > drop["proposed"]
    return ok, (f"HM drop 10/30% -> 50/70%: standard {drop['standard']:+.4f}, "
                f"proposed {drop['proposed']:+.4f}")


def check_ablation():
    res = run_ablation(e2e_plan())
    means = {a: res.mean_hm(a) for a in ABLATION_ARMS}
    lowest, highest = min(means, key=means.get), max(means, key=means.get)
    ok = lowest == "step1_only" and highest == "full"
    return ok, ", ".join(f"{a} {v:.4f}" for a, v in means.items()) + \
        f"; lowest {lowest}, highest {highest}"


# -- 8. determinism -----------------------------------------------------------------------

DETERMINISM_CONFIG = """
[data]
n = 500
[train]
max_epochs = 30
[search]
tune = true
budget = 2
[experiment]
arms = proposed, standard, clean
grid = 0.1, 0.3
replications = 2
"""


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "alignlab.cli", *map(str, args)],
                          capture_output=True, text=True)


def check_determinism(tmp: Path):
    cfg = tmp / "det.ini"
    cfg.write_text(DETERMINISM_CONFIG)
    runs = {
        "sweep": lambda out, jobs: _cli("sweep", "--config", cfg, "--out-dir", out, "--jobs", jobs),
        "train": lambda out, jobs: _cli("train", "--config", cfg, "--out-dir", out),
    }
    mismatched, compared = [], 0
    for name, fn in runs.items():
        dirs = []
        for i, jobs in enumerate((1, 1, 2)):
            out = tmp / f"{name}{i}"
            proc = fn(out, jobs)
            if proc.returncode != 0:
                return False, f"{name} exited {proc.returncode}: {proc.stderr.strip()[-200:]}"
            dirs.append(out)
        for f in sorted(dirs[0].iterdir()):
            for other in dirs[1:]:
                compared += 1
                if f.read_bytes() != (other / f.name).read_bytes():
                    mismatched.append(f"{other.name}/{f.name}")
    return not mismatched, (f"{compared} file comparisons, mismatches: "
                            f"{', '.join(mismatched) or 'none'}")


# -- pytest wrappers ------------------------------------------------------------------------

def _run(number, title, check, *args):
    ok, detail = check(*args)
    record(number, title, ok, detail)
    assert ok, detail


def test_criterion_1_gradient_correctness():
    _run(1, "analytic gradients match central differences", check_gradients)


def test_criterion_2_expectation_identity():
    _run(2, "expected confidence-weighted loss equals clean cross entropy",
         check_expectation_identity)


def test_criterion_3_metric_oracles():
    _run(3, "AUROC/AUEOC match brute-force oracles", check_metric_oracles)


def test_criterion_4_noise_exactness():
    _run(4, "noise injection counts and top-k membership", check_noise_exactness)


@pytest.mark.slow
def test_criterion_5_end_to_end_ordering():
    _run(5, "clean >= proposed >= standard at 20/40% noise", check_ordering)


@pytest.mark.slow
def test_criterion_6_robustness_trend():
    _run(6, "standard degrades more than proposed as noise grows", check_robustness_trend)


@pytest.mark.slow
def test_criterion_7_ablation_ordering():
    _run(7, "stage-one-only lowest and full method highest", check_ablation)


def test_criterion_8_determinism(tmp_path):
    _run(8, "repeated sweep/train invocations are byte-identical", check_determinism, tmp_path)


def test_criterion_9_excluded_claims():
    line = ("[N/A ] criterion 9: results on restricted or external datasets are not "
            "reproduced; criteria 1-8 stand in for them")
    RESULTS.append(line)
    print(line)
    pytest.skip("restricted-data results are out of scope")


CHECKS = {
    1: ("analytic gradients match central differences", check_gradients),
    2: ("expected confidence-weighted loss equals clean cross entropy", check_expectation_identity),
    3: ("AUROC/AUEOC match brute-force oracles", check_metric_oracles),
    4: ("noise injection counts and top-k membership", check_noise_exactness),
    5: ("clean >= proposed >= standard at 20/40% noise", check_ordering),
    6: ("standard degrades more than proposed as noise grows", check_robustness_trend),
    7: ("stage-one-only lowest and full method highest", check_ablation),
    8: ("repeated sweep/train invocations are byte-identical", check_determinism),
}


if __name__ == "__main__":
    import tempfile

    sys.path.insert(0, str(Path(__file__).parent))
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CHECKS)
    failed = 0
    for n in wanted:
        title, fn = CHECKS[n]
        with tempfile.TemporaryDirectory() as tmp:
            ok, detail = fn(Path(tmp)) if n == 8 else fn()
        record(n, title, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)
