"""Per-group label-noise injection.

Feature-dependent mode draws ``w_m ~ N(0, sigma_w)^d`` once, scores every row
with ``z_m = sigmoid(x . w_m)``, and within each group flips the observed label
of the ``round(rate * count)`` flippable rows with the largest ``z_m`` (ties by
row index). Flippable rows are the ordinary training rows, plus the test rows
when ``include_test`` is set.

Alignment rows never get a noisy ``y_obs``. Their ``y_proxy`` is set by the
same rule the labeler applied to the flippable rows: in feature-dependent mode
an alignment row's proxy is flipped iff its ``z_m`` reaches the group's flip
threshold; in uniform mode a random ``round(rate * count)`` of the group's
alignment rows are flipped. This is what gives the alignment set rows whose
observed and true labels disagree.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import ALIGNMENT_ROLES, DataError, Dataset, round_half_up
from .nn import sigmoid

MODES = ("feature_dependent", "uniform_random")


@dataclass(frozen=True)
class NoiseSpec:
    rates: tuple  # target noise rate indexed by group id
    mode: str = "feature_dependent"
    sigma_w: float = 0.33
    seed: int = 0
    include_test: bool = False

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise DataError(f"noise rates must lie in [0, 1], got {rates}")
        if self.mode not in MODES:
            raise DataError(f"unknown noise mode {self.mode!r}; expected one of {MODES}")
        if self.sigma_w <= 0:
            raise DataError("sigma_w must be positive")
        object.__setattr__(self, "rates", rates)


@dataclass(frozen=True)
class NoiseManifest:
    z_m: np.ndarray  # NaN in uniform mode
    flipped: np.ndarray  # y_obs flipped
    proxy_flipped: np.ndarray  # y_proxy differs from y_true on an alignment row

    def write_csv(self, data: Dataset, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "group", "role", "z_m", "flipped", "proxy_flipped"])
            for i in range(data.n):
                z = "" if np.isnan(self.z_m[i]) else f"{self.z_m[i]:.12g}"
                w.writerow([i, int(data.group[i]), data.role[i], z,
                            int(self.flipped[i]), int(self.proxy_flipped[i])])


def flippable_mask(data: Dataset, include_test: bool = False) -> np.ndarray:
    return data.mask("train", "test") if include_test else data.mask("train")


def mislabel_scores(data: Dataset, spec: NoiseSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    w_m = rng.normal(0.0, spec.sigma_w, size=data.d)
    return sigmoid(data.X @ w_m)


def _check_rates(data: Dataset, spec: NoiseSpec):
    present = np.unique(data.group)
    if present.size and present.max() >= len(spec.rates):
        raise DataError(f"noise spec covers {len(spec.rates)} group(s) but data has "
                        f"group id {int(present.max())}")


def _apply(data: Dataset, flip: np.ndarray, proxy_flip: np.ndarray, spec: NoiseSpec,
           z: np.ndarray):
    y_obs = np.where(flip, 1 - data.y_obs, data.y_obs)
    align = data.mask(*ALIGNMENT_ROLES)
    y_proxy = np.where(align, np.where(proxy_flip, 1 - data.y_true, data.y_true), y_obs)
    out = data.with_(y_obs=y_obs, y_proxy=y_proxy)
    return out, NoiseManifest(z, flip, proxy_flip & align)


def _inject_feature_dependent(data: Dataset, spec: NoiseSpec):
    _check_rates(data, spec)
    z = mislabel_scores(data, spec)
    pool = flippable_mask(data, spec.include_test)
    align = data.mask(*ALIGNMENT_ROLES)
    flip = np.zeros(data.n, dtype=bool)
    proxy = np.zeros(data.n, dtype=bool)
    for k in np.unique(data.group):
        members = np.flatnonzero(pool & (data.group == k))
        n_flip = round_half_up(spec.rates[k] * members.size)
        if n_flip > members.size:
            raise DataError(f"group {k}: cannot flip {n_flip} of {members.size} rows")
        order = members[np.lexsort((members, -z[members]))]
        flip[order[:n_flip]] = True
        if n_flip == 0:
            cut = np.inf
        elif n_flip == members.size:
            cut = -np.inf
        else:
            cut = z[order[n_flip - 1]]
        in_group = align & (data.group == k)
        proxy[in_group] = z[in_group] >= cut
    return _apply(data, flip, proxy, spec, z)


def _inject_uniform_random(data: Dataset, spec: NoiseSpec):
    _check_rates(data, spec)
    rng = np.random.default_rng(spec.seed)
    pool = flippable_mask(data, spec.include_test)
    align = data.mask(*ALIGNMENT_ROLES)
    flip = np.zeros(data.n, dtype=bool)
    proxy = np.zeros(data.n, dtype=bool)
    for k in np.unique(data.group):
        for target, where in ((flip, pool), (proxy, align)):
            members = np.flatnonzero(where & (data.group == k))
            n_flip = round_half_up(spec.rates[k] * members.size)
            target[rng.permutation(members)[:n_flip]] = True
    return _apply(data, flip, proxy, spec, np.full(data.n, np.nan))


def inject(data: Dataset, spec: NoiseSpec) -> tuple[Dataset, NoiseManifest]:
    if spec.mode == "feature_dependent":
        return _inject_feature_dependent(data, spec)
    return _inject_uniform_random(data, spec)


def inject_feature_dependent(data: Dataset, spec: NoiseSpec) -> Dataset:
    if spec.mode != "feature_dependent":
        raise DataError("spec.mode must be 'feature_dependent'")
    return _inject_feature_dependent(data, spec)[0]


def inject_uniform_random(data: Dataset, spec: NoiseSpec) -> Dataset:
    if spec.mode != "uniform_random":
        raise DataError("spec.mode must be 'uniform_random'")
    return _inject_uniform_random(data, spec)[0]
