"""Datasets: synthetic generation, CSV I/O, min-max scaling, splitting and
alignment-set selection.

Labels are 0/1 throughout. Sources that encode labels as -1/+1 map
-1 -> 0 and +1 -> 1 on load.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

ROLES = ("train", "alignment_train", "alignment_val", "test")
ALIGNMENT_ROLES = ("alignment_train", "alignment_val")
CSV_SCHEMA_VERSION = 1
MAJORITY, MINORITY = 0, 1


class DataError(ValueError):
    """Malformed or infeasible data input."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Instances with ground-truth, observed and proxy labels, groups and roles.

    ``y_obs`` is the label a model may train on: noisy on ordinary training
    rows, equal to ``y_true`` on alignment rows. ``y_proxy`` is the label the
    noisy labeling process assigned to every row; it differs from ``y_obs``
    only on alignment rows, where both it and ``y_true`` are known.
    """

    X: np.ndarray
    y_true: np.ndarray
    y_obs: np.ndarray
    group: np.ndarray
    role: np.ndarray
    y_proxy: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("X must be a 2-D array")
        n = X.shape[0]
        y_true = np.asarray(self.y_true).astype(np.int64)
        y_obs = np.asarray(self.y_obs).astype(np.int64)
        y_proxy = y_obs if self.y_proxy is None else np.asarray(self.y_proxy).astype(np.int64)
        group = np.asarray(self.group).astype(np.int64)
        role = np.asarray(self.role).astype("<U16")
        for name, a in (("y_true", y_true), ("y_obs", y_obs), ("y_proxy", y_proxy),
                        ("group", group), ("role", role)):
            if a.shape != (n,):
                raise DataError(f"{name} has shape {a.shape}, expected ({n},)")
        for name, a in (("y_true", y_true), ("y_obs", y_obs), ("y_proxy", y_proxy)):
            if not np.isin(a, (0, 1)).all():
                raise DataError(f"{name} must contain only 0/1")
        if (group < 0).any():
            raise DataError("group ids must be non-negative integers")
        bad = set(np.unique(role).tolist()) - set(ROLES)
        if bad:
            raise DataError(f"unknown role(s) {sorted(bad)}")
        align = np.isin(role, ALIGNMENT_ROLES)
        if (y_obs[align] != y_true[align]).any():
            raise DataError("alignment rows must have y_obs == y_true")
        for name, a in (("X", X), ("y_true", y_true), ("y_obs", y_obs),
                        ("y_proxy", y_proxy), ("group", group), ("role", role)):
            object.__setattr__(self, name, _frozen(a))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_groups(self) -> int:
        return int(self.group.max()) + 1 if self.n else 0

    def mask(self, *roles: str) -> np.ndarray:
        return np.isin(self.role, roles)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y_true[idx], self.y_obs[idx], self.group[idx],
                       self.role[idx], self.y_proxy[idx])

    def with_(self, **changes) -> "Dataset":
        return replace(self, **changes)


# -- helpers ----------------------------------------------------------------

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


def rank_percentile(values, p: float) -> float:
    """Value at ascending-sort index ceil(p/100 * n) - 1 (stable sort)."""
    v = np.sort(np.asarray(values, dtype=np.float64), kind="stable")
    if v.size == 0:
        raise ValueError("percentile of empty array")
    idx = min(max(math.ceil(p / 100.0 * v.size - 1e-12) - 1, 0), v.size - 1)
    return float(v[idx])


def allocate(total: int, sizes) -> np.ndarray:
    """Split ``total`` across strata proportionally to ``sizes`` (largest remainder).

    Each stratum gets floor or ceil of its exact share, so per-stratum counts
    are within 1 of proportional and sum exactly to ``total``.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    if total > sizes.sum():
        raise DataError(f"cannot draw {total} from {int(sizes.sum())} instances")
    if sizes.sum() == 0:
        return np.zeros_like(sizes)
    share = total * sizes / sizes.sum()
    out = np.floor(share + 1e-12).astype(np.int64)
    rem = share - out
    order = np.lexsort((np.arange(sizes.size), -rem))
    for k in order[: total - int(out.sum())]:
        out[k] += 1
    return out


# -- generation ---------------------------------------------------------------

def generate_synthetic(n: int = 5000, d: int = 30, rng: np.random.Generator | None = None,
                       minority_pct: float = 20.0) -> Dataset:
    """Two-group synthetic task with a linear ground-truth label.

    Labels: 1 iff x.w exceeds its median. Group: minority (1) for the lowest
    ``minority_pct`` percent of feature 0, majority (0) otherwise. Features
    10-19 are zeroed for the majority and 20-29 for the minority.
    """
    if n < 2:
        raise DataError("need at least 2 instances")
    if d < 30:
        raise DataError("synthetic generator needs d >= 30")
    rng = rng if rng is not None else np.random.default_rng()
    X = rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    z = X @ w
    y = (z > rank_percentile(z, 50.0)).astype(np.int64)
    # the instance sitting on the percentile joins the minority
    minority = X[:, 0] <= rank_percentile(X[:, 0], minority_pct)
    X[~minority, 10:20] = 0.0
    X[minority, 20:30] = 0.0
    group = np.where(minority, MINORITY, MAJORITY)
    return Dataset(X, y, y.copy(), group, np.full(n, "train"))


# -- CSV ----------------------------------------------------------------------

def csv_header(d: int, with_proxy: bool = True) -> list[str]:
    head = [f"f{j}" for j in range(d)] + ["group", "y_true", "y_obs", "role"]
    return head + ["y_proxy"] if with_proxy else head


def write_csv(data: Dataset, path) -> None:
    """Write ``f0..f{d-1},group,y_true,y_obs,role,y_proxy`` with 12 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(data.d))
        for i in range(data.n):
            w.writerow([f"{v:.12g}" for v in data.X[i]] + [
                int(data.group[i]), int(data.y_true[i]), int(data.y_obs[i]),
                data.role[i], int(data.y_proxy[i])])


def _parse_label(cell: str, col: str, row: int) -> int:
    try:
        v = int(float(cell))
    except ValueError:
        raise DataError(f"row {row}: column {col!r} is not numeric: {cell!r}") from None
    if float(cell) != v:
        raise DataError(f"row {row}: column {col!r} must be integral, got {cell!r}")
    if v == -1:
        v = 0
    if v not in (0, 1):
        raise DataError(f"row {row}: column {col!r} must be 0/1 (or -1/+1), got {cell!r}")
    return v


def load_csv(path) -> Dataset:
    """Read a dataset CSV. ``role`` and ``y_proxy`` are optional (default train / y_obs)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        feats = [h for h in header if h.startswith("f") and h[1:].isdigit()]
        d = len(feats)
        if d == 0 or feats != [f"f{j}" for j in range(d)]:
            raise DataError(f"{path}: header must start with contiguous feature columns f0..f{{d-1}}")
        for col in ("group", "y_true", "y_obs"):
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        pos = {h: i for i, h in enumerate(header)}
        X, yt, yo, yp, grp, role = [], [], [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} cells, got {len(row)}")
            try:
                X.append([float(row[pos[f]]) for f in feats])
            except ValueError:
                raise DataError(f"row {row_no}: non-numeric feature value") from None
            if not all(math.isfinite(v) for v in X[-1]):
                raise DataError(f"row {row_no}: non-finite feature value")
            yt.append(_parse_label(row[pos["y_true"]], "y_true", row_no))
            yo.append(_parse_label(row[pos["y_obs"]], "y_obs", row_no))
            yp.append(_parse_label(row[pos["y_proxy"]], "y_proxy", row_no)
                      if "y_proxy" in pos else yo[-1])
            g = row[pos["group"]]
            try:
                gv = float(g)
            except ValueError:
                raise DataError(f"row {row_no}: group is not numeric: {g!r}") from None
            if gv != int(gv) or gv < 0:
                raise DataError(f"row {row_no}: group must be a non-negative integer, got {g!r}")
            grp.append(int(gv))
            r = row[pos["role"]].strip() if "role" in pos else "train"
            if r not in ROLES:
                raise DataError(f"row {row_no}: unknown role {r!r}")
            role.append(r)
    if not X:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(X), yt, yo, grp, role, yp)


def normalize_minmax(data: Dataset) -> Dataset:
    """Scale each feature to [0, 1] with statistics from the non-test rows.

    Constant features map to 0.
    """
    fit = ~data.mask("test")
    if not fit.any():
        fit = np.ones(data.n, dtype=bool)
    lo = data.X[fit].min(axis=0)
    span = data.X[fit].max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    X = np.where(span > 0, (data.X - lo) / safe, 0.0)
    return data.with_(X=X)


# -- splitting ----------------------------------------------------------------

def _stratified_pick(pool: np.ndarray, groups: np.ndarray, total: int,
                     rng: np.random.Generator, counts=None) -> np.ndarray:
    ids = np.unique(groups[pool])
    members = [pool[groups[pool] == k] for k in ids]
    if counts is None:
        counts = allocate(total, [m.size for m in members])
    picked = [rng.permutation(m)[:c] for m, c in zip(members, counts)]
    return np.sort(np.concatenate(picked)) if picked else np.array([], dtype=np.int64)


def split_dataset(data: Dataset, test_fraction: float = 0.2,
                  rng: np.random.Generator | None = None) -> Dataset:
    """Random train/test split stratified by group."""
    if data.n < 10:
        raise DataError("need at least 10 instances to split")
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must be in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    test = _stratified_pick(np.arange(data.n), data.group, round_half_up(test_fraction * data.n), rng)
    role = np.full(data.n, "train", dtype="<U16")
    role[test] = "test"
    for k in np.unique(data.group):
        in_test = (role[data.group == k] == "test")
        if in_test.all() or not in_test.any():
            warnings.warn(f"group {k} is absent from the train or test split", stacklevel=2)
    return data.with_(role=role)


def select_alignment(data: Dataset, fraction: float = 0.1, minority_proportion: float | None = None,
                     rng: np.random.Generator | None = None, minority_group: int = MINORITY) -> Dataset:
    """Mark a random subset of the training rows as alignment points.

    Size is ``round(fraction * n_train)``. Without ``minority_proportion`` the
    draw is stratified by group; with it, ``round(minority_proportion * size)``
    rows come from ``minority_group`` and the rest are stratified over the other
    groups. ``floor(size / 2)`` of the alignment rows (stratified by group)
    become ``alignment_val``. Alignment rows get ``y_obs = y_true``.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError("alignment fraction must be in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    train = np.flatnonzero(data.mask("train"))
    size = round_half_up(fraction * train.size)
    if size < 1:
        raise DataError("alignment set would be empty")
    if minority_proportion is None:
        chosen = _stratified_pick(train, data.group, size, rng)
    else:
        if not 0.0 <= minority_proportion <= 1.0:
            raise DataError("minority_proportion must be in [0, 1]")
        n_min = round_half_up(minority_proportion * size)
        mins = train[data.group[train] == minority_group]
        rest = train[data.group[train] != minority_group]
        if n_min > mins.size:
            raise DataError(f"group {minority_group} has {mins.size} training rows, "
                            f"{n_min} requested for the alignment set")
        if size - n_min > rest.size:
            raise DataError(f"groups other than {minority_group} have {rest.size} training rows, "
                            f"{size - n_min} requested for the alignment set")
        parts = [rng.permutation(mins)[:n_min]]
        if size - n_min:
            parts.append(_stratified_pick(rest, data.group, size - n_min, rng))
        chosen = np.sort(np.concatenate(parts))
    val = _stratified_pick(chosen, data.group, size // 2, rng)
    role = data.role.copy()
    role[chosen] = "alignment_train"
    role[val] = "alignment_val"
    y_obs = data.y_obs.copy()
    y_obs[chosen] = data.y_true[chosen]
    return data.with_(role=role, y_obs=y_obs, y_proxy=data.y_proxy)


def positive_rates(data: Dataset) -> dict[int, float]:
    return {int(k): float(data.y_true[data.group == k].mean()) for k in np.unique(data.group)}
