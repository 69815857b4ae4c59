"""INI-style experiment configuration (``key = value`` under ``[section]`` headers).

Every section and key is optional; anything omitted takes the default below.
Unknown sections or keys and malformed values raise :class:`ConfigError`
naming the offending section and key. Example::

    [data]
    source = synthetic          ; or a path to a dataset CSV
    n = 5000
    d = 30
    test_fraction = 0.2
    alignment_fraction = 0.1
    minority_proportion =       ; empty: alignment set stratified by group

    [noise]
    mode = feature_dependent    ; or uniform_random
    majority_rate = 0.2
    minority_rate = 0.4
    sigma_w = 0.33
    include_test = false

    [train]
    layer_size = 10
    learning_rate = 0.001
    l2 = 0.0001
    alpha1 = 1
    gamma = 1
    alpha2 = 1
    patience = 10
    max_epochs = 500
    n_batches = 5
    seed = 123456789

    [search]
    tune = false                ; random search before training
    per_seed = false            ; re-tune for every replicate
    budget = 20
    learning_rate = 1e-5, 1e-2  ; log-uniform bounds
    l2 = 1e-4, 1e-1
    alpha1 = 0.1, 10
    gamma = 0.1, 10
    alpha2 = 0.1, 10

    [experiment]
    arms = proposed, standard, clean
    axis = noise_rate           ; noise_rate | disparity | alignment_size | alignment_bias
                                ; | alpha1 | alpha2 | gamma
    grid = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6
    replications = 10
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .noisegen import MODES
from .pipeline import ABLATION_ARMS, ARMS, DEFAULT_SEARCH_SPACE, TrainConfig

AXES = ("noise_rate", "disparity", "alignment_size", "alignment_bias", "alpha1", "alpha2", "gamma")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSettings:
    source: str = "synthetic"
    n: int = 5000
    d: int = 30
    test_fraction: float = 0.2
    alignment_fraction: float = 0.1
    minority_proportion: float | None = None


@dataclass(frozen=True)
class NoiseSettings:
    mode: str = "feature_dependent"
    majority_rate: float = 0.2
    minority_rate: float = 0.4
    sigma_w: float = 0.33
    include_test: bool = False

    @property
    def disparity(self) -> float:
        return self.minority_rate - self.majority_rate


@dataclass(frozen=True)
class SearchSettings:
    tune: bool = False
    per_seed: bool = False
    budget: int = 20
    space: dict = field(default_factory=lambda: dict(DEFAULT_SEARCH_SPACE))


@dataclass(frozen=True)
class ExperimentSettings:
    arms: tuple = ARMS
    axis: str = "noise_rate"
    grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    replications: int = 10


@dataclass(frozen=True)
class Config:
    data: DataSettings = DataSettings()
    noise: NoiseSettings = NoiseSettings()
    train: TrainConfig = TrainConfig()
    search: SearchSettings = SearchSettings()
    experiment: ExperimentSettings = ExperimentSettings()


_FLOAT, _INT, _BOOL, _STR, _FLOATS, _STRS, _OPT_FLOAT, _BOUNDS = range(8)

SCHEMA = {
    "data": {"source": _STR, "n": _INT, "d": _INT, "test_fraction": _FLOAT,
             "alignment_fraction": _FLOAT, "minority_proportion": _OPT_FLOAT},
    "noise": {"mode": _STR, "majority_rate": _FLOAT, "minority_rate": _FLOAT,
              "sigma_w": _FLOAT, "include_test": _BOOL},
    "train": {"layer_size": _INT, "learning_rate": _FLOAT, "l2": _FLOAT, "alpha1": _FLOAT,
              "gamma": _FLOAT, "alpha2": _FLOAT, "patience": _INT, "max_epochs": _INT,
              "n_batches": _INT, "seed": _INT},
    "search": {"tune": _BOOL, "per_seed": _BOOL, "budget": _INT,
               **{k: _BOUNDS for k in DEFAULT_SEARCH_SPACE}},
    "experiment": {"arms": _STRS, "axis": _STR, "grid": _FLOATS, "replications": _INT},
}


def _convert(section: str, key: str, raw: str, kind: int):
    where = f"[{section}] {key}"
    raw = raw.strip()
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _OPT_FLOAT:
            return None if raw in ("", "none") else float(raw)
        if kind == _INT:
            return int(raw)
        if kind == _BOOL:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == _STR:
            if not raw:
                raise ValueError
            return raw
        if kind == _STRS:
            items = tuple(s.strip() for s in raw.split(",") if s.strip())
            if not items:
                raise ValueError
            return items
        if kind in (_FLOATS, _BOUNDS):
            items = tuple(float(s) for s in raw.split(",") if s.strip())
            if not items or (kind == _BOUNDS and len(items) != 2):
                raise ValueError
            return items
    except ValueError:
        expected = {
            _FLOAT: "a number", _OPT_FLOAT: "a number or empty", _INT: "an integer",
            _BOOL: "true/false", _STR: "a non-empty string", _STRS: "a comma-separated list",
            _FLOATS: "a comma-separated list of numbers", _BOUNDS: "two numbers 'low, high'",
        }[kind]
        raise ConfigError(f"{where}: expected {expected}, got {raw!r}") from None
    raise AssertionError(kind)


def parse_config(text: str, origin: str = "<config>") -> Config:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]; expected one of "
                              f"{', '.join(SCHEMA)}")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]; expected one of "
                                  f"{', '.join(SCHEMA[section])}")
            values[section][key] = _convert(section, key, raw, SCHEMA[section][key])
    return build_config(values, origin)


def build_config(values: dict, origin: str = "<config>") -> Config:
    s = values.get("search", {})
    space = dict(DEFAULT_SEARCH_SPACE)
    space.update({k: v for k, v in s.items() if k in DEFAULT_SEARCH_SPACE})
    try:
        cfg = Config(
            data=DataSettings(**values.get("data", {})),
            noise=NoiseSettings(**values.get("noise", {})),
            train=TrainConfig(**values.get("train", {})),
            search=SearchSettings(tune=s.get("tune", False), per_seed=s.get("per_seed", False),
                                  budget=s.get("budget", 20), space=space),
            experiment=ExperimentSettings(**values.get("experiment", {})),
        )
    except ValueError as exc:
        raise ConfigError(f"{origin}: [train] {exc}") from None
    validate_config(cfg, origin)
    return cfg


def validate_config(cfg: Config, origin: str = "<config>") -> None:
    def bad(msg):
        raise ConfigError(f"{origin}: {msg}")

    d, nz, s, e = cfg.data, cfg.noise, cfg.search, cfg.experiment
    if d.source != "synthetic" and not Path(d.source).exists():
        bad(f"[data] source: file {d.source!r} does not exist")
    if d.n < 10:
        bad("[data] n must be >= 10")
    if d.source == "synthetic" and d.d < 30:
        bad("[data] d must be >= 30 for the synthetic generator")
    if not 0 < d.test_fraction < 1:
        bad("[data] test_fraction must be in (0, 1)")
    if not 0 < d.alignment_fraction < 1:
        bad("[data] alignment_fraction must be in (0, 1)")
    if d.minority_proportion is not None and not 0 <= d.minority_proportion <= 1:
        bad("[data] minority_proportion must be in [0, 1]")
    if nz.mode not in MODES:
        bad(f"[noise] mode must be one of {', '.join(MODES)}")
    for key in ("majority_rate", "minority_rate"):
        if not 0 <= getattr(nz, key) <= 1:
            bad(f"[noise] {key} must be in [0, 1]")
    if nz.sigma_w <= 0:
        bad("[noise] sigma_w must be > 0")
    if s.budget < 1:
        bad("[search] budget must be >= 1")
    for k, (lo, hi) in s.space.items():
        if not 0 < lo <= hi:
            bad(f"[search] {k}: need 0 < low <= high, got ({lo}, {hi})")
    for arm in e.arms:
        if arm not in ARMS + ABLATION_ARMS:
            bad(f"[experiment] arms: unknown arm {arm!r}; expected from {', '.join(ARMS + ABLATION_ARMS)}")
    if e.axis not in AXES:
        bad(f"[experiment] axis must be one of {', '.join(AXES)}")
    if e.replications < 1:
        bad("[experiment] replications must be >= 1")
    if e.axis in ("alignment_size",) and any(not 0 < x < 1 for x in e.grid):
        bad("[experiment] grid: alignment sizes must be in (0, 1)")
    if e.axis in ("noise_rate", "disparity", "alignment_bias") and any(not 0 <= x <= 1 for x in e.grid):
        bad(f"[experiment] grid: {e.axis} values must be in [0, 1]")
    if e.axis in ("alpha1", "alpha2", "gamma") and any(x < 0 for x in e.grid):
        bad(f"[experiment] grid: {e.axis} values must be >= 0")


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
