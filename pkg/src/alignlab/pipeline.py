"""Two-stage training with alignment points, the Standard/Clean baselines,
HM-based early stopping and random-search tuning.

Stage one fits both networks on the alignment-train rows. Stage two alternates
epochs: even epochs update the class network on the noisy rows (confidence
weighted) plus the alignment rows, odd epochs update the confidence network on
the same weighted loss plus its alignment supervision.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import objective as obj
from .data import Dataset
from .metrics import ScoredSet, UndefinedMetricError, aueoc, auroc, harmonic_mean
from .model import DualModel, phi_inputs
from .nn import AdamState, adam_step, backward, forward_cached

log = logging.getLogger(__name__)

DEFAULT_SEED = 123456789
ARMS = ("proposed", "standard", "clean")
ABLATION_ARMS = ("step1_only", "lprime_only", "plus_ltheta", "plus_lphi", "full")


class NumericError(FloatingPointError):
    """Training produced a non-finite loss."""


class DegenerateAlignmentWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    layer_size: int = 10
    learning_rate: float = 1e-3
    l2: float = 1e-4
    alpha1: float = 1.0
    gamma: float = 1.0
    alpha2: float = 1.0
    patience: int = 10
    max_epochs: int = 500
    n_batches: int = 5
    seed: int = DEFAULT_SEED
    min_delta: float = 1e-6
    finetune: bool = True  # False: stop after stage one

    def __post_init__(self):
        if self.layer_size < 1:
            raise ValueError("layer_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        for name in ("l2", "alpha1", "gamma", "alpha2", "min_delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.patience < 1 or self.n_batches < 1 or self.max_epochs < 1:
            raise ValueError("patience, n_batches and max_epochs must be >= 1")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


# synthetic-data bounds
DEFAULT_SEARCH_SPACE = {
    "learning_rate": (1e-5, 1e-2),
    "l2": (1e-4, 1e-1),
    "alpha1": (0.1, 10.0),
    "gamma": (0.1, 10.0),
    "alpha2": (0.1, 10.0),
}


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss_theta: float = math.nan
    loss_phi: float = math.nan
    loss_theta_prime: float = math.nan
    val_auroc: float = math.nan
    val_aueoc: float = math.nan
    val_hm: float = math.nan


@dataclass
class TrainedOutcome:
    model: DualModel
    best_val_hm: float
    best_epoch: int
    history: list = field(default_factory=list)
    pretrain_history: list = field(default_factory=list)
    config: TrainConfig | None = None


def write_history_csv(outcome: TrainedOutcome, path) -> None:
    cols = [f.name for f in fields(EpochRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in outcome.pretrain_history + outcome.history:
            w.writerow([_fmt(getattr(rec, c)) for c in cols])


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.12g}"
    return str(v)


# -- validation & early stopping --------------------------------------------

def validate(model: DualModel, X, y_true, groups) -> tuple[float, float, float]:
    """(AUROC, AUEOC, HM) of the class network's scores against ground truth.

    Returns NaN for a metric that is undefined on this set; HM then falls back
    to the defined one.
    """
    X = np.asarray(X)
    if X.shape[0] == 0:
        raise ValueError("empty validation set")
    scores = model.predict_y(X)
    ss = ScoredSet(scores, y_true, groups)
    try:
        a = auroc(scores, y_true)
    except UndefinedMetricError:
        a = math.nan
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            e = aueoc(ss)
    except UndefinedMetricError:
        e = math.nan
    if math.isnan(a) and math.isnan(e):
        raise UndefinedMetricError("validation set supports neither AUROC nor AUEOC")
    if math.isnan(a):
        return a, e, e
    if math.isnan(e):
        return a, e, a
    return a, e, harmonic_mean(a, e)


def evaluate(model: DualModel, data: Dataset, role: str = "test") -> dict:
    m = data.mask(role)
    a, e, h = validate(model, data.X[m], data.y_true[m], data.group[m])
    return {"auroc": a, "aueoc": e, "hm": h}


class _EarlyStopper:
    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best = -math.inf
        self.best_epoch = -1
        self.snapshot = None
        self.bad = 0

    def update(self, epoch: int, score: float, model: DualModel) -> bool:
        """Record ``score``; return True when training should stop."""
        if score > self.best + self.min_delta:
            self.best, self.best_epoch, self.bad = score, epoch, 0
            self.snapshot = model.copy()
        else:
            self.bad += 1
        return self.bad >= self.patience

    def refresh(self, epoch: int, model: DualModel) -> None:
        """Carry the snapshot forward through an epoch that cannot change the score."""
        if self.best_epoch == epoch - 1:
            self.best_epoch = epoch
            self.snapshot = model.copy()


def _batches(n_rows: int, n_batches: int, rng: np.random.Generator):
    perm = rng.permutation(n_rows)
    return [b for b in np.array_split(perm, min(n_batches, n_rows)) if b.size]


def _finite(*vals):
    for v in vals:
        if not math.isfinite(v):
            raise NumericError("non-finite loss during training")


def _step(net, state, X, grads_out, probs, acts):
    if np.any(grads_out):
        adam_step(net, backward(net, X, grads_out, reduce="sum", cache=(probs, acts)), state)
    else:
        adam_step(net, [np.zeros_like(p) for p in net.params()], state)


class _Rows:
    """Index views used by the training loops."""

    def __init__(self, data: Dataset):
        a = data.mask("alignment_train")
        n = data.mask("train")
        v = data.mask("alignment_val")
        self.Xa, self.ya, self.pa = data.X[a], data.y_true[a], data.y_proxy[a]
        self.agree = (self.pa == self.ya).astype(int)
        self.Xn, self.yn, self.gn = data.X[n], data.y_obs[n], data.group[n]
        self.Xv, self.yv, self.gv = data.X[v], data.y_true[v], data.group[v]


# -- stage one ----------------------------------------------------------------

def pretrain(model: DualModel, data: Dataset, cfg: TrainConfig, rng: np.random.Generator):
    """Fit both networks on alignment-train rows, minimizing L_theta + alpha1 * L_phi.

    Returns ``(model, history, best_val_hm, best_epoch)``; the model holds the
    best-validation parameters.
    """
    rows = _Rows(data)
    if rows.Xa.shape[0] == 0:
        raise ValueError("alignment-train set is empty")
    if rows.agree.all() or not rows.agree.any():
        warnings.warn("alignment set has only agreeing or only disagreeing labels; "
                      "the confidence loss is degenerate", DegenerateAlignmentWarning, stacklevel=2)
    model.set_phase("step1")
    opt_t = AdamState.for_net(model.theta_net, cfg.learning_rate, cfg.l2)
    opt_p = AdamState.for_net(model.phi_net, cfg.learning_rate, cfg.l2)
    Za = phi_inputs(rows.Xa, rows.pa)
    stopper = _EarlyStopper(cfg.patience, cfg.min_delta)
    history = []
    for epoch in range(cfg.max_epochs):
        lt, lp = [], []
        for b in _batches(rows.Xa.shape[0], cfg.n_batches, rng):
            yhat, ct = forward_cached(model.theta_net, rows.Xa[b])
            beta, cp = forward_cached(model.phi_net, Za[b])
            lt.append(obj.loss_theta(yhat, rows.ya[b]))
            lp.append(obj.loss_phi(beta, rows.agree[b]))
            _finite(lt[-1], lp[-1])
            _step(model.theta_net, opt_t, rows.Xa[b], obj.loss_theta_grads(yhat, rows.ya[b]), yhat, ct)
            _step(model.phi_net, opt_p, Za[b],
                  cfg.alpha1 * obj.loss_phi_grads(beta, rows.agree[b]), beta, cp)
        a, e, h = validate(model, rows.Xv, rows.yv, rows.gv)
        history.append(EpochRecord(epoch, "step1", float(np.mean(lt)), float(np.mean(lp)),
                                   math.nan, a, e, h))
        if stopper.update(epoch, h, model):
            break
    best = stopper.snapshot
    model.theta_net.load_params(best.theta_net.params())
    model.phi_net.load_params(best.phi_net.params())
    return model, history, stopper.best, stopper.best_epoch


# -- stage two ----------------------------------------------------------------

def current_group_rates(model: DualModel, data: Dataset) -> obj.GroupRates:
    rows = _Rows(data)
    beta = model.predict_beta(rows.Xn, rows.yn)
    return obj.estimate_group_rates(beta, rows.gn)


def finetune(model: DualModel, data: Dataset, cfg: TrainConfig,
             rng: np.random.Generator) -> TrainedOutcome:
    """Alternate class-network (even epochs) and confidence-network (odd epochs) updates.

    Group rates are re-estimated from the current confidence network over all
    noisy training rows at the start of each epoch. One patience counter spans
    both phases; the best-validation parameters are restored at the end.
    """
    rows = _Rows(data)
    n_a, n_n = rows.Xa.shape[0], rows.Xn.shape[0]
    if n_n == 0:
        raise ValueError("no non-alignment training rows to fine-tune on")
    opt_t = AdamState.for_net(model.theta_net, cfg.learning_rate, cfg.l2)
    opt_p = AdamState.for_net(model.phi_net, cfg.learning_rate, cfg.l2)
    X_all = np.vstack([rows.Xa, rows.Xn])
    Z_all = np.vstack([phi_inputs(rows.Xa, rows.pa), phi_inputs(rows.Xn, rows.yn)])
    stopper = _EarlyStopper(cfg.patience, cfg.min_delta)
    history = []
    for epoch in range(cfg.max_epochs):
        phase = "step2a" if epoch % 2 == 0 else "step2b"
        model.set_phase(phase)
        rates = current_group_rates(model, data)
        lt, lp, lq = [], [], []
        for b in _batches(n_a + n_n, cfg.n_batches, rng):
            b = np.sort(b)
            ia = b[b < n_a]
            i_n = b[b >= n_a] - n_a
            yhat, ct = forward_cached(model.theta_net, X_all[b])
            beta, cp = forward_cached(model.phi_net, Z_all[b])
            k = ia.size
            g_yhat = np.zeros(b.size)
            g_beta = np.zeros(b.size)
            if k:
                lt.append(obj.loss_theta(yhat[:k], rows.ya[ia]))
                lp.append(obj.loss_phi(beta[:k], rows.agree[ia]))
                g_yhat[:k] = cfg.gamma * obj.loss_theta_grads(yhat[:k], rows.ya[ia])
                g_beta[:k] = cfg.alpha2 * obj.loss_phi_grads(beta[:k], rows.agree[ia])
            if i_n.size:
                args = (yhat[k:], rows.yn[i_n], beta[k:], rows.gn[i_n], rates)
                lq.append(obj.loss_theta_prime(*args))
                gy, gb = obj.loss_theta_prime_grads(*args)
                g_yhat[k:] = gy
                g_beta[k:] = gb
            _finite(*(v[-1] for v in (lt, lp, lq) if v))
            if phase == "step2a":
                _step(model.theta_net, opt_t, X_all[b], g_yhat, yhat, ct)
            else:
                _step(model.phi_net, opt_p, Z_all[b], g_beta, beta, cp)
        a, e, h = validate(model, rows.Xv, rows.yv, rows.gv)
        history.append(EpochRecord(epoch, phase, _mean(lt), _mean(lp), _mean(lq), a, e, h))
        # validation only scores the class network, which is frozen in step 2b
        if phase == "step2b" and epoch > 0:
            stopper.refresh(epoch, model)
        elif stopper.update(epoch, h, model):
            break
    model.theta_net.load_params(stopper.snapshot.theta_net.params())
    model.phi_net.load_params(stopper.snapshot.phi_net.params())
    model.set_phase("step2a")
    return TrainedOutcome(model, stopper.best, stopper.best_epoch, history, config=cfg)


def _mean(v) -> float:
    return float(np.mean(v)) if v else math.nan


def train_proposed(data: Dataset, cfg: TrainConfig) -> TrainedOutcome:
    rng = np.random.default_rng(cfg.seed)
    model = DualModel.create(data.d, cfg.layer_size, rng)
    model, pre_hist, pre_best, pre_epoch = pretrain(model, data, cfg, rng)
    if not cfg.finetune:
        return TrainedOutcome(model, pre_best, pre_epoch, pre_hist, config=cfg)
    out = finetune(model, data, cfg, rng)
    out.pretrain_history = pre_hist
    return out


# -- baselines ------------------------------------------------------------------

def _train_supervised(data: Dataset, cfg: TrainConfig, labels: np.ndarray,
                      phase: str) -> TrainedOutcome:
    rng = np.random.default_rng(cfg.seed)
    model = DualModel.create(data.d, cfg.layer_size, rng)
    model.set_phase("step2a")
    rows = _Rows(data)
    m = data.mask("train", "alignment_train")
    X, y = data.X[m], labels[m]
    opt = AdamState.for_net(model.theta_net, cfg.learning_rate, cfg.l2)
    stopper = _EarlyStopper(cfg.patience, cfg.min_delta)
    history = []
    for epoch in range(cfg.max_epochs):
        losses = []
        for b in _batches(X.shape[0], cfg.n_batches, rng):
            yhat, cache = forward_cached(model.theta_net, X[b])
            losses.append(obj.loss_theta(yhat, y[b]))
            _finite(losses[-1])
            _step(model.theta_net, opt, X[b], obj.loss_theta_grads(yhat, y[b]), yhat, cache)
        a, e, h = validate(model, rows.Xv, rows.yv, rows.gv)
        history.append(EpochRecord(epoch, phase, float(np.mean(losses)), val_auroc=a,
                                   val_aueoc=e, val_hm=h))
        if stopper.update(epoch, h, model):
            break
    model.theta_net.load_params(stopper.snapshot.theta_net.params())
    return TrainedOutcome(model, stopper.best, stopper.best_epoch, history, config=cfg)


def train_standard(data: Dataset, cfg: TrainConfig) -> TrainedOutcome:
    """Class network on observed labels (ground truth on alignment-train rows)."""
    return _train_supervised(data, cfg, data.y_obs, "standard")


def train_clean(data: Dataset, cfg: TrainConfig) -> TrainedOutcome:
    """Class network on ground-truth labels for every training row."""
    return _train_supervised(data, cfg, data.y_true, "clean")


def arm_config(arm: str, cfg: TrainConfig) -> TrainConfig:
    """Config for an ablation arm, derived from the full-method config."""
    if arm == "step1_only":
        return cfg.with_(finetune=False)
    if arm == "lprime_only":
        return cfg.with_(gamma=0.0, alpha2=0.0)
    if arm == "plus_ltheta":
        return cfg.with_(alpha2=0.0)
    if arm == "plus_lphi":
        return cfg.with_(gamma=0.0)
    if arm in ("full", "proposed"):
        return cfg
    raise ValueError(f"unknown ablation arm {arm!r}")


def train_arm(arm: str, data: Dataset, cfg: TrainConfig) -> TrainedOutcome:
    if arm == "standard":
        return train_standard(data, cfg)
    if arm == "clean":
        return train_clean(data, cfg)
    if arm == "proposed" or arm in ABLATION_ARMS:
        return train_proposed(data, arm_config(arm, cfg))
    raise ValueError(f"unknown arm {arm!r}; expected one of {ARMS + ABLATION_ARMS}")


# -- tuning ------------------------------------------------------------------------

ARM_PARAMS = {
    "standard": ("learning_rate", "l2"),
    "clean": ("learning_rate", "l2"),
}
PROPOSED_PARAMS = ("learning_rate", "l2", "alpha1", "gamma", "alpha2")


@dataclass
class Trial:
    index: int
    config: TrainConfig
    val_hm: float
    best_epoch: int


def sample_configs(space: dict, budget: int, rng: np.random.Generator, base: TrainConfig,
                   arm: str = "proposed") -> list[TrainConfig]:
    """Log-uniform draws within ``space``; trial i's seed is ``base.seed ^ i``.

    Every trial draws all parameters in a fixed order, so the first k configs
    do not depend on the budget.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    for name, (lo, hi) in space.items():
        if not (0 < lo <= hi):
            raise ValueError(f"invalid bounds for {name}: ({lo}, {hi})")
        if name not in PROPOSED_PARAMS:
            raise ValueError(f"unknown search parameter {name!r}")
    tuned = ARM_PARAMS.get(arm, PROPOSED_PARAMS)
    out = []
    for i in range(budget):
        draws = {name: float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
                 for name, (lo, hi) in space.items()}
        out.append(base.with_(seed=base.seed ^ i,
                              **{k: v for k, v in draws.items() if k in tuned}))
    return out


def random_search(data: Dataset, arm: str = "proposed", space: dict | None = None,
                  budget: int = 20, rng: np.random.Generator | None = None,
                  base: TrainConfig | None = None):
    """Train ``budget`` sampled configs; return ``(best_config, best_outcome, trials)``.

    The winner maximizes validation HM; ties go to the earliest trial.
    """
    space = DEFAULT_SEARCH_SPACE if space is None else space
    base = base or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(base.seed)
    best = None
    trials = []
    for i, cfg in enumerate(sample_configs(space, budget, rng, base, arm)):
        out = train_arm(arm, data, cfg)
        trials.append(Trial(i, cfg, out.best_val_hm, out.best_epoch))
        log.debug("trial %d: val HM %.4f", i, out.best_val_hm)
        if best is None or out.best_val_hm > best[1].best_val_hm:
            best = (cfg, out)
    return best[0], best[1], trials


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
