"""Training objectives and the per-group clean-rate estimator.

Labels are 0/1. All losses are means, so their scalar multipliers do not
depend on batch size. Each loss has a companion ``*_grads`` returning
per-example derivatives with respect to its probability inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import EPS_PROB

EPS_RATE = 1e-3


def _prep(p, labels, name: str):
    p = np.clip(np.asarray(p, dtype=np.float64).reshape(-1), EPS_PROB, 1.0 - EPS_PROB)
    labels = np.asarray(labels).reshape(-1)
    if p.size == 0:
        raise ValueError(f"{name}: empty batch")
    if p.shape != labels.shape:
        raise ValueError(f"{name}: {p.size} probabilities vs {labels.size} labels")
    return p, labels.astype(bool)


def _log_lik(p: np.ndarray, pos: np.ndarray) -> np.ndarray:
    return np.where(pos, np.log(p), np.log1p(-p))


def _bce_grad(p: np.ndarray, pos: np.ndarray) -> np.ndarray:
    return np.where(pos, -1.0 / p, 1.0 / (1.0 - p))


def loss_theta(yhat, y_true) -> float:
    """Cross entropy of class predictions against ground-truth labels."""
    p, y = _prep(yhat, y_true, "loss_theta")
    return float(-_log_lik(p, y).mean())


def loss_theta_grads(yhat, y_true) -> np.ndarray:
    p, y = _prep(yhat, y_true, "loss_theta")
    return _bce_grad(p, y) / p.size


def loss_phi(beta_hat, agree) -> float:
    """Cross entropy of label-confidence scores against observed==true indicators."""
    b, a = _prep(beta_hat, agree, "loss_phi")
    return float(-_log_lik(b, a).mean())


def loss_phi_grads(beta_hat, agree) -> np.ndarray:
    b, a = _prep(beta_hat, agree, "loss_phi")
    return _bce_grad(b, a) / b.size


@dataclass(frozen=True)
class GroupRates:
    group_ids: tuple
    noise_rates: tuple

    @property
    def n_groups(self) -> int:
        return len(self.group_ids)

    @property
    def clean_weights(self) -> tuple:
        return tuple(1.0 / max(1.0 - r, EPS_RATE) for r in self.noise_rates)

    def weights_for(self, groups) -> np.ndarray:
        groups = np.asarray(groups).reshape(-1)
        lookup = dict(zip(self.group_ids, self.clean_weights))
        missing = set(np.unique(groups).tolist()) - set(lookup)
        if missing:
            raise KeyError(f"no rate estimate for group id(s) {sorted(missing)}")
        return np.array([lookup[g] for g in groups.tolist()], dtype=np.float64)


def estimate_group_rates(beta_hat, groups) -> GroupRates:
    """Per-group noise rate as the mean of 1 - beta_hat over the group's members."""
    b = np.asarray(beta_hat, dtype=np.float64).reshape(-1)
    g = np.asarray(groups).reshape(-1)
    if b.size == 0:
        raise ValueError("estimate_group_rates: empty input")
    if b.shape != g.shape:
        raise ValueError("beta_hat and groups differ in length")
    ids = np.unique(g)
    rates = tuple(float(np.mean(1.0 - b[g == k])) for k in ids)
    return GroupRates(tuple(ids.tolist()), rates)


def _theta_prime_terms(yhat, y_obs, beta_hat, groups, rates: GroupRates):
    p, y = _prep(yhat, y_obs, "loss_theta_prime")
    b = np.asarray(beta_hat, dtype=np.float64).reshape(-1)
    if b.shape != p.shape:
        raise ValueError("loss_theta_prime: beta_hat length mismatch")
    w = rates.weights_for(groups)
    if w.shape != p.shape:
        raise ValueError("loss_theta_prime: groups length mismatch")
    return p, y, b, w


def loss_theta_prime(yhat, y_obs, beta_hat, groups, rates: GroupRates) -> float:
    """Confidence-weighted cross entropy on observed labels, reweighted per group
    by the inverse estimated clean rate."""
    p, y, b, w = _theta_prime_terms(yhat, y_obs, beta_hat, groups, rates)
    return float(-(w * b * _log_lik(p, y)).mean())


def loss_theta_prime_grads(yhat, y_obs, beta_hat, groups, rates: GroupRates):
    """(dL/dyhat, dL/dbeta_hat) per example, with the rates held fixed."""
    p, y, b, w = _theta_prime_terms(yhat, y_obs, beta_hat, groups, rates)
    n = p.size
    return w * b * _bce_grad(p, y) / n, -w * _log_lik(p, y) / n
