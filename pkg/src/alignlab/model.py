"""Dual network: a class predictor over x and a label-confidence predictor over (x, observed label)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Mlp, forward, he_init

PHASES = ("step1", "step2a", "step2b")
CHECKPOINT_FORMAT = "alignlab-dual-mlp"
CHECKPOINT_VERSION = 1


def phi_inputs(x, y_obs) -> np.ndarray:
    """Append the observed label (0/1) as the last feature column."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y_obs, dtype=np.float64)
    if x.ndim == 1:
        return np.append(x, float(y))
    return np.column_stack([x, y.reshape(-1)])


@dataclass
class DualModel:
    theta_net: Mlp
    phi_net: Mlp
    phase: str = "step1"

    def __post_init__(self):
        if self.phi_net.input_dim != self.theta_net.input_dim + 1:
            raise ValueError("phi network must take exactly one more input than theta network")
        self.set_phase(self.phase)

    @classmethod
    def create(cls, n_features: int, hidden: int, rng: np.random.Generator) -> "DualModel":
        theta = he_init([n_features, hidden, hidden, 1], rng)
        phi = he_init([n_features + 1, hidden, hidden, 1], rng)
        return cls(theta, phi)

    @property
    def n_features(self) -> int:
        return self.theta_net.input_dim

    @property
    def frozen(self) -> str | None:
        if not self.theta_net.trainable:
            return "theta"
        if not self.phi_net.trainable:
            return "phi"
        return None

    def set_phase(self, phase: str) -> None:
        """step1: both trainable; step2a: phi frozen; step2b: theta frozen."""
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}; expected one of {PHASES}")
        self.phase = phase
        self.theta_net.trainable = phase != "step2b"
        self.phi_net.trainable = phase != "step2a"

    def predict_y(self, x):
        return forward(self.theta_net, x)

    def predict_beta(self, x, y_obs):
        y = np.asarray(y_obs)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("observed labels must be encoded as 0/1")
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return forward(self.phi_net, phi_inputs(x, y))

    def copy(self) -> "DualModel":
        return DualModel(self.theta_net.copy(), self.phi_net.copy(), self.phase)


def _net_to_dict(net: Mlp) -> dict:
    return {
        "layer_sizes": net.layer_sizes,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> Mlp:
    return Mlp(
        list(d["layer_sizes"]),
        [np.asarray(w, dtype=np.float64).reshape(o, i) for w, o, i in
         zip(d["weights"], d["layer_sizes"][1:], d["layer_sizes"][:-1])],
        [np.asarray(b, dtype=np.float64) for b in d["biases"]],
    )


def save_checkpoint(model: DualModel, path) -> None:
    """Write a JSON checkpoint.

    Layout: ``{"format", "version", "phase", "theta": net, "phi": net}`` where
    each net is ``{"layer_sizes", "weights", "biases"}`` with weights stored as
    nested row-major lists of shape (fan_out, fan_in). Floats are written with
    Python's shortest round-trip repr, so loading is exact.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "phase": model.phase,
        "theta": _net_to_dict(model.theta_net),
        "phi": _net_to_dict(model.phi_net),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> DualModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an alignlab checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    return DualModel(_net_from_dict(doc["theta"]), _net_from_dict(doc["phi"]), doc["phase"])
