"""Small feed-forward network with analytic gradients and Adam.

Networks are ReLU on hidden layers and a sigmoid output unit. Everything runs
in float64 on numpy arrays; a batch is a 2-D array of shape (n, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

EPS_PROB = 1e-7


class FrozenNetworkError(RuntimeError):
    """Raised when an optimizer step is attempted on a frozen network."""


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Mlp:
    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    trainable: bool = True

    def __post_init__(self):
        sizes = list(self.layer_sizes)
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes!r}")
        if sizes[-1] != 1:
            raise ValueError("output layer must have exactly one unit")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("number of weight/bias arrays does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]):
                raise ValueError(
                    f"layer {i}: weight shape {w.shape} != {(sizes[i + 1], sizes[i])}"
                )
            if b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} != {(sizes[i + 1],)}")
        self.layer_sizes = [int(s) for s in sizes]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def params(self) -> List[np.ndarray]:
        """Parameters in canonical order ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.trainable,
        )

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        for dst, src in zip(self.params(), params):
            dst[...] = src


def he_init(layer_sizes: Sequence[int], rng: np.random.Generator) -> Mlp:
    """He-uniform weights, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
        raise ValueError(f"invalid layer sizes {sizes!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases)


def _as_batch(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    batch = x[None, :] if x.ndim == 1 else x
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ValueError(
            f"input has shape {x.shape}, network expects dimension {net.input_dim}"
        )
    return batch


def forward_cached(net: Mlp, inputs) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward a batch, returning clamped probabilities and per-layer activations."""
    a = _as_batch(net, inputs)
    acts = [a]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if i < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
        else:
            a = sigmoid(z[:, 0])
    probs = np.clip(a, EPS_PROB, 1.0 - EPS_PROB)
    return probs, acts


def forward(net: Mlp, x):
    """P(class 1) for a single vector (returns float) or a batch (returns array)."""
    probs, _ = forward_cached(net, x)
    if np.ndim(x) == 1:
        return float(probs[0])
    return probs


def backward(net: Mlp, inputs, output_grads, *, reduce: str = "mean",
             cache=None) -> List[np.ndarray]:
    """Gradients of the batch loss with respect to every parameter.

    ``output_grads[i]`` is dL_i/dp_i, the derivative of example i's loss with
    respect to the network's output probability. With ``reduce="mean"`` the
    result is the gradient of mean_i L_i; with ``"sum"`` of sum_i L_i. The
    output clamp is treated as the identity.
    """
    if reduce not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduce!r}")
    probs, acts = cache if cache is not None else forward_cached(net, inputs)
    g = np.asarray(output_grads, dtype=np.float64).reshape(-1)
    n = probs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if g.shape[0] != n:
        raise ValueError(f"{g.shape[0]} output gradients for a batch of {n}")
    if reduce == "mean":
        g = g / n
    delta = (g * probs * (1.0 - probs))[:, None]
    grads: List[np.ndarray] = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = delta.T @ acts[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (acts[i] > 0.0)
    return grads


@dataclass
class AdamState:
    learning_rate: float
    l2: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, learning_rate: float, l2: float = 0.0) -> "AdamState":
        if learning_rate <= 0 or l2 < 0:
            raise ValueError("learning_rate must be > 0 and l2 >= 0")
        zeros = [np.zeros_like(p) for p in net.params()]
        return cls(learning_rate, l2, m=zeros, v=[z.copy() for z in zeros])

    def copy(self) -> "AdamState":
        return AdamState(self.learning_rate, self.l2, self.beta1, self.beta2, self.eps,
                         self.step, [a.copy() for a in self.m], [a.copy() for a in self.v])


def adam_step(net: Mlp, grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place. L2 enters as ``grad + l2 * param``."""
    if not net.trainable:
        raise FrozenNetworkError("cannot update a frozen network")
    params = net.params()
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValueError("gradient/state list does not match network parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if state.l2:
            g = g + state.l2 * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state
