"""Dense layers, losses with analytic gradients, Adam, and L2 weight decay.

Everything runs in float64. Forward/backward accept a single vector or a
batch of row vectors; parameter gradients are summed over the batch rows, so
callers that want a batch mean scale ``output_grad`` by ``1/B`` first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity", "softmax", "sigmoid")
KL_EPS = 1e-7


def xavier_init(fan_in: int, fan_out: int, seed) -> np.ndarray:
    """Glorot-uniform matrix of shape ``(fan_out, fan_in)``."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be >= 1")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return np.random.default_rng(seed).uniform(-bound, bound, size=(fan_out, fan_in))


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "softmax":
        return softmax(z)
    return sigmoid(z)


def _activation_backward(name: str, z: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "relu":
        return g * (z > 0)
    if name == "identity":
        return g
    if name == "softmax":
        return y * (g - np.sum(g * y, axis=-1, keepdims=True))
    return g * y * (1.0 - y)


@dataclass
class DenseLayer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(f"bad layer shapes {self.weights.shape} / {self.biases.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    layers: list[DenseLayer]
    # Bumped whenever parameters change in place; lets backward reject stale tapes.
    version: int = 0

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("an Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(f"layer widths do not chain: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """``[W0, b0, W1, b1, ...]``, the order every gradient list follows."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out


def build_mlp(widths: Sequence[int], activations: Sequence[str], seed) -> Mlp:
    """Xavier-initialized net; ``widths`` includes the input width.

    Layer ``i`` draws its matrix from ``(seed, i)`` so adding layers does not
    reshuffle earlier ones.
    """
    if len(widths) != len(activations) + 1:
        raise ValueError("need one activation per layer")
    seed_words = list(np.atleast_1d(seed))
    layers = [
        DenseLayer(xavier_init(fi, fo, seed_words + [i]), np.zeros(fo), act)
        for i, (fi, fo, act) in enumerate(zip(widths[:-1], widths[1:], activations))
    ]
    return Mlp(layers)


@dataclass
class Tape:
    net_id: int
    version: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]


def mlp_forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (net.in_dim,) or x.ndim > 2:
        raise ValueError(f"input shape {x.shape} does not match net input width {net.in_dim}")
    tape = Tape(id(net), net.version, [], [], [])
    h = x
    for layer in net.layers:
        z = h @ layer.weights.T + layer.biases
        y = _activate(layer.activation, z)
        tape.inputs.append(h)
        tape.pre.append(z)
        tape.post.append(y)
        h = y
    return h, tape


def mlp_backward(
    net: Mlp, tape: Tape, output_grad: np.ndarray, through_output_activation: bool = True
) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse pass. Returns gradients aligned with ``net.parameters()`` and the input gradient.

    With ``through_output_activation=False`` the incoming gradient is taken to be
    with respect to the last layer's pre-activation (e.g. softmax logits).
    """
    if tape.net_id != id(net) or len(tape.pre) != len(net.layers):
        raise ValueError("tape was recorded on a different network")
    if tape.version != net.version:
        raise ValueError("tape is stale: parameters changed since the forward pass")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != tape.post[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {tape.post[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if i < len(net.layers) - 1 or through_output_activation:
            g = _activation_backward(layer.activation, tape.pre[i], tape.post[i], g)
        h = tape.inputs[i]
        if g.ndim == 1:
            grads[2 * i] = np.outer(g, h)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = g.T @ h
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, g


def kl_loss(target: np.ndarray, predicted: np.ndarray):
    """KL(target || predicted) with ``KL_EPS`` inside the logs.

    Returns ``(loss, logit_grad)`` where ``logit_grad = predicted - target`` is
    the gradient with respect to the pre-softmax logits. That is exact for
    ``KL_EPS = 0``; the eps term is a log clamp and is left out of the gradient.
    For a batch the loss is a per-row array.
    """
    target = np.asarray(target, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if target.shape != predicted.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {predicted.shape}")
    loss = np.sum(target * (np.log(target + KL_EPS) - np.log(predicted + KL_EPS)), axis=-1)
    return loss, predicted - target


def mse_loss(target: np.ndarray, predicted: np.ndarray):
    target = np.asarray(target, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if target.shape != predicted.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {predicted.shape}")
    a = target.shape[-1]
    diff = predicted - target
    return np.mean(diff**2, axis=-1), (2.0 / a) * diff


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> AdamState:
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and optimizer state have different lengths")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def l2_penalty(nets: Sequence[Mlp], scale: float, param_grads: Sequence[list[np.ndarray]] | None = None):
    """``scale * sum(W**2)`` over every weight matrix (biases excluded).

    When ``param_grads`` (one gradient list per net, in ``parameters()`` order)
    is given, ``2 * scale * W`` is added to the weight entries in place.
    """
    if scale < 0:
        raise ValueError("scale must be >= 0")
    loss = 0.0
    if scale == 0:
        return loss, param_grads
    for k, net in enumerate(nets):
        for i, layer in enumerate(net.layers):
            loss += scale * float(np.sum(layer.weights**2))
            if param_grads is not None:
                param_grads[k][2 * i] += 2.0 * scale * layer.weights
    return loss, param_grads
