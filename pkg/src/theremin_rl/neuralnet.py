"""Minimal dense-network engine: forward, exact backprop, Adam, Polyak.

All networks share one fixed topology -- three ReLU hidden layers of 64 units
-- differing only in input/output width and output squashing (tanh for the
actor, identity for the critic).  Everything is float64 numpy; parameters are
plain arrays so copies and blends stay trivial.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

HIDDEN_UNITS = 64
N_HIDDEN = 3

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class OutputActivation(str, enum.Enum):
    IDENTITY = "identity"
    TANH = "tanh"


@dataclass
class Mlp:
    """Weights, biases and Adam moment accumulators of one network."""

    weights: list         # W_i with shape (fan_in, fan_out); x @ W + b
    biases: list
    out_act: OutputActivation
    adam_m: list = field(default_factory=list)
    adam_v: list = field(default_factory=list)
    adam_t: int = 0

    def __post_init__(self):
        if not self.adam_m:
            self.adam_m = [np.zeros_like(p) for p in self._params()]
            self.adam_v = [np.zeros_like(p) for p in self._params()]

    def _params(self):
        return self.weights + self.biases

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.out_act,
            [m.copy() for m in self.adam_m],
            [v.copy() for v in self.adam_v],
            self.adam_t,
        )


@dataclass
class Gradients:
    """Same tree shape as the owning network's weights and biases."""

    weights: list
    biases: list

    def scaled(self, factor: float) -> "Gradients":
        return Gradients([w * factor for w in self.weights],
                         [b * factor for b in self.biases])


def init_mlp(in_dim: int, out_dim: int,
             out_act: OutputActivation = OutputActivation.IDENTITY,
             seed: int | None = None,
             hidden: int = HIDDEN_UNITS, n_hidden: int = N_HIDDEN) -> Mlp:
    """Glorot-uniform weights, zero biases; reproducible for a given seed."""
    rng = np.random.default_rng(seed)
    sizes = [in_dim] + [hidden] * n_hidden + [out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, out_act)


def forward(net: Mlp, x: np.ndarray):
    """Return (y, cache); accepts a single vector or a (batch, in_dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input width {h.shape[1]} != network input {net.in_dim}")
    pre = []          # pre-activations, one per layer
    acts = [h]        # layer inputs (post-activation of the previous layer)
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        if i < n_layers - 1:
            h = np.maximum(z, 0.0)
        elif net.out_act is OutputActivation.TANH:
            h = np.tanh(z)
        else:
            h = z
        acts.append(h)
    y = h[0] if single else h
    return y, (acts, pre, single)


def backward(net: Mlp, cache, dL_dy: np.ndarray):
    """Exact reverse-mode gradients; returns (Gradients, dL_dx).

    ``dL_dy`` is the cotangent of the network output, matching the shape the
    forward call produced.  Batch rows accumulate by summation; divide the
    cotangent by the batch size beforehand for mean losses.
    """
    acts, pre, single = cache
    g = np.asarray(dL_dy, dtype=np.float64)
    if single:
        g = g.reshape(1, -1)
    if g.shape != acts[-1].shape:
        raise ValueError("cotangent shape does not match the forward output")
    n_layers = len(net.weights)
    if net.out_act is OutputActivation.TANH:
        g = g * (1.0 - acts[-1] ** 2)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = acts[i].T @ g
        grad_b[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
        if i > 0:
            g = g * (pre[i - 1] > 0.0)
    dL_dx = g[0] if single else g
    return Gradients(grad_w, grad_b), dL_dx


def adam_step(net: Mlp, grads: Gradients, lr: float) -> Mlp:
    """One standard Adam update (in place); returns the network."""
    net.adam_t += 1
    t = net.adam_t
    params = net.weights + net.biases
    gs = grads.weights + grads.biases
    for p, g, m, v in zip(params, gs, net.adam_m, net.adam_v):
        if p.shape != g.shape:
            raise ValueError("gradient shape does not match parameters")
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g ** 2
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return net


def polyak_blend(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- (1 - tau) * target + tau * online, elementwise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for pt, po in zip(target._params(), online._params()):
        if pt.shape != po.shape:
            raise ValueError("network shapes differ")
        pt *= 1.0 - tau
        pt += tau * po
    return target


# ---------------------------------------------------------------------------
# serialization: shape header + little-endian float64 payload
# ---------------------------------------------------------------------------

_MAGIC = b"MLPB"
_ACT_CODES = {OutputActivation.IDENTITY: 0, OutputActivation.TANH: 1}


def save_mlp(net: Mlp, path) -> None:
    """Weights-only snapshot (Adam moments are not persisted)."""
    arrays = net.weights + net.biases
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", 1, _ACT_CODES[net.out_act], len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_mlp(path) -> Mlp:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a network snapshot")
        version, act_code, n_arrays = struct.unpack("<III", fh.read(12))
        if version != 1:
            raise ValueError(f"unsupported snapshot version {version}")
        shapes = []
        for _ in range(n_arrays):
            ndim, = struct.unpack("<I", fh.read(4))
            shapes.append(struct.unpack(f"<{ndim}I", fh.read(4 * ndim)))
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            arrays.append(data.reshape(shape).astype(np.float64))
    out_act = {v: k for k, v in _ACT_CODES.items()}[act_code]
    n_layers = n_arrays // 2
    return Mlp(arrays[:n_layers], arrays[n_layers:], out_act)
