"""Dense-network numerics: forward pass, reverse-mode gradients and Adam.

Everything works on float64 arrays and follows value semantics: operations
return new parameter/state objects and never mutate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CacheMismatchError, ShapeError, TrainingDivergenceError

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "identity")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str = "identity"
    slope: float = 0.2  # only read by leaky_relu

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class MlpParams:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        validate_params(self)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def flat(self) -> np.ndarray:
        """All parameters as one vector (weights then bias, layer by layer)."""
        parts = []
        for layer in self.layers:
            parts.append(layer.weight.ravel())
            parts.append(layer.bias.ravel())
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "MlpParams":
        vec = np.asarray(vec, dtype=np.float64)
        layers, pos = [], 0
        for layer in self.layers:
            nw, nb = layer.weight.size, layer.bias.size
            w = vec[pos:pos + nw].reshape(layer.weight.shape).copy()
            pos += nw
            b = vec[pos:pos + nb].copy()
            pos += nb
            layers.append(Layer(w, b, layer.activation, layer.slope))
        if pos != vec.size:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {pos}")
        return MlpParams(tuple(layers))

    def copy(self) -> "MlpParams":
        return MlpParams(tuple(Layer(l.weight.copy(), l.bias.copy(), l.activation, l.slope)
                               for l in self.layers))

    def equal(self, other: "MlpParams") -> bool:
        """Bitwise equality of architecture and parameters."""
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if (a.activation, a.slope) != (b.activation, b.slope):
                return False
            if a.weight.shape != b.weight.shape or a.bias.shape != b.bias.shape:
                return False
            if a.weight.tobytes() != b.weight.tobytes() or a.bias.tobytes() != b.bias.tobytes():
                return False
        return True


def validate_params(params: MlpParams) -> None:
    if not params.layers:
        raise ShapeError("network needs at least one layer")
    prev_out = None
    for i, layer in enumerate(params.layers):
        w, b = layer.weight, layer.bias
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
        if prev_out is not None and w.shape[1] != prev_out:
            raise ShapeError(f"layer {i}: expects width {w.shape[1]}, previous layer gives {prev_out}")
        if layer.activation not in ACTIVATIONS:
            raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
        if layer.activation == "leaky_relu" and not 0.0 < layer.slope < 1.0:
            raise ValueError(f"layer {i}: leaky_relu slope must lie in (0, 1), got {layer.slope}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError(f"layer {i}: non-finite parameters")
        prev_out = w.shape[0]


def init_mlp(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator,
             init_std: float = 0.02, slope: float = 0.2) -> MlpParams:
    """Weights ~ N(0, init_std**2), zero biases. ``sizes`` includes input and output widths."""
    if len(activations) != len(sizes) - 1:
        raise ShapeError("need one activation per layer")
    layers = []
    for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
        w = rng.normal(0.0, init_std, size=(n_out, n_in))
        layers.append(Layer(w, np.zeros(n_out), act, slope))
    return MlpParams(tuple(layers))


def _activate(z: np.ndarray, layer: Layer) -> np.ndarray:
    act = layer.activation
    if act == "identity":
        return z
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "leaky_relu":
        return np.where(z > 0, z, layer.slope * z)
    # sigmoid, split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activation_grad(z: np.ndarray, a: np.ndarray, layer: Layer) -> np.ndarray:
    act = layer.activation
    if act == "identity":
        return np.ones_like(z)
    if act == "relu":
        return (z > 0).astype(np.float64)
    if act == "leaky_relu":
        return np.where(z > 0, 1.0, layer.slope)
    return a * (1.0 - a)


@dataclass
class ForwardCache:
    params: MlpParams
    inputs: list = field(default_factory=list)  # input to each layer
    preacts: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


@dataclass(frozen=True)
class GradientSet:
    d_weights: tuple[np.ndarray, ...]
    d_biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        parts = []
        for dw, db in zip(self.d_weights, self.d_biases):
            parts.append(dw.ravel())
            parts.append(db.ravel())
        return np.concatenate(parts)


def mlp_forward(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_in:
        raise ShapeError(f"input shape {x.shape} does not match network input width {params.n_in}")
    cache = ForwardCache(params)
    for layer in params.layers:
        z = x @ layer.weight.T + layer.bias
        a = _activate(z, layer)
        cache.inputs.append(x)
        cache.preacts.append(z)
        cache.outputs.append(a)
        x = a
    return x, cache


def mlp_backward(params: MlpParams, cache: ForwardCache,
                 upstream: np.ndarray) -> tuple[GradientSet, np.ndarray]:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and inputs."""
    if cache.params is not params or len(cache.inputs) != len(params.layers):
        raise CacheMismatchError("forward cache was not produced by these parameters")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"upstream gradient {g.shape} vs output {cache.outputs[-1].shape}")
    n = len(params.layers)
    dws: list = [None] * n
    dbs: list = [None] * n
    for i in range(n - 1, -1, -1):
        layer = params.layers[i]
        dz = g * _activation_grad(cache.preacts[i], cache.outputs[i], layer)
        dws[i] = dz.T @ cache.inputs[i]
        dbs[i] = dz.sum(axis=0)
        g = dz @ layer.weight
    return GradientSet(tuple(dws), tuple(dbs)), g


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, lr: float = 2e-4, beta1: float = 0.5,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = []
    for layer in params.layers:
        zeros.append(np.zeros_like(layer.weight))
        zeros.append(np.zeros_like(layer.bias))
    return AdamState(tuple(zeros), tuple(np.zeros_like(z) for z in zeros), 0, lr, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: GradientSet,
              state: AdamState) -> tuple[MlpParams, AdamState]:
    if len(grads.d_weights) != len(params.layers):
        raise ShapeError("gradient set does not match network depth")
    for i, (dw, db) in enumerate(zip(grads.d_weights, grads.d_biases)):
        layer = params.layers[i]
        if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
            raise ShapeError(f"layer {i}: gradient shapes do not match parameters")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise TrainingDivergenceError(f"non-finite gradient in layer {i}", layer=i)

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_m, new_v, layers = [], [], []
    for i, layer in enumerate(params.layers):
        updated = []
        for j, (p, g) in enumerate(((layer.weight, grads.d_weights[i]), (layer.bias, grads.d_biases[i]))):
            m = b1 * state.m[2 * i + j] + (1.0 - b1) * g
            v = b2 * state.v[2 * i + j] + (1.0 - b2) * g * g
            new_m.append(m)
            new_v.append(v)
            updated.append(p - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps))
        layers.append(Layer(updated[0], updated[1], layer.activation, layer.slope))
    new_state = AdamState(tuple(new_m), tuple(new_v), t, state.lr, b1, b2, state.eps)
    return MlpParams(tuple(layers)), new_state
