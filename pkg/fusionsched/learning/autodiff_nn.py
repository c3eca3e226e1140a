"""
Dense tanh networks with hand-written reverse-mode gradients and Adam.

Layers compute a_l = tanh(a_{l-1} W_l + b_l); the last layer is affine
(raw logits or a scalar value). Inputs may be one vector or a batch of rows.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import UsageError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(eq=False)
class Mlp:
    """Weights W_l have shape (fan_in, fan_out); biases shape (fan_out,)."""
    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise UsageError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise UsageError("parameter count does not match layer sizes")
        for idx, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if self.weights[idx].shape != (fan_in, fan_out) or self.biases[idx].shape != (fan_out,):
                raise UsageError(f"layer {idx} parameters do not have shape ({fan_in}, {fan_out})")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> List[np.ndarray]:
        """W_0, b_0, W_1, b_1, ... in checkpoint order."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.parameters()])

    @classmethod
    def from_flat(cls, layer_sizes: Sequence[int], values: np.ndarray) -> "Mlp":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        weights, biases, offset = [], [], 0
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(values[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            offset += fan_in * fan_out
            biases.append(values[offset:offset + fan_out].copy())
            offset += fan_out
        if offset != values.size:
            raise UsageError(f"expected {offset} parameters for {tuple(layer_sizes)}, got {values.size}")
        return cls(tuple(layer_sizes), weights, biases)


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights U(-sqrt(6/(fan_in+fan_out)), +...), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(layer_sizes), weights, biases)


@dataclass(eq=False)
class GradTape:
    """Activations a_0 .. a_{L-1} of one forward pass, consumed by a single backward."""
    mlp: Mlp
    activations: List[np.ndarray]
    output_shape: Tuple[int, ...]
    batched: bool
    used: bool = False


@dataclass(eq=False)
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def as_list(self) -> List[np.ndarray]:
        grads = []
        for gW, gb in zip(self.weights, self.biases):
            grads.extend([gW, gb])
        return grads

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.as_list())))


def forward(mlp: Mlp, x) -> Tuple[np.ndarray, GradTape]:
    """
    Evaluate the network on one input vector or a (batch, in) matrix.

    Returns:
        (output, tape): output has shape (out,) or (batch, out)

    Raises:
        UsageError: the input width does not match the first layer
    """
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    if x.ndim not in (1, 2) or x.shape[-1] != mlp.n_inputs:
        raise UsageError(f"input of shape {x.shape} does not fit a network with {mlp.n_inputs} inputs")
    a = x if batched else x[None, :]
    activations = [a]
    last = mlp.n_layers - 1
    for idx, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ W + b
        a = z if idx == last else np.tanh(z)
        if idx != last:
            activations.append(a)
    out = a if batched else a[0]
    return out, GradTape(mlp=mlp, activations=activations, output_shape=out.shape, batched=batched)


def predict(mlp: Mlp, x) -> np.ndarray:
    return forward(mlp, x)[0]


def backward(tape: GradTape, grad_output) -> Gradients:
    """
    Reverse-mode gradients of a scalar loss w.r.t. every parameter, given
    dLoss/dOutput for the recorded pass.
    """
    if tape.used:
        raise UsageError("gradient tape already consumed; run forward again")
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != tape.output_shape:
        raise UsageError(f"upstream gradient shape {grad_output.shape} != output shape {tape.output_shape}")
    tape.used = True

    mlp = tape.mlp
    g = grad_output if tape.batched else grad_output[None, :]
    grad_w: List[Optional[np.ndarray]] = [None] * mlp.n_layers
    grad_b: List[Optional[np.ndarray]] = [None] * mlp.n_layers
    for idx in range(mlp.n_layers - 1, -1, -1):
        a_in = tape.activations[idx]
        grad_w[idx] = a_in.T @ g
        grad_b[idx] = g.sum(axis=0)
        if idx > 0:
            g = (g @ mlp.weights[idx].T) * (1.0 - a_in * a_in)
    return Gradients(weights=grad_w, biases=grad_b)


@dataclass(eq=False)
class AdamState:
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_mlp(cls, mlp: Mlp) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in mlp.parameters()],
                   v=[np.zeros_like(p) for p in mlp.parameters()])


def adam_step(mlp: Mlp, grads: Gradients, state: AdamState, lr: float) -> Mlp:
    """One Adam update (beta1 0.9, beta2 0.999, eps 1e-8), applied in place."""
    params = mlp.parameters()
    flat_grads = grads.as_list()
    if len(flat_grads) != len(params) or any(g.shape != p.shape for g, p in zip(flat_grads, params)):
        raise UsageError("gradients are not congruent with the network parameters")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    bias1 = 1.0 - ADAM_BETA1 ** state.t
    bias2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(params, flat_grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
    return mlp
