"""Minimal dense network engine: forward, exact backprop, Adam, Gumbel-softmax.

Everything is float64 numpy. A network is a stack of dense layers; a layer may
be marked residual, in which case its output is the concatenation
[activation(x @ W + b), x]. Supported activations: relu, tanh,
leaky_relu (slope 0.2), linear, and gumbel_softmax (a row-wise tempered
softmax; the Gumbel noise itself is injected by callers into the logits, which
keeps forward passes pure).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("relu", "tanh", "leaky_relu", "linear", "gumbel_softmax")


class NeuralNetError(ValueError):
    pass


def _act_forward(z: np.ndarray, kind: str, tau: float | None) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "linear":
        return z
    if kind == "gumbel_softmax":
        s = z / tau
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)
    raise NeuralNetError(f"unknown activation '{kind}'")


def _act_backward(g: np.ndarray, z: np.ndarray, a: np.ndarray, kind: str, tau: float | None) -> np.ndarray:
    """Vector-Jacobian product: gradient w.r.t. pre-activation z."""
    if kind == "relu":
        return g * (z > 0)
    if kind == "tanh":
        return g * (1.0 - a * a)
    if kind == "leaky_relu":
        return g * np.where(z > 0, 1.0, LEAKY_SLOPE)
    if kind == "linear":
        return g
    if kind == "gumbel_softmax":
        inner = (g * a).sum(axis=1, keepdims=True)
        return (g - inner) * a / tau
    raise NeuralNetError(f"unknown activation '{kind}'")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str
    tau: float | None = None
    residual: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise NeuralNetError(f"unknown activation '{self.activation}'")
        if self.activation == "gumbel_softmax" and not (self.tau and self.tau > 0):
            raise NeuralNetError("gumbel_softmax needs a positive temperature")

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def width(self) -> int:
        return self.weight.shape[1]

    @property
    def out_width(self) -> int:
        # Residual layers concatenate their input after the activation.
        return self.width + (self.fan_in if self.residual else 0)


@dataclass
class DenseNet:
    layers: list[Layer]
    _cache: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = field(
        default=None, repr=False
    )

    @property
    def input_width(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def parameter_count(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)


@dataclass
class GradientTape:
    """Per-parameter gradient buffers, one (dW, db) pair per layer."""

    grads: list[tuple[np.ndarray, np.ndarray]]

    def check_shapes(self, net: DenseNet) -> None:
        if len(self.grads) != len(net.layers):
            raise NeuralNetError("tape layer count does not match network")
        for (dw, db), layer in zip(self.grads, net.layers):
            if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
                raise NeuralNetError("tape shapes do not match network parameters")

    def scaled_add(self, other: "GradientTape", scale: float) -> "GradientTape":
        return GradientTape(
            [
                (dw + scale * ow, db + scale * ob)
                for (dw, db), (ow, ob) in zip(self.grads, other.grads)
            ]
        )


@dataclass
class AdamState:
    first_moment: list[tuple[np.ndarray, np.ndarray]]
    second_moment: list[tuple[np.ndarray, np.ndarray]]
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise NeuralNetError("betas must lie in [0, 1)")


def build_net(
    input_width: int,
    layer_specs: list[tuple[int, str] | tuple[int, str, bool]],
    seed: int = 0,
    tau: float = 0.2,
) -> DenseNet:
    """Construct a network from (width, activation[, residual]) layer specs.

    Weights are initialized uniformly in +-sqrt(6 / (fan_in + fan_out)),
    deterministically per seed.
    """
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_width
    for spec in layer_specs:
        width, activation = spec[0], spec[1]
        residual = bool(spec[2]) if len(spec) > 2 else False
        bound = np.sqrt(6.0 / (fan_in + width))
        weight = rng.uniform(-bound, bound, size=(fan_in, width))
        bias = np.zeros(width)
        layer = Layer(
            weight=weight,
            bias=bias,
            activation=activation,
            tau=tau if activation == "gumbel_softmax" else None,
            residual=residual,
        )
        layers.append(layer)
        fan_in = layer.out_width
    return DenseNet(layers=layers)


def forward(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    """Run the batch through the network, caching activations for backward."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise NeuralNetError(
            f"batch width {x.shape[1] if x.ndim == 2 else x.shape} does not match "
            f"network input width {net.input_width}"
        )
    cache = []
    for layer in net.layers:
        z = x @ layer.weight + layer.bias
        a = _act_forward(z, layer.activation, layer.tau)
        cache.append((x, z, a))
        x = np.concatenate([a, x], axis=1) if layer.residual else a
    net._cache = cache
    return x


def backward(net: DenseNet, loss_grad: np.ndarray) -> tuple[GradientTape, np.ndarray]:
    """Exact reverse-mode gradients of a scalar loss.

    ``loss_grad`` is dLoss/dOutput for the batch of the preceding forward
    call. Returns the parameter tape and the gradient w.r.t. the network
    input.
    """
    if net._cache is None:
        raise NeuralNetError("no cached forward state; call forward first")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape[1] != net.output_width:
        raise NeuralNetError(
            f"loss gradient width {g.shape[1]} does not match output width {net.output_width}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        x, z, a = net._cache[i]
        if layer.residual:
            g_act = g[:, : layer.width]
            g_pass = g[:, layer.width :]
        else:
            g_act = g
            g_pass = 0.0
        dz = _act_backward(g_act, z, a, layer.activation, layer.tau)
        grads[i] = (x.T @ dz, dz.sum(axis=0))
        g = dz @ layer.weight.T + g_pass
    return GradientTape(grads), g


def adam_step(net: DenseNet, tape: GradientTape, state: AdamState) -> None:
    """Bias-corrected Adam update, applied in place; increments step_count."""
    tape.check_shapes(net)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    for layer, (dw, db), (mw, mb), (vw, vb) in zip(
        net.layers, tape.grads, state.first_moment, state.second_moment
    ):
        mw *= b1
        mw += (1 - b1) * dw
        mb *= b1
        mb += (1 - b1) * db
        vw *= b2
        vw += (1 - b2) * dw * dw
        vb *= b2
        vb += (1 - b2) * db * db
        layer.weight -= state.learning_rate * (mw / correction1) / (
            np.sqrt(vw / correction2) + state.epsilon
        )
        layer.bias -= state.learning_rate * (mb / correction1) / (
            np.sqrt(vb / correction2) + state.epsilon
        )


def init_adam(net: DenseNet, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999) -> AdamState:
    first = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    second = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    return AdamState(
        first_moment=first,
        second_moment=second,
        step_count=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
    )


def gumbel_softmax_sample(logits: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Sample a relaxed one-hot vector: softmax((logits + Gumbel noise) / tau)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NeuralNetError("logits must be finite")
    if tau <= 0:
        raise NeuralNetError(f"temperature must be positive, got {tau}")
    u = rng.random(logits.shape)
    noise = -np.log(-np.log(np.maximum(u, 1e-300)))
    s = (logits + noise) / tau
    s = s - s.max()
    e = np.exp(s)
    return e / e.sum()


def gumbel_noise(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(np.maximum(u, 1e-300)))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def gradient_check(
    net: DenseNet,
    batch: np.ndarray,
    loss_coeffs: np.ndarray | None = None,
    h: float = 1e-4,
) -> float:
    """Compare analytic backprop against central finite differences.

    The scalar probe loss is sum(coeffs * output). Returns the worst relative
    error over every parameter of every layer.
    """
    batch = np.asarray(batch, dtype=np.float64)
    out = forward(net, batch)
    if loss_coeffs is None:
        loss_coeffs = np.cos(np.arange(out.size, dtype=np.float64)).reshape(out.shape)
    tape, _ = backward(net, loss_coeffs)

    def loss() -> float:
        saved = net._cache
        val = float(np.sum(_forward_nocache(net, batch) * loss_coeffs))
        net._cache = saved
        return val

    worst = 0.0
    for layer, (dw, db) in zip(net.layers, tape.grads):
        for param, grad in ((layer.weight, dw), (layer.bias, db)):
            flat = param.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up = loss()
                flat[idx] = orig - h
                down = loss()
                flat[idx] = orig
                fd = (up - down) / (2 * h)
                err = abs(fd - gflat[idx]) / max(abs(fd), abs(gflat[idx]), 1e-6)
                worst = max(worst, err)
    return worst


def _forward_nocache(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    x = batch
    for layer in net.layers:
        z = x @ layer.weight + layer.bias
        a = _act_forward(z, layer.activation, layer.tau)
        x = np.concatenate([a, x], axis=1) if layer.residual else a
    return x


# ---------------------------------------------------------------------------
# Input gradients and the gradient-norm penalty
# ---------------------------------------------------------------------------

_PIECEWISE_LINEAR = ("relu", "leaky_relu", "linear")


def _act_slope(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    return np.ones_like(z)


def input_gradient(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    """Per-row gradient of the scalar network output w.r.t. the input."""
    if net.output_width != 1:
        raise NeuralNetError("input_gradient needs a scalar-output network")
    forward(net, batch)
    _, g = backward(net, np.ones((batch.shape[0], 1)))
    return g


def gradient_penalty(net: DenseNet, batch: np.ndarray) -> tuple[float, GradientTape]:
    """Mean squared deviation of the input-gradient norm from 1, and its
    gradient w.r.t. the network parameters.

    Valid for plain (non-residual) scalar-output stacks of piecewise-linear
    activations, where the local input-output map is linear in the parameters
    and the activation pattern carries no second-order term.
    """
    if net.output_width != 1:
        raise NeuralNetError("gradient penalty needs a scalar-output network")
    for layer in net.layers:
        if layer.residual or layer.activation not in _PIECEWISE_LINEAR:
            raise NeuralNetError(
                "gradient penalty supports plain piecewise-linear networks only"
            )
    x = np.asarray(batch, dtype=np.float64)
    n = x.shape[0]
    forward(net, x)
    slopes = [_act_slope(z, layer.activation) for layer, (_, z, _) in zip(net.layers, net._cache)]

    # Backward sweep: dz[l] = d(out)/d(z_l) per row.
    dz: list[np.ndarray] = [None] * len(net.layers)
    g = np.ones((n, 1))
    for i in range(len(net.layers) - 1, -1, -1):
        dz[i] = g * slopes[i]
        g = dz[i] @ net.layers[i].weight.T
    input_grad = g

    norms = np.sqrt((input_grad**2).sum(axis=1))
    gp = float(np.mean((norms - 1.0) ** 2))
    coef = np.zeros_like(norms)
    nonzero = norms > 0
    coef[nonzero] = 2.0 * (norms[nonzero] - 1.0) / norms[nonzero] / n
    q = coef[:, None] * input_grad

    # Forward sweep with q: dGP/dW_l = s_{l-1}^T dz_l, biases get zero.
    grads = []
    s = q
    for i, layer in enumerate(net.layers):
        grads.append((s.T @ dz[i], np.zeros_like(layer.bias)))
        s = (s @ layer.weight) * slopes[i]
    return gp, GradientTape(grads)


# ---------------------------------------------------------------------------
# Checkpoint helpers
# ---------------------------------------------------------------------------

def net_to_dict(net: DenseNet) -> dict:
    return {
        "layers": [
            {
                "weight": l.weight.tolist(),
                "bias": l.bias.tolist(),
                "activation": l.activation,
                "tau": l.tau,
                "residual": l.residual,
            }
            for l in net.layers
        ]
    }


def net_from_dict(doc: dict) -> DenseNet:
    layers = [
        Layer(
            weight=np.asarray(l["weight"], dtype=np.float64),
            bias=np.asarray(l["bias"], dtype=np.float64),
            activation=l["activation"],
            tau=l["tau"],
            residual=bool(l["residual"]),
        )
        for l in doc["layers"]
    ]
    return DenseNet(layers=layers)
