"""Dense feed-forward networks with hand-written reverse mode.

Conventions: inputs are ``batch x features``; a layer computes
``z = a @ W.T + b`` with ``W`` shaped ``(out, in)`` and then ``a = act(z)``.
Everything is float64.

Besides ordinary backprop this module supports the gradient-penalty path:
``input_gradient`` returns d(sum of outputs)/dx per row together with a tape,
and ``input_gradient_backward`` pushes the gradient of any scalar function of
that input gradient back into the parameters (double backprop).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, UnsupportedActivationError
from .rng import make_rng

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
PENALTY_SAFE = ("relu", "tanh", "identity")
CHECKPOINT_VERSION = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    return z


def _dact(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def _d2act(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # relu'' is taken as zero almost everywhere
    if name == "tanh":
        return -2.0 * a * (1.0 - a * a)
    if name == "sigmoid":
        return a * (1.0 - a) * (1.0 - 2.0 * a)
    return np.zeros_like(z)


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    @property
    def input_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    layers: list[Layer]
    seed: int | None = None

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("an Mlp needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise UnsupportedActivationError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.output_dim,):
                raise DimensionError(f"layer {k}: weight {layer.weight.shape} / bias {layer.bias.shape} mismatch")
            if k and self.layers[k - 1].output_dim != layer.input_dim:
                raise DimensionError(
                    f"layer {k}: input dim {layer.input_dim} != layer {k - 1} output dim "
                    f"{self.layers[k - 1].output_dim}"
                )
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise NumericError(f"layer {k}: non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.output_dim for layer in self.layers]

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers], self.seed)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out


# per layer (dW, db)
Grads = list[tuple[np.ndarray, np.ndarray]]


@dataclass
class GradTape:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def batch(self) -> int:
        return self.inputs[0].shape[0]


@dataclass
class SecondOrderTape:
    tape: GradTape
    upstream: list[np.ndarray]  # d(sum y)/d(a_k) per layer
    deltas: list[np.ndarray]  # d(sum y)/d(z_k) per layer


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, GradTape]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"layer 0 expects input width {net.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite network input")
    tape = GradTape()
    a = x
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        tape.inputs.append(a)
        tape.pre.append(z)
        a = _act(layer.activation, z)
        tape.post.append(a)
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite network output")
    return a, tape


def zero_grads(net: Mlp) -> Grads:
    return [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]


def add_grads(a: Grads | None, b: Grads, scale: float = 1.0) -> Grads:
    if a is None:
        return [(scale * dw, scale * db) for dw, db in b]
    return [(aw + scale * bw, ab + scale * bb) for (aw, ab), (bw, bb) in zip(a, b)]


def _check_tape(net: Mlp, tape: GradTape) -> None:
    if len(tape.pre) != len(net.layers):
        raise DimensionError(f"tape has {len(tape.pre)} layers, net has {len(net.layers)}")
    for k, (layer, z) in enumerate(zip(net.layers, tape.pre)):
        if z.shape[1] != layer.output_dim or tape.inputs[k].shape[1] != layer.input_dim:
            raise DimensionError(f"layer {k}: stale tape (cached {z.shape}, layer {layer.weight.shape})")


def backward(
    net: Mlp,
    tape: GradTape,
    dy: np.ndarray,
    dz_extra: list[np.ndarray | None] | None = None,
) -> tuple[Grads, np.ndarray]:
    """Parameter gradients and input gradient given dLoss/dy.

    ``dz_extra`` adds direct contributions to dLoss/dz per layer (used by the
    second-order path).
    """
    _check_tape(net, tape)
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != tape.post[-1].shape:
        raise DimensionError(f"upstream gradient {dy.shape} != output {tape.post[-1].shape}")
    grads: Grads = [None] * len(net.layers)  # type: ignore[list-item]
    da = dy
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        dz = da * _dact(layer.activation, tape.pre[k], tape.post[k])
        if dz_extra is not None and dz_extra[k] is not None:
            dz = dz + dz_extra[k]
        grads[k] = (dz.T @ tape.inputs[k], dz.sum(axis=0))
        da = dz @ layer.weight
    return grads, da


def check_penalty_safe(net: Mlp, what: str = "network") -> None:
    for k, layer in enumerate(net.layers):
        if layer.activation not in PENALTY_SAFE:
            raise UnsupportedActivationError(
                f"{what} layer {k}: activation {layer.activation!r} not allowed on a gradient-penalty path"
            )


def input_gradient(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, SecondOrderTape]:
    """Rows of d(sum of outputs)/dx, plus a tape for double backprop."""
    check_penalty_safe(net)
    y, tape = forward(net, x)
    g = np.ones_like(y)
    upstream: list[np.ndarray] = [None] * len(net.layers)  # type: ignore[list-item]
    deltas: list[np.ndarray] = [None] * len(net.layers)  # type: ignore[list-item]
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        upstream[k] = g
        deltas[k] = g * _dact(layer.activation, tape.pre[k], tape.post[k])
        g = deltas[k] @ layer.weight
    return g, SecondOrderTape(tape, upstream, deltas)


def input_gradient_backward(net: Mlp, tape2: SecondOrderTape, dg: np.ndarray) -> Grads:
    """Parameter gradient of a scalar S(g) given dS/dg, where g = input_gradient(net, x)."""
    tape = tape2.tape
    _check_tape(net, tape)
    grads = zero_grads(net)
    dz_extra: list[np.ndarray | None] = [None] * len(net.layers)
    gbar = np.asarray(dg, dtype=np.float64)
    # replay the backward sweep in forward order, adjointing each step
    for k, layer in enumerate(net.layers):
        delta = tape2.deltas[k]
        dw, db = grads[k]
        grads[k] = (dw + delta.T @ gbar, db)
        dbar = gbar @ layer.weight.T
        s1 = _dact(layer.activation, tape.pre[k], tape.post[k])
        s2 = _d2act(layer.activation, tape.pre[k], tape.post[k])
        dz_extra[k] = dbar * tape2.upstream[k] * s2
        gbar = dbar * s1
    # z_k depend on the parameters through the forward pass
    first, _ = backward(net, tape, np.zeros_like(tape.post[-1]), dz_extra)
    return add_grads(grads, first)


@dataclass
class AdamState:
    first_moment: Grads
    second_moment: Grads
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, learning_rate=1e-3, beta1=0.5, beta2=0.999, epsilon=1e-8) -> "AdamState":
        return cls(zero_grads(net), zero_grads(net), 0, learning_rate, beta1, beta2, epsilon)


def adam_step(net: Mlp, state: AdamState, grads: Grads) -> tuple[Mlp, AdamState]:
    if len(grads) != len(net.layers):
        raise DimensionError(f"{len(grads)} gradient entries for {len(net.layers)} layers")
    for k, ((dw, db), layer) in enumerate(zip(grads, net.layers)):
        if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
            raise DimensionError(f"layer {k}: gradient shape mismatch")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericError(f"layer {k}: non-finite gradient")
    t = state.step_count + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.epsilon, state.learning_rate
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    layers, m_new, v_new = [], [], []
    for layer, (dw, db), (mw, mb), (vw, vb) in zip(net.layers, grads, state.first_moment, state.second_moment):
        mw = b1 * mw + (1.0 - b1) * dw
        mb = b1 * mb + (1.0 - b1) * db
        vw = b2 * vw + (1.0 - b2) * dw * dw
        vb = b2 * vb + (1.0 - b2) * db * db
        w = layer.weight - lr * (mw / c1) / (np.sqrt(vw / c2) + eps)
        b = layer.bias - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
        layers.append(Layer(w, b, layer.activation))
        m_new.append((mw, mb))
        v_new.append((vw, vb))
    new_state = AdamState(m_new, v_new, t, lr, b1, b2, eps)
    return Mlp(layers, net.seed), new_state


def xavier_init(dims: list[int], activations: list[str], rng_seed) -> Mlp:
    """Glorot-uniform weights, zero biases. ``rng_seed`` is an int or a Generator."""
    if len(activations) != len(dims) - 1:
        raise DimensionError(f"{len(dims)} dims need {len(dims) - 1} activations, got {len(activations)}")
    if any(int(d) <= 0 for d in dims):
        raise DimensionError(f"layer widths must be positive: {dims}")
    rng = make_rng(rng_seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), act))
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return Mlp(layers, None if seed is None else int(seed))


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "dims": net.dims,
        "activations": net.activations,
        "weights": [[float(v) for v in l.weight.ravel()] for l in net.layers],
        "biases": [[float(v) for v in l.bias] for l in net.layers],
        "seed": net.seed,
    }


def mlp_from_dict(d: dict) -> Mlp:
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise DimensionError(f"unsupported network checkpoint version {d.get('format_version')!r}")
    dims = d["dims"]
    layers = []
    for k, act in enumerate(d["activations"]):
        w = np.array(d["weights"][k], dtype=np.float64)
        if w.size != dims[k + 1] * dims[k]:
            raise DimensionError(f"layer {k}: {w.size} weights for dims {dims[k]}->{dims[k + 1]}")
        layers.append(Layer(w.reshape(dims[k + 1], dims[k]), np.array(d["biases"][k], dtype=np.float64), act))
    return Mlp(layers, d.get("seed"))
