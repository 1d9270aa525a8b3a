"""Dense feed-forward networks with hand-written backpropagation.

The model is a stack of affine layers with relu/tanh/linear activations and
an optional frozen ``k x k`` output map. The frozen map takes part in the
forward pass and in the chain rule, but it is never a trainable parameter.
"""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError

ACTIVATIONS = ("relu", "tanh", "linear")
FORMAT_TAG = "spectralnet-mlp"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = "relu"

    def __post_init__(self):
        if int(self.width) < 1:
            raise ValueError(f"layer width must be >= 1, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def __str__(self):
        return f"{self.activation}:{self.width}"


def parse_layers(text):
    """Parse ``"relu:64,tanh:2"`` into a list of LayerSpec."""
    layers = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        act, _, width = item.partition(":")
        if not width:
            raise ValueError(f"layer {item!r} must look like activation:width")
        layers.append(LayerSpec(int(width), act))
    return layers


class Mlp:
    """Weights are stored as ``W[l]`` of shape (fan_in, fan_out) and ``b[l]``."""

    def __init__(self, input_dim, layers, weights, biases, frozen_output=None):
        self.input_dim = int(input_dim)
        self.layers = list(layers)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.frozen_output = None if frozen_output is None else np.asarray(frozen_output, dtype=np.float64)
        fan_in = self.input_dim
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            if w.shape != (fan_in, spec.width) or b.shape != (spec.width,):
                raise DimensionMismatch(f"layer {spec} has weight {w.shape}, bias {b.shape}")
            fan_in = spec.width
        if self.frozen_output is not None and self.frozen_output.shape != (fan_in, fan_in):
            raise DimensionMismatch(f"frozen output must be {fan_in}x{fan_in}")

    @classmethod
    def init(cls, input_dim, layers, rng):
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        fan_in = input_dim
        for spec in layers:
            limit = np.sqrt(6.0 / (fan_in + spec.width))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, spec.width)))
            biases.append(np.zeros(spec.width))
            fan_in = spec.width
        return cls(input_dim, layers, weights, biases)

    @property
    def output_dim(self):
        return self.layers[-1].width if self.layers else self.input_dim

    def params(self):
        """Trainable arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return Mlp(
            self.input_dim,
            self.layers,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.frozen_output is None else self.frozen_output.copy(),
        )

    def __call__(self, x):
        return forward(self, x)[0]

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        same_frozen = (self.frozen_output is None and other.frozen_output is None) or (
            self.frozen_output is not None
            and other.frozen_output is not None
            and np.array_equal(self.frozen_output, other.frozen_output)
        )
        return (
            self.input_dim == other.input_dim
            and self.layers == other.layers
            and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
            and same_frozen
        )


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z, a, grad):
    if name == "relu":
        return grad * (z > 0)
    if name == "tanh":
        return grad * (1.0 - a * a)
    return grad


def forward(model, x, frozen=True):
    """Run the network; returns ``(output, cache)``.

    With ``frozen=False`` the frozen output map is skipped, which gives the
    pre-orthogonalization outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected input of width {model.input_dim}, got shape {x.shape}")
    inputs, pre, post = [], [], []
    h = x
    for spec, w, b in zip(model.layers, model.weights, model.biases):
        inputs.append(h)
        z = h @ w + b
        h = _activate(spec.activation, z)
        pre.append(z)
        post.append(h)
    use_frozen = frozen and model.frozen_output is not None
    out = h @ model.frozen_output if use_frozen else h
    return out, {"inputs": inputs, "pre": pre, "post": post, "frozen": use_frozen}


def backward(model, cache, output_grad, return_input_grad=False):
    """Gradients of a scalar loss w.r.t. every trainable array.

    ``output_grad`` is dLoss/dOutput for the forward pass that produced
    ``cache``. The frozen map is differentiated through but gets no gradient.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if cache["frozen"]:
        g = g @ model.frozen_output.T
    grads = [None] * (2 * len(model.layers))
    for l in range(len(model.layers) - 1, -1, -1):
        g = _activation_grad(model.layers[l].activation, cache["pre"][l], cache["post"][l], g)
        grads[2 * l] = cache["inputs"][l].T @ g
        grads[2 * l + 1] = g.sum(axis=0)
        g = g @ model.weights[l].T
    if return_input_grad:
        return grads, g
    return grads


class RMSprop:
    """RMSprop: ``acc = rho*acc + (1-rho)*g^2``; ``w -= lr * g / sqrt(acc + eps)``."""

    def __init__(self, params, rho=0.9, eps=1e-8):
        self.rho = rho
        self.eps = eps
        self.acc = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        for p, g, a in zip(params, grads, self.acc):
            a *= self.rho
            a += (1.0 - self.rho) * g * g
            p -= lr * g / np.sqrt(a + self.eps)


def rmsprop_step(model, grads, state, lr):
    """Apply one RMSprop update to ``model`` in place; returns ``(model, state)``."""
    state.step(model.params(), grads, lr)
    return model, state


@dataclass(frozen=True)
class LrSchedule:
    lr: float = 1e-3
    decay_factor: float = 0.1
    patience: int = 10
    floor: float = 1e-8
    best: float = float("inf")
    wait: int = 0

    def __post_init__(self):
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def schedule_update(sched, history):
    """Consume the newest validation loss in ``history``.

    Returns ``(schedule, stop)``. After ``patience`` epochs without beating
    the best loss, the rate is multiplied by ``decay_factor``; ``stop`` turns
    true once the rate has reached the floor.
    """
    if len(history) == 0:
        raise ValueError("validation history is empty")
    latest = float(history[-1])
    if latest < sched.best:
        sched = replace(sched, best=latest, wait=0)
    else:
        sched = replace(sched, wait=sched.wait + 1)
        if sched.wait >= sched.patience:
            sched = replace(sched, lr=sched.lr * sched.decay_factor, wait=0)
    # "reached" the floor; the slack absorbs 1e-7 * 0.1 != 1e-8 style rounding
    stop = sched.lr <= sched.floor * (1.0 + 1e-9)
    return sched, stop


def _fmt_row(values):
    return " ".join(f"{v:.17g}" for v in values)


def save_model(model, path):
    """Write the plain-text format: one header line, then one line per matrix row.

    Layer by layer: ``fan_in`` weight rows then one bias row; finally ``k``
    rows of the frozen output map if present.
    """
    layers = ",".join(str(s) for s in model.layers)
    frozen = "yes" if model.frozen_output is not None else "no"
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION} input={model.input_dim} layers={layers} frozen={frozen}"]
    for w, b in zip(model.weights, model.biases):
        lines.extend(_fmt_row(row) for row in w)
        lines.append(_fmt_row(b))
    if model.frozen_output is not None:
        lines.extend(_fmt_row(row) for row in model.frozen_output)
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError("empty model file", line=1)
    head = lines[0].split()
    if len(head) < 2 or head[0] != FORMAT_TAG:
        raise ParseError(f"not a {FORMAT_TAG} file", line=1)
    if head[1] != str(FORMAT_VERSION):
        raise ParseError(f"unsupported model format version {head[1]}", line=1)
    fields = dict(item.split("=", 1) for item in head[2:])
    try:
        input_dim = int(fields["input"])
        layers = parse_layers(fields["layers"])
        frozen = fields["frozen"] == "yes"
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}", line=1) from None

    pos = 1

    def take(n_rows, width):
        nonlocal pos
        rows = []
        for _ in range(n_rows):
            if pos >= len(lines):
                raise ParseError("unexpected end of model file", line=pos + 1)
            try:
                row = [float(v) for v in lines[pos].split()]
            except ValueError:
                raise ParseError("non-numeric entry", line=pos + 1) from None
            if len(row) != width:
                raise ParseError(f"expected {width} values, got {len(row)}", line=pos + 1)
            rows.append(row)
            pos += 1
        return np.array(rows, dtype=np.float64).reshape(n_rows, width)

    weights, biases = [], []
    fan_in = input_dim
    for spec in layers:
        weights.append(take(fan_in, spec.width))
        biases.append(take(1, spec.width)[0])
        fan_in = spec.width
    frozen_output = take(fan_in, fan_in) if frozen else None
    return Mlp(input_dim, layers, weights, biases, frozen_output)
