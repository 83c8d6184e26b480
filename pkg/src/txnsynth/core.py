"""Dense layers with hand-written backward passes, and seeded random streams.

Matrices are plain 2-D ``float64`` numpy arrays, batch along axis 0.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "sigmoid")


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z.copy()
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(z)
    raise ValueError(f"unknown activation {name!r}")


def activation_derivative(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise dy/dz, given pre-activation ``z`` and output ``y``."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = as_matrix(self.weights)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match weights {self.weights.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: str, rng: "RngStream") -> "DenseLayer":
        # Glorot-uniform weights, zero bias
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.generator.uniform(-limit, limit, size=(in_dim, out_dim))
        return cls(w, np.zeros(out_dim), activation)

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass(frozen=True)
class LayerCache:
    input: np.ndarray
    pre_activation: np.ndarray
    output: np.ndarray


def dense_forward(layer: DenseLayer, x) -> tuple[np.ndarray, LayerCache]:
    x = as_matrix(x)
    if x.shape[1] != layer.in_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with layer weights {layer.weights.shape}"
        )
    z = x @ layer.weights + layer.bias
    y = activate(layer.activation, z)
    return y, LayerCache(x, z, y)


def dense_backward(
    layer: DenseLayer,
    cache: LayerCache,
    dy,
    *,
    per_example: bool = False,
    wrt_pre_activation: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients ``(dW, db, dx)`` of a scalar whose cotangent at the output is ``dy``.

    With ``per_example=True`` the weight and bias gradients keep the batch axis:
    ``dW`` has shape (batch, in, out) and ``db`` (batch, out), each slice being the
    contribution of one row. ``wrt_pre_activation`` means ``dy`` is already the
    cotangent of the pre-activation (used for losses written on logits).
    """
    dy = as_matrix(dy)
    if dy.shape != cache.pre_activation.shape:
        raise ShapeError(
            f"cotangent shape {dy.shape} does not match layer output {cache.pre_activation.shape}"
        )
    if wrt_pre_activation:
        dz = dy
    else:
        dz = dy * activation_derivative(layer.activation, cache.pre_activation, cache.output)
    if per_example:
        dW = np.einsum("bi,bj->bij", cache.input, dz)
        db = dz.copy()
    else:
        dW = cache.input.T @ dz
        db = dz.sum(axis=0)
    dx = dz @ layer.weights.T
    return dW, db, dx


class Mlp:
    """A stack of dense layers evaluated in order."""

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(
                    f"layer widths do not chain: {a.weights.shape} then {b.weights.shape}"
                )
        self.layers = layers

    @classmethod
    def build(cls, widths, hidden_activation, output_activation, rng) -> "Mlp":
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            act = output_activation if i == len(widths) - 2 else hidden_activation
            layers.append(DenseLayer.init(a, b, act, rng))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def set_params(self, params) -> None:
        params = list(params)
        if len(params) != 2 * len(self.layers):
            raise ShapeError(f"expected {2 * len(self.layers)} arrays, got {len(params)}")
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise ShapeError(
                    f"layer {i}: got {w.shape}/{b.shape}, expected "
                    f"{layer.weights.shape}/{layer.bias.shape}"
                )
            layer.weights = w
            layer.bias = b

    def copy(self) -> "Mlp":
        return Mlp([layer.copy() for layer in self.layers])

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def forward(self, x) -> tuple[np.ndarray, list[LayerCache]]:
        caches = []
        h = as_matrix(x)
        for layer in self.layers:
            h, cache = dense_forward(layer, h)
            caches.append(cache)
        return h, caches

    def logits(self, caches: list[LayerCache]) -> np.ndarray:
        return caches[-1].pre_activation

    def backward(self, caches, dy, *, per_example=False, from_logits=False):
        """Returns ``(grads, dx)`` with ``grads`` ordered like :meth:`params`."""
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        g = dy
        for i in range(len(self.layers) - 1, -1, -1):
            dW, db, g = dense_backward(
                self.layers[i],
                caches[i],
                g,
                per_example=per_example,
                wrt_pre_activation=from_logits and i == len(self.layers) - 1,
            )
            grads[2 * i], grads[2 * i + 1] = dW, db
        return grads, g

    def backward_terms(self, caches, dy, *, from_logits=False, offset: int = 0):
        """Per-row gradient terms (see ``optim.GradTerm``) and the input cotangent.

        Parameter indices start at ``offset`` so several networks can share one list.
        """
        from .optim import GradTerm

        terms = []
        g = as_matrix(dy)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            layer, cache = self.layers[i], caches[i]
            if from_logits and i == last:
                dz = g
            else:
                dz = g * activation_derivative(layer.activation, cache.pre_activation, cache.output)
            terms.append(GradTerm(offset + 2 * i, cache.input, dz))
            g = dz @ layer.weights.T
        return terms, g

    def param_shapes(self) -> list[tuple]:
        return [p.shape for p in self.params()]

    def input_gradient(self, caches, dy, *, from_logits=False) -> np.ndarray:
        """Cotangent at the input only; skips the weight-gradient products."""
        g = as_matrix(dy)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            layer, cache = self.layers[i], caches[i]
            if not (from_logits and i == last):
                g = g * activation_derivative(layer.activation, cache.pre_activation, cache.output)
            g = g @ layer.weights.T
        return g


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


@dataclass
class RngStream:
    """Seeded stream over numpy's PCG64 bit generator.

    The state is ``SeedSequence(seed, spawn_key=path)`` so child streams derived
    by name (CRC-32 of the UTF-8 name appended to ``path``) are reproducible on
    every platform numpy supports. Normal variates come from numpy's ziggurat
    transform of the PCG64 output. One stream per thread; never share.
    """

    seed: int
    path: tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    ALGORITHM = "numpy PCG64 / SeedSequence(seed, spawn_key=crc32 path)"

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.path = tuple(int(p) for p in self.path)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, name: str) -> "RngStream":
        return RngStream(self.seed, self.path + (_name_key(name),))

    def normal(self, rows: int, cols: int) -> np.ndarray:
        return gaussian_sample(self, rows, cols)


def gaussian_sample(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ShapeError(f"cannot sample a {rows}x{cols} matrix")
    return rng.generator.standard_normal((rows, cols))
