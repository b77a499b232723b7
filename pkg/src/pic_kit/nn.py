"""Small multilayer perceptrons with hand-written reverse-mode gradients.

Hidden layers apply ``tanh`` or ``relu``; the output layer is affine.
Networks are treated as values: :func:`sgd_step` returns a new network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PicError, ShapeMismatch

ACTIVATIONS = ("tanh", "relu")
DEFAULT_CLIP = 10000.0


class BadArchitecture(PicError, ValueError):
    pass


class StaleCache(PicError, RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FeedforwardNet:
    layer_dims: tuple[int, ...]
    activation: str
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int | None = None

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def params(self):
        return list(self.weights) + list(self.biases)


@dataclass(frozen=True, eq=False)
class GradientSet:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def scaled(self, c: float) -> "GradientSet":
        return GradientSet(
            tuple(c * w for w in self.weights), tuple(c * b for b in self.biases)
        )


@dataclass(eq=False)
class ForwardCache:
    net: FeedforwardNet
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # pre-activation of each layer
    clip_mask: np.ndarray | None = None  # True where the output was not clipped


def _check_arch(layer_dims, activation) -> tuple[int, ...]:
    dims = tuple(int(w) for w in layer_dims)
    if len(dims) < 2:
        raise BadArchitecture(f"need input and output widths, got {list(layer_dims)}")
    if any(w < 1 for w in dims):
        raise BadArchitecture(f"widths must be positive, got {list(dims)}")
    if activation not in ACTIVATIONS:
        raise BadArchitecture(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
    return dims


def init(layer_dims, activation: str = "tanh", seed: int = 0) -> FeedforwardNet:
    """Weights and biases uniform on ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    dims = _check_arch(layer_dims, activation)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        # random biases break the odd symmetry a zero-bias tanh/relu net has at x = 0
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return FeedforwardNet(dims, activation, tuple(weights), tuple(biases), seed)


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    # subgradient of relu at 0 is taken as 0
    return (z > 0).astype(z.dtype)


def forward(net: FeedforwardNet, batch, clip: float | None = None):
    """Run ``batch`` (``n x input_dim``) through ``net``.

    Returns the ``n x output_dim`` outputs and a cache for :func:`backward`.
    With ``clip`` set, outputs are clipped to ``[-clip, clip]``.
    """
    h = np.asarray(batch, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[1] != net.input_dim:
        raise ShapeMismatch(f"batch width {h.shape[1]} != input dim {net.input_dim}")
    cache = ForwardCache(net)
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(h)
        z = h @ W + b
        cache.pre.append(z)
        h = z if k == last else _act(net.activation, z)
    if clip is not None:
        cache.clip_mask = np.abs(h) <= clip
        h = np.clip(h, -clip, clip)
    return h, cache


def backward(net: FeedforwardNet, cache: ForwardCache, upstream) -> GradientSet:
    """Gradients of ``sum(upstream * output)`` with respect to every parameter."""
    if cache.net is not net:
        raise StaleCache("cache was produced by a different network")
    delta = np.asarray(upstream, dtype=np.float64)
    n = cache.inputs[0].shape[0]
    if delta.shape != (n, net.output_dim):
        raise ShapeMismatch(f"upstream shape {delta.shape} != {(n, net.output_dim)}")
    if cache.clip_mask is not None:
        delta = delta * cache.clip_mask
    gw = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        gw[k] = cache.inputs[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            dh = delta @ net.weights[k].T
            delta = dh * _act_grad(net.activation, cache.pre[k - 1], cache.inputs[k])
    return GradientSet(tuple(gw), tuple(gb))


def _check_grad_shapes(net: FeedforwardNet, grads: GradientSet) -> None:
    ok = len(grads.weights) == len(net.weights) and all(
        g.shape == w.shape for g, w in zip(grads.weights + grads.biases, net.weights + net.biases)
    )
    if not ok:
        raise ShapeMismatch("gradient shapes do not match the network")


def sgd_step(net: FeedforwardNet, grads: GradientSet, lr: float) -> FeedforwardNet:
    """Return a copy of ``net`` with every parameter moved by ``-lr * grad``."""
    _check_grad_shapes(net, grads)
    return FeedforwardNet(
        net.layer_dims,
        net.activation,
        tuple(w - lr * g for w, g in zip(net.weights, grads.weights)),
        tuple(b - lr * g for b, g in zip(net.biases, grads.biases)),
        net.seed,
    )


def add_grads(a: GradientSet, b: GradientSet) -> GradientSet:
    return GradientSet(
        tuple(x + y for x, y in zip(a.weights, b.weights)),
        tuple(x + y for x, y in zip(a.biases, b.biases)),
    )


# -- checkpoints ---------------------------------------------------------------


def to_dict(net: FeedforwardNet) -> dict:
    return {
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "seed": net.seed,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_dict(doc: dict) -> FeedforwardNet:
    dims = _check_arch(doc["layer_dims"], doc["activation"])
    weights = tuple(np.asarray(w, dtype=np.float64) for w in doc["weights"])
    biases = tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"])
    for k, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        if weights[k].shape != (fi, fo) or biases[k].shape != (fo,):
            raise ShapeMismatch(f"layer {k} arrays do not match widths {fi}->{fo}")
    return FeedforwardNet(dims, doc["activation"], weights, biases, doc.get("seed"))


def save(net: FeedforwardNet, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_dict(net)))
    return path


def load(path) -> FeedforwardNet:
    return from_dict(json.loads(Path(path).read_text()))
