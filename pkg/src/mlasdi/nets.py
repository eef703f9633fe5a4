"""Fully connected networks with exact reverse-mode gradients.

Networks are plain value objects over float64 numpy arrays.  A network
with layer dims (d0, d1, ..., dL) applies L affine maps, each followed by
its tagged activation; the final layer is always identity so outputs are
unconstrained reals.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ShapeError, ValidationError

ACTIVATION_CODES = {"identity": 0, "tanh": 1, "sine": 2}


@dataclass
class MlpNetwork:
    """A fully connected network: per-layer weights, biases and activation tags.

    weights[i] has shape (layer_dims[i+1], layer_dims[i]); biases[i] has
    length layer_dims[i+1].  activations has one tag per layer and must
    end with "identity".
    """

    layer_dims: tuple
    activations: tuple
    weights: list
    biases: list

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        acts = tuple(self.activations)
        if len(dims) < 2:
            raise ValidationError("a network needs at least one layer (two dims)")
        if any(d < 1 for d in dims):
            raise ValidationError(f"layer dims must be positive, got {dims}")
        n_layers = len(dims) - 1
        if len(acts) != n_layers:
            raise ValidationError(
                f"{n_layers} layers need {n_layers} activation tags, got {len(acts)}"
            )
        for tag in acts:
            if tag not in ACTIVATION_CODES:
                raise ValidationError(f"unknown activation tag {tag!r}")
        if acts[-1] != "identity":
            raise ValidationError("final layer activation must be identity")
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValidationError("weights/biases lists must have one entry per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want_w = (dims[i + 1], dims[i])
            if w.shape != want_w:
                raise ShapeError(f"weights[{i}] has shape {w.shape}, expected {want_w}")
            if b.shape != (dims[i + 1],):
                raise ShapeError(
                    f"biases[{i}] has shape {b.shape}, expected ({dims[i + 1]},)"
                )
        self.layer_dims = dims
        self.activations = acts

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    @property
    def parameter_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return MlpNetwork(
            self.layer_dims,
            self.activations,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def hidden_activations(n_layers, first_hidden="tanh"):
    """Activation tags for a network with ``n_layers`` affine layers.

    The first hidden layer gets ``first_hidden``, later hidden layers tanh,
    and the output layer identity.
    """
    if n_layers < 1:
        raise ValidationError("n_layers must be >= 1")
    if n_layers == 1:
        return ("identity",)
    return (first_hidden,) + ("tanh",) * (n_layers - 2) + ("identity",)


def init_network(layer_dims, activations, rng):
    """Seeded uniform initialization in [-1/sqrt(fan_in), +1/sqrt(fan_in)].

    Weights and biases of each layer share the layer's fan-in bound.  Draw
    order is fixed (per layer: weights then bias) so a seeded rng gives
    bit-identical networks across runs.
    """
    dims = tuple(int(d) for d in layer_dims)
    weights = []
    biases = []
    for i in range(len(dims) - 1):
        bound = 1.0 / np.sqrt(dims[i])
        weights.append(rng.uniform(-bound, bound, size=(dims[i + 1], dims[i])))
        biases.append(rng.uniform(-bound, bound, size=dims[i + 1]))
    return MlpNetwork(dims, tuple(activations), weights, biases)


def zero_network(layer_dims, activations):
    """Network of the given topology with all weights and biases zero."""
    dims = tuple(int(d) for d in layer_dims)
    weights = [np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return MlpNetwork(dims, tuple(activations), weights, biases)


def _check_batch(net, batch):
    if batch.ndim != 2:
        raise ShapeError(f"batch must be 2-D, got shape {batch.shape}")
    if batch.shape[1] != net.input_dim:
        raise ShapeError(
            f"batch has {batch.shape[1]} columns but layer 0 expects "
            f"{net.input_dim} (batch shape {batch.shape}, "
            f"layer dims {net.layer_dims})"
        )


def forward(net, batch):
    """Run the network on a (B, d_in) batch; returns (B, d_out)."""
    _check_batch(net, batch)
    k = backend.kernels
    x = batch
    for i in range(net.n_layers):
        pre = k.linear_forward(x, net.weights[i], net.biases[i])
        x = k.act_forward(ACTIVATION_CODES[net.activations[i]], pre)
    return x


def forward_with_cache(net, batch):
    """Forward pass that also returns per-layer (input, pre, act) caches."""
    _check_batch(net, batch)
    k = backend.kernels
    x = batch
    cache = []
    for i in range(net.n_layers):
        pre = k.linear_forward(x, net.weights[i], net.biases[i])
        act = k.act_forward(ACTIVATION_CODES[net.activations[i]], pre)
        cache.append((x, pre, act))
        x = act
    return x, cache


def backward(net, batch, upstream, cache=None):
    """Exact reverse-mode gradients of the forward map.

    ``upstream`` is dLoss/dOutput with the forward output's shape.  Returns
    (weight_grads, bias_grads, input_grad); the input gradient lets callers
    chain networks (decoder into encoder).
    """
    if cache is None:
        out, cache = forward_with_cache(net, batch)
    else:
        out = cache[-1][2]
    if upstream.shape != out.shape:
        raise ShapeError(
            f"upstream gradient has shape {upstream.shape}, forward output has "
            f"shape {out.shape}"
        )
    k = backend.kernels
    weight_grads = [None] * net.n_layers
    bias_grads = [None] * net.n_layers
    g = upstream
    for i in range(net.n_layers - 1, -1, -1):
        x, pre, act = cache[i]
        gpre = k.act_backward(ACTIVATION_CODES[net.activations[i]], pre, act, g)
        gw, gb, g = k.linear_backward(x, net.weights[i], gpre)
        weight_grads[i] = gw
        bias_grads[i] = gb
    return weight_grads, bias_grads, g
