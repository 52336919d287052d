"""Network topologies assembled from the layer kernels.

Five layer graphs are supported (``l`` = number of labels):

    GRU_A    gru -> maxpool-time -> dense(l) -> sigmoid
    GRU_B    conv -> batchnorm -> gru -> maxpool-time -> dense(l) -> sigmoid
    TCN_A    4 blocks of [conv -> relu -> bn -> conv -> relu -> bn -> dropout]
             -> time-distributed dense(l) -> maxpool-time -> sigmoid
    TCN_B    conv in front of the TCN_A stack
    GRU_TCN  gru -> time-distributed dense(l) -> sigmoid (no pooling)
             feeding the TCN_A stack

Block k of a TCN stack uses dilation 2^(k-1) in both of its convolutions.
Flat feature vectors enter as sequences: the default encoding reads a
d-dimensional sample as d time steps of one channel, so pooling over time
is a real reduction; ``single-step`` packs it into one step of d channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .numerics import RngStream, ShapeError, as_tensor

TOPOLOGIES = ("GRU_A", "GRU_B", "TCN_A", "TCN_B", "GRU_TCN")
GRU_FAMILY = ("GRU_A", "GRU_B", "GRU_TCN")
TCN_FAMILY = ("TCN_A", "TCN_B")
ENCODINGS = ("sequence-of-scalars", "single-step")


@dataclass(frozen=True)
class NetworkSpec:
    """Declarative description of one topology with its hyperparameters."""

    topology: str
    n_labels: int
    hidden_units: int = 50
    tcn_filters: int = 175
    tcn_blocks: int = 4
    kernel_width: int = 3
    dropout_p: float = 0.05
    pre_conv_filters: int = 32
    input_encoding: str = "sequence-of-scalars"
    input_dim: int | None = None  # required for single-step encoding

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.input_encoding not in ENCODINGS:
            raise ValueError(f"unknown input encoding {self.input_encoding!r}")
        for name in ("n_labels", "hidden_units", "tcn_filters", "tcn_blocks",
                     "kernel_width", "pre_conv_filters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.input_encoding == "single-step" and self.input_dim is None:
            raise ValueError("single-step encoding requires input_dim")

    @property
    def input_channels(self) -> int:
        return 1 if self.input_encoding == "sequence-of-scalars" else int(self.input_dim)


def encode_features(x, encoding: str) -> np.ndarray:
    """Turn an (n, d) feature matrix into an (n, T, C) sequence batch."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"expected an (n, d) feature matrix, got shape {x.shape}")
    if encoding == "sequence-of-scalars":
        return x[:, :, None]
    if encoding == "single-step":
        return x[:, None, :]
    raise ValueError(f"unknown input encoding {encoding!r}")


class Layer:
    """Minimal layer interface: a name, optional parameter tensors, and a
    forward/backward pair that caches whatever backward needs."""

    name: str

    def param_tensors(self) -> dict:
        return {}

    def state_tensors(self) -> dict:
        """Non-trainable arrays that still belong in a serialized model."""
        return {}

    @property
    def trainable(self) -> bool:
        return bool(self.param_tensors())

    def forward(self, x, train: bool = False, rng: RngStream | None = None):
        raise NotImplementedError

    def backward(self, upstream):
        raise NotImplementedError


class GruLayer(Layer):
    def __init__(self, name: str, hidden: int, channels: int, rng: RngStream):
        self.name = name
        self.p = L.GruParams.glorot(hidden, channels, rng)
        self.grads: dict = {}
        self._cache = None

    def param_tensors(self) -> dict:
        return self.p.tensors()

    def forward(self, x, train=False, rng=None):
        out, self._cache = L.gru_forward(self.p, x)
        return out

    def backward(self, upstream):
        g = L.gru_backward(self.p, self._cache, upstream)
        self.grads = g.params
        return g.x


class Conv1dLayer(Layer):
    def __init__(self, name: str, filters: int, in_channels: int, width: int,
                 dilation: int, rng: RngStream):
        self.name = name
        self.p = L.ConvParams.glorot(filters, in_channels, width, dilation, rng)
        self.grads: dict = {}
        self._cache = None

    @property
    def dilation(self) -> int:
        return self.p.dilation

    def param_tensors(self) -> dict:
        return self.p.tensors()

    def forward(self, x, train=False, rng=None):
        out, self._cache = L.conv1d_forward(self.p, x)
        return out

    def backward(self, upstream):
        g = L.conv1d_backward(self.p, self._cache, upstream)
        self.grads = g.params
        return g.x


class BatchNormLayer(Layer):
    def __init__(self, name: str, channels: int):
        self.name = name
        self.p = L.BatchNormParams.create(channels)
        self.grads: dict = {}
        self._cache = None

    def param_tensors(self) -> dict:
        return self.p.tensors()

    def state_tensors(self) -> dict:
        return {"running_mean": self.p.running_mean, "running_var": self.p.running_var}

    def forward(self, x, train=False, rng=None):
        out, self._cache = L.batchnorm_forward(self.p, x, train)
        return out

    def backward(self, upstream):
        g = L.batchnorm_backward(self.p, self._cache, upstream)
        self.grads = g.params
        return g.x


class DenseLayer(Layer):
    """Affine map; applied per time step when the input is a sequence."""

    def __init__(self, name: str, out_dim: int, in_dim: int, rng: RngStream):
        self.name = name
        self.weights = L.glorot_uniform((out_dim, in_dim), rng)
        self.bias = np.zeros(out_dim)
        self.grads: dict = {}
        self._cache = None

    def param_tensors(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}

    def forward(self, x, train=False, rng=None):
        out, self._cache = L.dense_forward(self.weights, self.bias, x)
        return out

    def backward(self, upstream):
        g = L.dense_backward(self.weights, self._cache, upstream)
        self.grads = g.params
        return g.x


class ReluLayer(Layer):
    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def forward(self, x, train=False, rng=None):
        self._cache = as_tensor(x)
        return L.relu(self._cache)

    def backward(self, upstream):
        return L.relu_backward(self._cache, upstream)


class SigmoidLayer(Layer):
    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def forward(self, x, train=False, rng=None):
        self._cache = L.sigmoid(x)
        return self._cache

    def backward(self, upstream):
        return L.sigmoid_backward(self._cache, upstream)


class DropoutLayer(Layer):
    def __init__(self, name: str, p: float):
        self.name = name
        self.p = p
        self._mask = None

    def forward(self, x, train=False, rng=None):
        out, self._mask = L.dropout(x, self.p, rng, train)
        return out

    def backward(self, upstream):
        return L.dropout_backward(self._mask, self.p, upstream)


class MaxPoolTimeLayer(Layer):
    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def forward(self, x, train=False, rng=None):
        out, self._cache = L.maxpool_time(x)
        return out

    def backward(self, upstream):
        return L.maxpool_time_backward(self._cache, upstream)


class Network:
    """An ordered layer graph mapping (n, d) features to (n, l) scores."""

    def __init__(self, spec: NetworkSpec, layer_list: list):
        self.spec = spec
        self.layers = layer_list

    def forward(self, features, train: bool = False, rng: RngStream | None = None) -> np.ndarray:
        x = encode_features(features, self.spec.input_encoding)
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, upstream) -> np.ndarray:
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return upstream

    def trainable_layers(self) -> list:
        return [layer for layer in self.layers if layer.trainable]

    def param_items(self) -> list:
        """Ordered ("layer.tensor", array) pairs over trainable tensors."""
        items = []
        for layer in self.layers:
            for tname, arr in layer.param_tensors().items():
                items.append((f"{layer.name}.{tname}", arr))
        return items

    def state_items(self) -> list:
        items = []
        for layer in self.layers:
            for tname, arr in layer.state_tensors().items():
                items.append((f"{layer.name}.{tname}", arr))
        return items

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.param_items())


def _tcn_stack(spec: NetworkSpec, in_channels: int, rng: RngStream) -> tuple[list, int]:
    stack: list = []
    channels = in_channels
    for k in range(1, spec.tcn_blocks + 1):
        dilation = 2 ** (k - 1)
        stack += [
            Conv1dLayer(f"block{k}_conv1", spec.tcn_filters, channels,
                        spec.kernel_width, dilation, rng),
            ReluLayer(f"block{k}_relu1"),
            BatchNormLayer(f"block{k}_bn1", spec.tcn_filters),
            Conv1dLayer(f"block{k}_conv2", spec.tcn_filters, spec.tcn_filters,
                        spec.kernel_width, dilation, rng),
            ReluLayer(f"block{k}_relu2"),
            BatchNormLayer(f"block{k}_bn2", spec.tcn_filters),
            DropoutLayer(f"block{k}_dropout", spec.dropout_p),
        ]
        channels = spec.tcn_filters
    return stack, channels


def _tcn_head(spec: NetworkSpec, channels: int, rng: RngStream) -> list:
    # Time-distributed dense first, then the pool, then the output sigmoid.
    return [
        DenseLayer("head_dense", spec.n_labels, channels, rng),
        MaxPoolTimeLayer("pool"),
        SigmoidLayer("out_sigmoid"),
    ]


def build_network(spec: NetworkSpec, rng: RngStream) -> Network:
    """Initialize a network for the spec's topology; identical (spec, rng)
    pairs produce bitwise-identical parameters."""
    c_in = spec.input_channels

    if spec.topology == "GRU_A":
        net_layers: list = [
            GruLayer("gru", spec.hidden_units, c_in, rng),
            MaxPoolTimeLayer("pool"),
            DenseLayer("out_dense", spec.n_labels, spec.hidden_units, rng),
            SigmoidLayer("out_sigmoid"),
        ]
    elif spec.topology == "GRU_B":
        net_layers = [
            Conv1dLayer("pre_conv", spec.pre_conv_filters, c_in, spec.kernel_width, 1, rng),
            BatchNormLayer("pre_bn", spec.pre_conv_filters),
            GruLayer("gru", spec.hidden_units, spec.pre_conv_filters, rng),
            MaxPoolTimeLayer("pool"),
            DenseLayer("out_dense", spec.n_labels, spec.hidden_units, rng),
            SigmoidLayer("out_sigmoid"),
        ]
    elif spec.topology == "TCN_A":
        stack, channels = _tcn_stack(spec, c_in, rng)
        net_layers = stack + _tcn_head(spec, channels, rng)
    elif spec.topology == "TCN_B":
        pre = Conv1dLayer("pre_conv", spec.pre_conv_filters, c_in, spec.kernel_width, 1, rng)
        stack, channels = _tcn_stack(spec, spec.pre_conv_filters, rng)
        net_layers = [pre] + stack + _tcn_head(spec, channels, rng)
    elif spec.topology == "GRU_TCN":
        front = [
            GruLayer("gru", spec.hidden_units, c_in, rng),
            DenseLayer("gru_dense", spec.n_labels, spec.hidden_units, rng),
            SigmoidLayer("gru_sigmoid"),
        ]
        stack, channels = _tcn_stack(spec, spec.n_labels, rng)
        net_layers = front + stack + _tcn_head(spec, channels, rng)
    else:
        raise ValueError(f"unknown topology {spec.topology!r}")

    return Network(spec, net_layers)
