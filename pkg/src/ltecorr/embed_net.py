"""Edge-convolution embedding network: N x 3 coordinates to N x D features.

Each layer rebuilds a k-nearest-neighbor graph over its input features
(coordinates for the first layer), forms edge features [h_i, h_j - h_i],
pushes them through a shared affine map with leaky-ReLU, and
max-aggregates over the neighbors.  A final affine layer maps to the
output width with no activation.  No normalization layers: determinism
and clean gradient checks outweigh training speed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from . import tensor as tz
from .neighbors import euclidean_knn_array
from .pointcloud import PointCloud
from .tensor import Tensor

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class EmbedConfig:
    """k_graph: per-layer neighbor count; layer_dims: edge-conv widths;
    out_dim: final feature width D; seed: init seed."""

    k_graph: int = 10
    layer_dims: Tuple[int, ...] = (64, 64, 64)
    out_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"EmbedConfig: bad layer_dims {self.layer_dims}")
        object.__setattr__(self, "layer_dims", dims)
        if self.out_dim < 1:
            raise ValueError(f"EmbedConfig: out_dim must be >= 1, got {self.out_dim}")
        if self.k_graph < 1:
            raise ValueError(f"EmbedConfig: k_graph must be >= 1, got {self.k_graph}")

    def param_shapes(self):
        """Ordered (name, shape) pairs for every trainable array."""
        shapes = []
        width_in = 3
        for i, width in enumerate(self.layer_dims):
            shapes.append((f"edge{i}.weight", (2 * width_in, width)))
            shapes.append((f"edge{i}.bias", (width,)))
            width_in = width
        shapes.append(("out.weight", (width_in, self.out_dim)))
        shapes.append(("out.bias", (self.out_dim,)))
        return shapes


@dataclass(frozen=True)
class EmbedParams:
    """Trainable arrays keyed by name, in config order."""

    config: EmbedConfig
    values: Dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        expected = self.config.param_shapes()
        names = [n for n, _ in expected]
        if list(self.values.keys()) != names:
            raise ValueError("EmbedParams: parameter names do not match config")
        checked = {}
        for name, shape in expected:
            # private copy: freezing must not reach the caller's array
            arr = np.array(self.values[name], dtype=np.float64, order="C")
            if arr.shape != shape:
                raise ValueError(
                    f"EmbedParams: {name} has shape {arr.shape}, expected {shape}"
                )
            arr.setflags(write=False)
            checked[name] = arr
        object.__setattr__(self, "values", checked)

    def arrays(self) -> List[np.ndarray]:
        return [self.values[name] for name, _ in self.config.param_shapes()]

    def names(self) -> List[str]:
        return [name for name, _ in self.config.param_shapes()]

    def replace_arrays(self, arrays) -> "EmbedParams":
        names = self.names()
        if len(arrays) != len(names):
            raise ValueError("EmbedParams: wrong number of arrays")
        return EmbedParams(self.config, dict(zip(names, arrays)))


def init_params(config: EmbedConfig) -> EmbedParams:
    """Uniform [-b, b] weights with b = sqrt(6 / (fan_in + fan_out)); zero
    biases.  Deterministic per config.seed."""
    rng = np.random.default_rng(config.seed)
    values = {}
    for name, shape in config.param_shapes():
        if name.endswith(".bias"):
            values[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            values[name] = rng.uniform(-bound, bound, size=shape)
    return EmbedParams(config, values)


def bind(params: EmbedParams, tape=None) -> Dict[str, Tensor]:
    """Wrap every parameter array as a Tensor, as tape leaves when a tape
    is given.  One binding must be shared across all forwards whose
    gradients are to accumulate together."""
    if tape is None:
        return {name: Tensor(arr) for name, arr in params.values.items()}
    return {name: tape.leaf(arr) for name, arr in params.values.items()}


def forward(params: EmbedParams, cloud, graphs=None):
    """Embed a cloud; returns an (N, out_dim) tensor.

    cloud: PointCloud or (N, 3) array.
    graphs: optional list of fixed (N, k_graph) neighbor index arrays,
    one per edge-conv layer, to freeze the dynamic graphs (gradient
    checks, ablation probes).  When omitted each layer recomputes its
    graph from the current features.

    Training uses forward_bound with tape-bound parameters so gradients
    accumulate across several forwards of the same binding.
    """
    emb, _ = forward_with_graphs(params, cloud, graphs)
    return emb


def forward_with_graphs(params: EmbedParams, cloud, graphs=None):
    """forward(), also returning the per-layer neighbor index arrays."""
    return forward_bound(params.config, bind(params, None), cloud, graphs)


def forward_bound(config: EmbedConfig, bound: Dict[str, Tensor], cloud, graphs=None):
    """forward() for a bind() dict plus its config; returns (emb, graphs)."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    n = pts.shape[0]
    if config.k_graph > n - 1:
        raise ValueError(
            f"forward: k_graph={config.k_graph} needs at least "
            f"{config.k_graph + 1} points, got {n}"
        )
    used = []
    h = Tensor(pts)
    for i in range(len(config.layer_dims)):
        if graphs is not None:
            idx = np.asarray(graphs[i], dtype=np.int64)
        else:
            idx = euclidean_knn_array(h.value, config.k_graph, exclude_self=True).indices
        used.append(idx)
        z = tz.edge_features(h, idx)
        z = tz.add(tz.matmul(z, bound[f"edge{i}.weight"]), bound[f"edge{i}.bias"])
        z = tz.leaky_relu(z, LEAKY_SLOPE)
        h = tz.max_over(z, axis=1)
    emb = tz.add(tz.matmul(h, bound["out.weight"]), bound["out.bias"])
    return emb, used


def embed(params: EmbedParams, cloud) -> np.ndarray:
    """Inference helper: plain ndarray embedding, nothing tracked."""
    return forward(params, cloud).value
