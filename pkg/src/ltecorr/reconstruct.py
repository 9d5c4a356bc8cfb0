"""Cross- and self-reconstruction of embeddings and clouds.

Cross direction: for each source feature f_i, find its K cosine
neighbors among the target features, solve the affine reconstruction
weights in feature space, then apply those same weights to the target
features (rebuilt embedding) and to the raw target coordinates (rebuilt
cloud).  Row i of every rebuilt quantity corresponds to source index i.

Self direction: identical machinery against the shape's own embedding
with the self-loop excluded.

Neighbor indices are constants of the forward pass; gradients flow
through the Gram solve and the weighted sums only.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as tz
from .lle import ReconWeights, gram_stack, solve_weights
from .neighbors import NeighborTable, knn_cosine_cross, knn_cosine_self
from .pointcloud import PointCloud
from .tensor import Tensor


@dataclass(frozen=True)
class ReconResult:
    """rebuilt_cloud: (N, 3) tensor; rebuilt_embedding: (N, D) tensor;
    weights and the neighbor table that produced them."""

    rebuilt_cloud: Tensor
    rebuilt_embedding: Tensor
    weights: ReconWeights
    table: NeighborTable


def _reconstruct(query, source_features, source_cloud, table, gamma):
    idx = table.indices
    n, k = idx.shape
    blocks = tz.gather_rows(source_features, idx)
    grams = gram_stack(query, blocks)
    weights = solve_weights(grams, gamma, indices=idx)
    w3 = tz.reshape(weights.weights, (n, k, 1))
    rebuilt_embedding = tz.sum_over(tz.mul(w3, blocks), axis=1)
    coord_blocks = tz.gather_rows(Tensor(source_cloud.points), idx)
    rebuilt_cloud = tz.sum_over(tz.mul(w3, coord_blocks), axis=1)
    return ReconResult(
        rebuilt_cloud=rebuilt_cloud,
        rebuilt_embedding=rebuilt_embedding,
        weights=weights,
        table=table,
    )


def cross_reconstruct(fx, fy, y_cloud: PointCloud, k, gamma, table=None) -> ReconResult:
    """Rebuild the target cloud/embedding indexed like the source.

    fx: (N, D) source embedding (the queries)
    fy: (N, D) target embedding (the neighbor pool)
    y_cloud: target coordinates, rows aligned with fy
    table: optional precomputed NeighborTable to freeze the neighbor
      choice (gradient checks); computed from cosine similarity when
      omitted.
    """
    fx = tz._coerce(fx)
    fy = tz._coerce(fy)
    if fy.shape[0] != y_cloud.n:
        raise ValueError(
            f"cross_reconstruct: embedding rows {fy.shape[0]} do not match "
            f"cloud size {y_cloud.n}"
        )
    if table is None:
        if k > fy.shape[0]:
            raise ValueError(
                f"cross_reconstruct: K={k} exceeds target size {fy.shape[0]}"
            )
        table = knn_cosine_cross(fx.value, fy.value, k)
    return _reconstruct(fx, fy, y_cloud, table, gamma)


def self_reconstruct(f, cloud: PointCloud, k, gamma, table=None) -> ReconResult:
    """Rebuild a cloud from its own embedding, self-loops excluded."""
    f = tz._coerce(f)
    if f.shape[0] != cloud.n:
        raise ValueError(
            f"self_reconstruct: embedding rows {f.shape[0]} do not match "
            f"cloud size {cloud.n}"
        )
    if table is None:
        if k > cloud.n - 1:
            raise ValueError(
                f"self_reconstruct: K={k} needs at least {k + 1} points, "
                f"got {cloud.n}"
            )
        table = knn_cosine_self(f.value, k)
    return _reconstruct(f, f, cloud, table, gamma)
