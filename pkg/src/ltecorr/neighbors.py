"""K-nearest-neighbor queries in coordinate and embedding space.

Exhaustive O(N*M) search with deterministic tie-breaking: among equal
scores the lower index wins.  Euclidean tables sort ascending by
distance, cosine tables descending by similarity.  No spatial index;
cloud sizes at desk scale do not justify one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pointcloud import PointCloud


@dataclass(frozen=True)
class NeighborTable:
    """indices: (N, K) int64 neighbor rows; scores: (N, K) f64.

    scores hold Euclidean distances (ascending) or cosine similarities
    (descending) depending on the query that built the table.
    """

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        sc = np.ascontiguousarray(self.scores, dtype=np.float64)
        if idx.shape != sc.shape or idx.ndim != 2:
            raise ValueError(
                f"NeighborTable: indices {idx.shape} and scores {sc.shape} "
                "must be matching (N, K) arrays"
            )
        idx.setflags(write=False)
        sc.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", sc)

    @property
    def k(self):
        return self.indices.shape[1]


def _top_k_rows(score, k, descending):
    """Per-row top-k index selection with lower-index tie-breaking.

    A stable argsort keeps the original (index) order among equal scores,
    which is exactly the lower-index rule.
    """
    key = -score if descending else score
    order = np.argsort(key, axis=1, kind="stable")
    idx = order[:, :k]
    picked = np.take_along_axis(score, idx, axis=1)
    return np.ascontiguousarray(idx.astype(np.int64)), np.ascontiguousarray(picked)


def euclidean_knn_array(points, k, exclude_self):
    """General-dimension Euclidean KNN of a row set against itself.

    points: (N, D) array.  With exclude_self each row's own index is
    barred from its neighbor list.
    """
    pts = np.asarray(getattr(points, "value", points), dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"euclidean_knn_array: need (N, D) points, got {pts.shape}")
    n = pts.shape[0]
    limit = n - 1 if exclude_self else n
    if k < 1 or k > limit:
        raise ValueError(
            f"knn_euclidean: K={k} out of range for N={n}"
            f"{' with self excluded' if exclude_self else ''}"
        )
    sq = _kernels.pairwise_sqdist(pts, pts)
    if exclude_self:
        np.fill_diagonal(sq, np.inf)
    idx, sc = _top_k_rows(sq, k, descending=False)
    return NeighborTable(indices=idx, scores=np.sqrt(sc))


def knn_euclidean(cloud: PointCloud, k, exclude_self=True) -> NeighborTable:
    """Row i holds the k points minimizing distance to point i."""
    return euclidean_knn_array(cloud.points, k, exclude_self)


def _unit_rows(f, label):
    arr = np.asarray(getattr(f, "value", f), dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{label}: need a (N, D) embedding, got {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"{label}: zero-norm embedding row {int(zero[0])}")
    return arr / norms[:, None]


def cosine_similarity_matrix(fx, fy):
    """(N, M) cosine similarities between rows of two embeddings."""
    ux = _unit_rows(fx, "cosine")
    uy = _unit_rows(fy, "cosine")
    if ux.shape[1] != uy.shape[1]:
        raise ValueError(
            f"cosine: feature dimensions differ ({ux.shape[1]} vs {uy.shape[1]})"
        )
    return ux @ uy.T


def knn_cosine_cross(fx, fy, k) -> NeighborTable:
    """Row i: the k rows of fy most cosine-similar to fx row i."""
    sims = cosine_similarity_matrix(fx, fy)
    if k < 1 or k > sims.shape[1]:
        raise ValueError(f"knn_cosine_cross: K={k} out of range for M={sims.shape[1]}")
    idx, sc = _top_k_rows(sims, k, descending=True)
    return NeighborTable(indices=idx, scores=sc)


def knn_cosine_self(f, k) -> NeighborTable:
    """Cosine neighbors of an embedding against itself, self excluded."""
    sims = cosine_similarity_matrix(f, f)
    n = sims.shape[0]
    if k < 1 or k > n - 1:
        raise ValueError(f"knn_cosine_self: K={k} out of range for N={n}")
    np.fill_diagonal(sims, -np.inf)
    idx, sc = _top_k_rows(sims, k, descending=True)
    return NeighborTable(indices=idx, scores=sc)
