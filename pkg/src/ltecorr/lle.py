"""Gram matrices and regularized constrained least-squares weights.

Each point is rebuilt as an affine combination of K neighbor features:
minimize ||f_i - sum_l w_l eta_l||^2 subject to sum_l w_l = 1.  With the
Gram matrix G_i[l, m] = <f_i - eta_l, f_i - eta_m> and a ridge term
gamma*I, the minimizer has the closed form

    w_i = (G_i + gamma I)^-1 1  /  1^T (G_i + gamma I)^-1 1.

gamma > 0 keeps the system positive definite even when neighbors are
affinely degenerate.  At gamma = 0 the closed form can hit a singular
G_i (three collinear points already do it), so that branch solves the
bordered stationarity system

    [ 2G  1 ] [w]   [0]
    [ 1^T 0 ] [s] = [1]

instead, which stays solvable whenever the constrained minimizer is
unique.  Both branches are differentiable with respect to the Gram
entries through the solve adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as tz
from .neighbors import euclidean_knn_array, knn_cosine_self
from .pointcloud import PointCloud
from .tensor import Tensor


@dataclass(frozen=True)
class GramStack:
    """mats: (N, K, K) tensor of per-point neighbor Gram matrices."""

    mats: Tensor

    def __post_init__(self):
        if self.mats.ndim != 3 or self.mats.shape[1] != self.mats.shape[2]:
            raise ValueError(
                f"GramStack: expected (N, K, K) matrices, got {self.mats.shape}"
            )

    @property
    def n(self):
        return self.mats.shape[0]

    @property
    def k(self):
        return self.mats.shape[1]


@dataclass(frozen=True)
class ReconWeights:
    """Per-point neighbor indices and affine combination weights.

    weights: (N, K) tensor, rows summing to 1.
    neighbor_indices: (N, K) int64, or None when the solve was fed raw
    Gram matrices without a table.
    """

    weights: Tensor
    neighbor_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError(f"ReconWeights: weights must be (N, K), got {self.weights.shape}")
        if self.neighbor_indices is not None:
            idx = np.ascontiguousarray(self.neighbor_indices, dtype=np.int64)
            if idx.shape != self.weights.shape:
                raise ValueError(
                    f"ReconWeights: indices {idx.shape} do not match weights "
                    f"{self.weights.shape}"
                )
            idx.setflags(write=False)
            object.__setattr__(self, "neighbor_indices", idx)


def gram_stack(query, blocks) -> GramStack:
    """Per-point Gram matrices of query-to-neighbor difference vectors.

    query: (N, D) tensor of features f_i
    blocks: (N, K, D) tensor, row i holding the K gathered neighbor
      features eta_l of point i
    returns G with G[i, l, m] = <f_i - eta_l, f_i - eta_m>.
    """
    query = tz._coerce(query)
    blocks = tz._coerce(blocks)
    if query.ndim != 2 or blocks.ndim != 3:
        raise ValueError(
            f"gram_stack: need (N, D) query and (N, K, D) blocks, got "
            f"{query.shape} and {blocks.shape}"
        )
    n, d = query.shape
    if blocks.shape[0] != n or blocks.shape[2] != d:
        raise ValueError(
            f"gram_stack: blocks {blocks.shape} do not match query {query.shape}"
        )
    diff = tz.sub(tz.reshape(query, (n, 1, d)), blocks)
    mats = tz.matmul(diff, tz.swap_last(diff))
    return GramStack(mats=mats)


def _solve_closed_form(mats: Tensor, gamma):
    n, k, _ = mats.shape
    eye = np.eye(k) * float(gamma)
    regularized = tz.add(mats, Tensor(eye))
    rhs = Tensor(np.ones((n, k, 1)))
    return tz.linear_solve(regularized, rhs)


def _solve_kkt(mats: Tensor):
    """Bordered stationarity system solve for the gamma = 0 branch."""
    n, k, _ = mats.shape
    top = tz.concat([tz.mul(mats, 2.0), Tensor(np.ones((n, k, 1)))], axis=2)
    bottom = Tensor(
        np.broadcast_to(
            np.concatenate([np.ones((1, 1, k)), np.zeros((1, 1, 1))], axis=2),
            (n, 1, k + 1),
        ).copy()
    )
    bordered = tz.concat([top, bottom], axis=1)
    rhs = np.zeros((n, k + 1, 1))
    rhs[:, k, 0] = 1.0
    sol = tz.solve_square(bordered, Tensor(rhs))
    # keep the first K rows of each (K+1, 1) solution block
    flat = tz.reshape(sol, (n * (k + 1), 1))
    keep = (np.arange(n)[:, None] * (k + 1) + np.arange(k)[None, :]).astype(np.int64)
    return tz.reshape(tz.gather_rows(flat, keep), (n, k, 1))


def solve_weights(grams: GramStack, gamma, indices=None) -> ReconWeights:
    """Reconstruction weight rows from a Gram stack.

    gamma > 0: closed form (G + gamma I)^-1 1, normalized to sum 1.
    gamma = 0: bordered stationarity solve (see module docstring).
    Rows are renormalized by their exact sum after the solve so the
    sum-to-one invariant holds to machine precision either way.

    indices, when given, is the (N, K) neighbor table the Gram stack was
    gathered with; it is carried through to the result untouched.
    """
    if gamma < 0:
        raise ValueError(f"solve_weights: gamma must be >= 0, got {gamma}")
    mats = grams.mats
    n, k, _ = mats.shape
    try:
        if gamma > 0:
            raw = _solve_closed_form(mats, gamma)
        else:
            raw = _solve_kkt(mats)
    except ValueError as exc:
        raise ValueError(f"solve_weights: {exc}") from None
    rowsum = tz.sum_over(raw, axis=1, keepdims=True)
    weights = tz.reshape(tz.div(raw, rowsum), (n, k))
    return ReconWeights(weights=weights, neighbor_indices=indices)


def lle_self_weights(cloud_or_embedding, k, gamma) -> ReconWeights:
    """Self-reconstruction weights of a cloud or an embedding.

    PointCloud input: Euclidean neighbors on coordinates.  Tensor or
    array input: cosine neighbors in feature space.  Self is excluded
    either way, so K <= N-1.
    """
    if isinstance(cloud_or_embedding, PointCloud):
        source = Tensor(cloud_or_embedding.points)
        table = euclidean_knn_array(cloud_or_embedding.points, k, exclude_self=True)
    else:
        source = tz._coerce(cloud_or_embedding)
        table = knn_cosine_self(source.value, k)
    blocks = tz.gather_rows(source, table.indices)
    grams = gram_stack(source, blocks)
    return solve_weights(grams, gamma, indices=table.indices)
