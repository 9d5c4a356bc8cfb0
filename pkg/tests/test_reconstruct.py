"""Cross/self reconstruction: identities, equivariance, gradients."""

import numpy as np
import pytest

from conftest import assert_grads_match
from ltecorr.pointcloud import PointCloud
from ltecorr.reconstruct import cross_reconstruct, self_reconstruct
from ltecorr.tensor import Tensor


def _pair(rng, n=12, d=6):
    fx = rng.normal(size=(n, d))
    fy = rng.normal(size=(n, d))
    cloud = PointCloud(rng.normal(size=(n, 3)))
    return fx, fy, cloud


def test_identical_embeddings_k1_reproduce_cloud(rng):
    fx, _, cloud = _pair(rng)
    res = cross_reconstruct(fx, fx, cloud, k=1, gamma=1.0)
    # each row's one neighbor is itself (cosine 1), and a single affine
    # weight must be exactly 1
    assert np.array_equal(res.table.indices[:, 0], np.arange(cloud.n))
    assert np.array_equal(res.weights.weights.value, np.ones((cloud.n, 1)))
    assert np.array_equal(res.rebuilt_cloud.value, cloud.points)


def test_rows_are_indexed_like_the_source(rng):
    # perfect features: fy[perm[i]] == fx[i]; the k=1 reconstruction must
    # return the target coordinates in source order
    n = 10
    fx = rng.normal(size=(n, 5))
    perm = rng.permutation(n)
    fy = np.empty_like(fx)
    fy[perm] = fx
    cloud = PointCloud(rng.normal(size=(n, 3)))
    res = cross_reconstruct(fx, fy, cloud, k=1, gamma=1.0)
    assert np.array_equal(res.table.indices[:, 0], perm)
    assert np.array_equal(res.rebuilt_cloud.value, cloud.points[perm])


def test_rebuilt_equals_weighted_sum_oracle(rng):
    fx, fy, cloud = _pair(rng)
    res = cross_reconstruct(fx, fy, cloud, k=4, gamma=1.0)
    w = res.weights.weights.value
    idx = res.table.indices
    want_cloud = np.zeros((cloud.n, 3))
    want_emb = np.zeros_like(fy[: cloud.n])
    for i in range(cloud.n):
        for l in range(4):
            want_cloud[i] += w[i, l] * cloud.points[idx[i, l]]
            want_emb[i] += w[i, l] * fy[idx[i, l]]
    assert np.max(np.abs(res.rebuilt_cloud.value - want_cloud)) < 1e-12
    assert np.max(np.abs(res.rebuilt_embedding.value - want_emb)) < 1e-12


def test_translation_of_target_cloud_shifts_rebuilt(rng):
    fx, fy, cloud = _pair(rng)
    t = np.array([2.0, -5.0, 1.0])
    a = cross_reconstruct(fx, fy, cloud, k=4, gamma=1.0)
    b = cross_reconstruct(fx, fy, PointCloud(cloud.points + t), k=4, gamma=1.0)
    # weights sum to one, so the rebuilt cloud inherits the exact shift
    assert np.max(np.abs(b.rebuilt_cloud.value - (a.rebuilt_cloud.value + t))) < 1e-12


def test_self_reconstruction_excludes_self(rng):
    f = rng.normal(size=(10, 4))
    cloud = PointCloud(rng.normal(size=(10, 3)))
    res = self_reconstruct(f, cloud, k=3, gamma=1.0)
    assert not np.any(res.table.indices == np.arange(10)[:, None])


def test_gamma_zero_residual_never_grows_with_k(rng):
    # neighbor lists are ranking prefixes, so the affine hull only grows
    f = rng.normal(size=(20, 6))
    cloud = PointCloud(rng.normal(size=(20, 3)))
    res2 = self_reconstruct(f, cloud, k=2, gamma=0.0)
    res8 = self_reconstruct(f, cloud, k=8, gamma=0.0)
    r2 = np.sum((res2.rebuilt_embedding.value - f) ** 2, axis=1)
    r8 = np.sum((res8.rebuilt_embedding.value - f) ** 2, axis=1)
    assert np.all(r8 <= r2 + 1e-10)


def test_gradients_through_cross_reconstruction(rng):
    n, d, k = 8, 4, 3
    fx = rng.normal(size=(n, d))
    fy = rng.normal(size=(n, d))
    cloud = PointCloud(rng.normal(size=(n, 3)))
    frozen = cross_reconstruct(fx, fy, cloud, k, gamma=1.0).table

    def fn(x, y):
        res = cross_reconstruct(x, y, cloud, k, gamma=1.0, table=frozen)
        return (res.rebuilt_cloud * res.rebuilt_cloud).sum() + (
            res.rebuilt_embedding * res.rebuilt_embedding
        ).sum()

    assert_grads_match(fn, [fx, fy], rel=1e-4)


def test_size_mismatch_errors(rng):
    fx, fy, cloud = _pair(rng)
    with pytest.raises(ValueError, match="do not match"):
        cross_reconstruct(fx, fy[:-1], cloud, 3, 1.0)
    with pytest.raises(ValueError, match="K="):
        cross_reconstruct(fx, fy, cloud, cloud.n + 1, 1.0)
    with pytest.raises(ValueError, match="K="):
        self_reconstruct(fx, cloud, cloud.n, 1.0)
    with pytest.raises(ValueError, match="do not match"):
        self_reconstruct(fx[:-1], cloud, 3, 1.0)


def test_tensor_inputs_track_gradients(rng):
    fx, fy, cloud = _pair(rng, n=6)
    from ltecorr.tensor import Tape

    tape = Tape()
    tx = tape.leaf(fx)
    res = cross_reconstruct(tx, Tensor(fy), cloud, 3, 1.0)
    grads = tape.backward((res.rebuilt_cloud * res.rebuilt_cloud).sum())
    assert grads[tx].shape == fx.shape
    assert np.any(grads[tx] != 0.0)
