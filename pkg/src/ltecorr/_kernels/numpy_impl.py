"""Pure numpy implementations of the hot kernels.

These mirror ``_core.pyx`` operation for operation.  Both backends keep the
per-element arithmetic identical (explicit differences, fixed accumulation
order) so that results agree to the last few ulps and transpose symmetry of
``pairwise_sqdist`` holds exactly.
"""

import numpy as np

_CHUNK = 256


def pairwise_sqdist(a, b):
    """All-pairs squared Euclidean distances.

    a: (N, D) float64
    b: (M, D) float64
    returns (N, M) with out[i, j] = ||a[i] - b[j]||^2.

    Computed from explicit coordinate differences (not the expanded
    a.a + b.b - 2 a.b form), so values are nonnegative and
    pairwise_sqdist(a, b) equals pairwise_sqdist(b, a).T bit for bit.
    Row-chunked to bound the (chunk, M, D) temporary.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = a.shape[0]
    out = np.empty((n, b.shape[0]), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = a[start:stop, None, :] - b[None, :, :]
        np.sum(diff * diff, axis=2, out=out[start:stop])
    return out


def scatter_add_rows(idx, src, n_rows):
    """Accumulate rows of src into a fresh (n_rows, D) array.

    idx: (M,) int64 row targets, src: (M, D) float64.
    Rows with equal targets accumulate in index order.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    out = np.zeros((n_rows, src.shape[1]), dtype=np.float64)
    np.add.at(out, idx, src)
    return out


def edge_features(h, idx):
    """Per-edge features [h_i, h_j - h_i] for a fixed neighbor table.

    h: (N, C) float64 vertex features
    idx: (N, K) int64 neighbor indices (j = idx[i, k])
    returns (N, K, 2C): first C channels repeat h_i, last C hold h_j - h_i.
    """
    h = np.ascontiguousarray(h, dtype=np.float64)
    n, c = h.shape
    k = idx.shape[1]
    out = np.empty((n, k, 2 * c), dtype=np.float64)
    out[:, :, :c] = h[:, None, :]
    out[:, :, c:] = h[idx.reshape(-1)].reshape(n, k, c) - h[:, None, :]
    return out


def edge_features_grad(g, idx):
    """Adjoint of edge_features.

    g: (N, K, 2C) upstream gradient, idx: (N, K) int64.
    returns (N, C): d/dh of sum(g * edge_features(h, idx)).
    Center rows receive g_center - g_diff summed over K, then every
    neighbor row j = idx[i, k] receives g_diff[i, k].
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    n, k, c2 = g.shape
    c = c2 // 2
    g_center = g[:, :, :c]
    g_diff = g[:, :, c:]
    out = np.sum(g_center - g_diff, axis=1)
    np.add.at(out, idx.reshape(-1), g_diff.reshape(n * k, c))
    return out
