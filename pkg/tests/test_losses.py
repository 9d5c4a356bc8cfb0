"""Objective terms: kernel-density divergence, Chamfer, assignment
distance, smoothness penalty, and the weighted total.

Reference values come from direct dense-numpy recomputations and, for
the assignment distance, exhaustive enumeration over permutations.
"""

import itertools

import numpy as np
import pytest
from conftest import assert_grads_match, rel_err

from ltecorr.losses import (
    LossConfig,
    PairOutputs,
    chamfer,
    cs_divergence,
    default_alpha,
    emd,
    gmm_logterm,
    mapping_loss,
    total_objective,
)
from ltecorr import tensor as tz
from ltecorr.neighbors import knn_euclidean
from ltecorr.pointcloud import PointCloud
from ltecorr.tensor import Tensor


def _clouds(rng, n=10, spread=1.0):
    a = spread * rng.normal(size=(n, 3))
    b = spread * rng.normal(size=(n, 3))
    return a, b


# ---------------------------------------------------------------- config


def test_loss_config_defaults():
    cfg = LossConfig()
    assert cfg.sigma == 0.01
    assert cfg.divergence == "cs"
    assert cfg.alpha is None


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(sigma=0.0), "sigma must be > 0"),
        (dict(sigma=-1.0), "sigma must be > 0"),
        (dict(lambda_cross=-0.1), "lambda_cross must be >= 0"),
        (dict(lambda_self=-2.0), "lambda_self must be >= 0"),
        (dict(lambda_reg=-1e-9), "lambda_reg must be >= 0"),
        (dict(alpha=0.0), "alpha must be > 0"),
        (dict(divergence="wasserstein"), "divergence must be one of"),
        (dict(k_map=0), "k_map must be >= 1"),
    ],
)
def test_loss_config_rejects(kwargs, match):
    with pytest.raises(ValueError, match=match):
        LossConfig(**kwargs)


# --------------------------------------------------- kernel density term


def test_gmm_single_point_is_the_kernel_constant():
    # One point against itself: the only squared distance is exactly 0,
    # so the log-sum collapses to the per-term constant.
    p = np.array([[0.3, -1.2, 0.7]])
    for sigma in (0.01, 0.1, 1.0):
        want = -0.5 * np.log(2.0 * np.pi) - np.log(np.sqrt(2.0) * sigma)
        got = gmm_logterm(p, p, sigma).item()
        assert got == want


@pytest.mark.parametrize("sigma,spread", [(0.2, 1.0), (0.05, 0.05)])
def test_gmm_matches_direct_sum(rng, sigma, spread):
    # At these scales no term under- or overflows, so the naive
    # log(sum(exp(...))) is computable directly and serves as oracle.
    a, b = _clouds(rng, n=9, spread=spread)
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    const = -0.5 * np.log(2.0 * np.pi) - np.log(np.sqrt(2.0) * sigma)
    terms = -0.25 / sigma**2 * d + const
    want = np.log(np.sum(np.exp(terms)))
    got = gmm_logterm(a, b, sigma).item()
    assert abs(got - want) < 1e-10


def test_gmm_accepts_point_clouds(rng):
    a, b = _clouds(rng, n=8)
    via_arrays = gmm_logterm(a, b, 0.1).item()
    via_clouds = gmm_logterm(PointCloud(a), PointCloud(b), 0.1).item()
    assert via_clouds == via_arrays


def test_gmm_rejects_bad_sigma_and_shapes(rng):
    a, b = _clouds(rng, n=5)
    with pytest.raises(ValueError, match="sigma must be > 0"):
        gmm_logterm(a, b, 0.0)
    with pytest.raises(ValueError, match="point counts differ"):
        gmm_logterm(a, b[:4], 0.1)


# ------------------------------------------------------------ divergence


def test_divergence_identical_inputs_exactly_zero(rng):
    a, _ = _clouds(rng, n=12)
    for sigma in (0.01, 0.1, 1.0):
        assert cs_divergence(a, a, sigma).item() == 0.0


def test_divergence_symmetric_bit_for_bit(rng):
    for _ in range(10):
        a, b = _clouds(rng, n=7)
        d_ab = cs_divergence(a, b, 0.1).item()
        d_ba = cs_divergence(b, a, 0.1).item()
        assert d_ab == d_ba


def test_divergence_nonnegative(rng):
    values = []
    for _ in range(200):
        n = int(rng.integers(2, 12))
        sigma = float(rng.uniform(0.02, 0.5))
        a, b = _clouds(rng, n=n)
        values.append(cs_divergence(a, b, sigma).item())
    values = np.array(values)
    assert np.all(values >= 0.0)
    assert values.max() > 0.0


def test_divergence_translation_invariant(rng):
    a, b = _clouds(rng, n=10)
    shift = np.array([3.0, -1.5, 0.25])
    base = cs_divergence(a, b, 0.1).item()
    moved = cs_divergence(a + shift, b + shift, 0.1).item()
    assert rel_err(moved, base) < 1e-9


def test_divergence_kernel_constant_cancels(rng):
    # Recompose the divergence from log-sums that omit the per-term
    # constant entirely; the three constants cancel in the combination.
    def logsum_noconst(a, b, sigma):
        sq = tz.pairwise_sqdist(Tensor(a), Tensor(b))
        return tz.logsumexp_pairs(tz.mul(sq, -0.25 / sigma**2)).item()

    for sigma in (0.05, 0.3):
        a, b = _clouds(rng, n=8)
        want = cs_divergence(a, b, sigma).item()
        got = 0.5 * (
            logsum_noconst(a, a, sigma) + logsum_noconst(b, b, sigma)
        ) - logsum_noconst(a, b, sigma)
        assert abs(got - want) < 1e-10


def test_divergence_gradients(rng):
    a, b = _clouds(rng, n=6)
    assert_grads_match(lambda r, t: cs_divergence(r, t, 0.15), [a, b])


# --------------------------------------------------------------- chamfer


def test_chamfer_zero_on_identical(rng):
    a, _ = _clouds(rng, n=9)
    assert chamfer(a, a).item() == 0.0


def test_chamfer_double_loop_oracle(rng):
    a, b = _clouds(rng, n=11)
    fwd = np.mean([min(np.sum((p - q) ** 2) for q in b) for p in a])
    bwd = np.mean([min(np.sum((p - q) ** 2) for q in a) for p in b])
    assert rel_err(chamfer(a, b).item(), fwd + bwd) < 1e-12


def test_chamfer_target_order_irrelevant(rng):
    a, b = _clouds(rng, n=10)
    perm = rng.permutation(10)
    assert rel_err(chamfer(a, b[perm]).item(), chamfer(a, b).item()) < 1e-12


def test_chamfer_gradients(rng):
    a, b = _clouds(rng, n=6)
    assert_grads_match(chamfer, [a, b])


# --------------------------------------------------- assignment distance


def _brute_force_emd(a, b):
    n = a.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = np.mean(np.linalg.norm(a - b[list(perm)], axis=1))
        best = min(best, cost)
    return best


def test_emd_matches_exhaustive_search(rng):
    for _ in range(5):
        a, b = _clouds(rng, n=6)
        assert rel_err(emd(a, b).item(), _brute_force_emd(a, b)) < 1e-12


def test_emd_identical_is_exactly_zero(rng):
    a, _ = _clouds(rng, n=7)
    assert emd(a, a).item() == 0.0


def test_emd_frozen_assignment_is_respected(rng):
    a, b = _clouds(rng, n=6)
    perm = rng.permutation(6)
    want = np.mean(np.linalg.norm(a - b[perm], axis=1))
    assert rel_err(emd(a, b, assignment=perm).item(), want) < 1e-12
    # the frozen optimum reproduces the free solve
    free = emd(a, b)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(cost)
    frozen = emd(a, b, assignment=cols[np.argsort(rows)])
    assert frozen.item() == free.item()


def test_emd_target_permutation_invariant(rng):
    a, b = _clouds(rng, n=6)
    perm = rng.permutation(6)
    assert rel_err(emd(a, b[perm]).item(), emd(a, b).item()) < 1e-12


def test_emd_rejects_mismatched_counts(rng):
    a, b = _clouds(rng, n=5)
    with pytest.raises(ValueError, match="point counts differ"):
        emd(a, b[:3])


def test_emd_gradients_with_frozen_assignment(rng):
    a, b = _clouds(rng, n=5)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(cost)
    asg = cols[np.argsort(rows)]
    assert_grads_match(lambda r, t: emd(r, t, assignment=asg), [a, b])


# ----------------------------------------------------- smoothness weight


def test_default_alpha_hand_computed():
    pts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [7.0, 0.0, 0.0]]
    )
    # nearest-neighbor distances are 1, 1, 2, 4; mean square 22/4
    assert default_alpha(PointCloud(pts)) == 5.5


def test_default_alpha_floor_on_coincident_points():
    pts = np.zeros((3, 3))
    assert default_alpha(PointCloud(pts)) == 1e-12


# ------------------------------------------------------------ smoothness


def test_mapping_loss_double_loop_oracle(rng):
    pts = rng.normal(size=(12, 3))
    rebuilt = rng.normal(size=(12, 3))
    cloud = PointCloud(pts)
    k, alpha = 4, 0.7
    table = knn_euclidean(cloud, k, exclude_self=True)
    total = 0.0
    for i in range(12):
        for slot in range(k):
            j = table.indices[i, slot]
            v = np.exp(-table.scores[i, slot] ** 2 / alpha)
            total += v * np.sum((rebuilt[i] - rebuilt[j]) ** 2)
    want = total / (12 * k)
    got = mapping_loss(cloud, rebuilt, k, alpha).item()
    assert rel_err(got, want) < 1e-12


def test_mapping_loss_huge_alpha_is_unweighted_mean(rng):
    pts = rng.normal(size=(10, 3))
    rebuilt = rng.normal(size=(10, 3))
    cloud = PointCloud(pts)
    k = 3
    table = knn_euclidean(cloud, k, exclude_self=True)
    want = np.mean(
        [
            np.sum((rebuilt[i] - rebuilt[j]) ** 2)
            for i in range(10)
            for j in table.indices[i]
        ]
    )
    got = mapping_loss(cloud, rebuilt, k, alpha=1e12).item()
    assert rel_err(got, want) < 1e-9


def test_mapping_loss_rejects_bad_inputs(rng):
    pts = rng.normal(size=(5, 3))
    cloud = PointCloud(pts)
    with pytest.raises(ValueError, match="k_map=5 needs at least 6 points"):
        mapping_loss(cloud, pts, 5, 0.1)
    with pytest.raises(ValueError, match="rebuilt rows 4 do not match"):
        mapping_loss(cloud, pts[:4], 2, 0.1)


def test_mapping_loss_gradients(rng):
    pts = rng.normal(size=(8, 3))
    cloud = PointCloud(pts)
    rebuilt = rng.normal(size=(8, 3))
    assert_grads_match(lambda r: mapping_loss(cloud, r, 3, 0.5), [rebuilt])


# -------------------------------------------------------- weighted total


def _fake_outputs(rng, n=9):
    src = PointCloud(rng.normal(size=(n, 3)))
    tgt = PointCloud(rng.normal(size=(n, 3)))
    return PairOutputs(
        source=src,
        target=tgt,
        cross_target=Tensor(rng.normal(size=(n, 3))),
        cross_source=Tensor(rng.normal(size=(n, 3))),
        self_source=Tensor(rng.normal(size=(n, 3))),
        self_target=Tensor(rng.normal(size=(n, 3))),
    )


def test_total_objective_recomposition(rng):
    out = _fake_outputs(rng)
    cfg = LossConfig(
        sigma=0.1,
        lambda_cross=0.7,
        lambda_self=0.3,
        lambda_reg=2.0,
        alpha=0.5,
        k_map=3,
    )
    want = (
        cfg.lambda_cross
        * (
            cs_divergence(out.cross_source, out.source, cfg.sigma).item()
            + cs_divergence(out.cross_target, out.target, cfg.sigma).item()
        )
        + cfg.lambda_self
        * (
            cs_divergence(out.self_source, out.source, cfg.sigma).item()
            + cs_divergence(out.self_target, out.target, cfg.sigma).item()
        )
        + cfg.lambda_reg
        * (
            mapping_loss(out.source, out.cross_target, cfg.k_map, cfg.alpha).item()
            + mapping_loss(out.target, out.cross_source, cfg.k_map, cfg.alpha).item()
        )
    )
    assert rel_err(total_objective(out, cfg).item(), want) < 1e-12


def test_total_objective_default_alpha_path(rng):
    out = _fake_outputs(rng)
    cfg = LossConfig(
        sigma=0.1,
        lambda_cross=0.0,
        lambda_self=0.0,
        lambda_reg=1.5,
        alpha=None,
        k_map=4,
    )
    want = cfg.lambda_reg * (
        mapping_loss(
            out.source, out.cross_target, cfg.k_map, default_alpha(out.source)
        ).item()
        + mapping_loss(
            out.target, out.cross_source, cfg.k_map, default_alpha(out.target)
        ).item()
    )
    assert rel_err(total_objective(out, cfg).item(), want) < 1e-12


def test_total_objective_swaps_divergence(rng):
    out = _fake_outputs(rng)
    cfg = LossConfig(lambda_cross=1.0, lambda_self=0.0, lambda_reg=0.0, divergence="cd")
    want = chamfer(out.cross_source, out.source).item() + chamfer(
        out.cross_target, out.target
    ).item()
    assert rel_err(total_objective(out, cfg).item(), want) < 1e-12


@pytest.mark.parametrize(
    "kwargs, drop, match",
    [
        (dict(lambda_cross=1.0, lambda_self=0.0, lambda_reg=0.0),
         "cross_source", "lambda_cross > 0 but cross_source is missing"),
        (dict(lambda_cross=0.0, lambda_self=1.0, lambda_reg=0.0),
         "self_target", "lambda_self > 0 but self_target is missing"),
        (dict(lambda_cross=0.0, lambda_self=0.0, lambda_reg=1.0),
         "cross_target", "lambda_reg > 0 but cross_target is missing"),
    ],
)
def test_total_objective_missing_component(rng, kwargs, drop, match):
    out = _fake_outputs(rng)
    broken = PairOutputs(
        source=out.source,
        target=out.target,
        **{
            name: (None if name == drop else getattr(out, name))
            for name in ("cross_target", "cross_source", "self_source", "self_target")
        },
    )
    with pytest.raises(ValueError, match=match):
        total_objective(broken, LossConfig(**kwargs))


def test_total_objective_all_weights_zero(rng):
    out = PairOutputs(
        source=PointCloud(rng.normal(size=(4, 3))),
        target=PointCloud(rng.normal(size=(4, 3))),
    )
    cfg = LossConfig(lambda_cross=0.0, lambda_self=0.0, lambda_reg=0.0)
    total = total_objective(out, cfg)
    assert total.item() == 0.0
    assert not total.tracked
