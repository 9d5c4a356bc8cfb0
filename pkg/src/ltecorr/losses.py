"""Training objectives: kernel-density divergence, Chamfer, assignment
distance, neighborhood-smoothness penalty, and their weighted total.

The divergence treats each cloud as an equal-weight Gaussian mixture with
bandwidth sigma.  Working in log space, the pairwise log-kernel terms are

    t_ij = -0.5 * ||a_i - b_j||^2 / (2 sigma^2) - 0.5 ln(2 pi) - ln(sqrt(2) sigma)

and gmm_logterm = logsumexp over all N^2 of them.  The divergence is

    0.5 * (gmm(a,a) + gmm(b,b)) - gmm(a,b)

which is symmetric bit for bit (the two self terms commute exactly and
the cross term is transpose-symmetric by construction), nonnegative, and
exactly zero for identical inputs.  The per-term constant and the 1/N^2
mixture weights cancel across the three calls, so neither needs to be
normalized out; a test pins the cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import tensor as tz
from .neighbors import knn_euclidean
from .pointcloud import PointCloud
from .tensor import Tensor

DIVERGENCES = ("cs", "cd", "emd")


@dataclass(frozen=True)
class LossConfig:
    """sigma: kernel bandwidth (model units, clouds normalized);
    lambda_*: objective weights; alpha: smoothness kernel scale
    (None = per-cloud mean squared nearest-neighbor distance);
    divergence: cs | cd | emd; k_map: smoothness neighborhood size."""

    sigma: float = 0.01
    lambda_cross: float = 1.0
    lambda_self: float = 1.0
    lambda_reg: float = 10.0
    alpha: Optional[float] = None
    divergence: str = "cs"
    k_map: int = 10

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"LossConfig: sigma must be > 0, got {self.sigma}")
        for name in ("lambda_cross", "lambda_self", "lambda_reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"LossConfig: {name} must be >= 0")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"LossConfig: alpha must be > 0, got {self.alpha}")
        if self.divergence not in DIVERGENCES:
            raise ValueError(
                f"LossConfig: divergence must be one of {DIVERGENCES}, "
                f"got {self.divergence!r}"
            )
        if self.k_map < 1:
            raise ValueError(f"LossConfig: k_map must be >= 1, got {self.k_map}")


def _cloud_tensor(c):
    if isinstance(c, PointCloud):
        return Tensor(c.points)
    return tz._coerce(c)


def gmm_logterm(a, b, sigma):
    """Log of the summed Gaussian kernel values between two clouds.

    a, b: (N, 3) tensors or clouds with equal point counts.  Returns the
    logsumexp of the N^2 per-pair log-kernel terms (see module
    docstring); scalar, differentiable.
    """
    if sigma <= 0:
        raise ValueError(f"gmm_logterm: sigma must be > 0, got {sigma}")
    a = _cloud_tensor(a)
    b = _cloud_tensor(b)
    if a.shape != b.shape:
        raise ValueError(
            f"gmm_logterm: point counts differ ({a.shape} vs {b.shape})"
        )
    const = -0.5 * np.log(2.0 * np.pi) - np.log(np.sqrt(2.0) * sigma)
    scale = -0.25 / (sigma * sigma)
    terms = tz.add(tz.mul(tz.pairwise_sqdist(a, b), scale), const)
    return tz.logsumexp_pairs(terms)


def cs_divergence(rec, tgt, sigma):
    """Symmetric, nonnegative divergence between two kernel densities.

    Zero iff the summed-kernel densities coincide; exactly zero on
    identical inputs.  The composition order 0.5*(self+self) - cross is
    what makes the float result independent of argument order.
    """
    cross = gmm_logterm(rec, tgt, sigma)
    self_r = gmm_logterm(rec, rec, sigma)
    self_t = gmm_logterm(tgt, tgt, sigma)
    return tz.sub(tz.mul(tz.add(self_r, self_t), 0.5), cross)


def chamfer(rec, tgt):
    """Bidirectional mean minimum squared distance."""
    rec = _cloud_tensor(rec)
    tgt = _cloud_tensor(tgt)
    sq = tz.pairwise_sqdist(rec, tgt)
    fwd = tz.mean_over(tz.min_over(sq, axis=1))
    bwd = tz.mean_over(tz.min_over(sq, axis=0))
    return tz.add(fwd, bwd)


def emd(rec, tgt, assignment=None):
    """Mean Euclidean cost of the exact minimum-cost perfect matching.

    The assignment is solved on the plain distance matrix (Hungarian
    method) and then frozen; gradients flow through the matched
    distances only.  Matched pairs at exactly zero distance are masked
    out of the differentiable path (the square root has no gradient at
    zero) and contribute 0.

    assignment: optional precomputed target-row permutation to freeze
    the matching across finite-difference evaluations.
    """
    rec = _cloud_tensor(rec)
    tgt = _cloud_tensor(tgt)
    if rec.shape != tgt.shape:
        raise ValueError(
            f"emd: point counts differ ({rec.shape} vs {tgt.shape})"
        )
    n = rec.shape[0]
    if assignment is None:
        cost = np.sqrt(tz.pairwise_sqdist(rec, tgt).value)
        rows, cols = linear_sum_assignment(cost)
        assignment = cols[np.argsort(rows)]
    assignment = np.asarray(assignment, dtype=np.int64)
    matched = tz.gather_rows(tgt, assignment)
    sq = tz.sum_over(tz.square(tz.sub(rec, matched)), axis=1)
    mask = (sq.value > 0.0).astype(np.float64)
    safe = tz.add(tz.mul(sq, mask), 1.0 - mask)
    dist = tz.mul(tz.sqrt(safe), mask)
    return tz.mul(tz.sum_over(dist), 1.0 / n)


def default_alpha(cloud: PointCloud) -> float:
    """Mean squared nearest-neighbor distance, the smoothness kernel scale
    used when LossConfig.alpha is None."""
    table = knn_euclidean(cloud, 1, exclude_self=True)
    alpha = float(np.mean(table.scores ** 2))
    return max(alpha, 1e-12)


def mapping_loss(cloud: PointCloud, rebuilt, k_map, alpha):
    """Neighborhood smoothness of a rebuilt cloud.

    Penalizes rebuilt points that separate when their originals are
    close:  (1 / (N K)) * sum_i sum_{l in knn(x_i)} v_il ||r_i - r_l||^2
    with v_il = exp(-||x_i - x_l||^2 / alpha).  Neighborhoods are
    Euclidean on the original coordinates, self excluded; v is a
    constant of the pass.
    """
    if k_map > cloud.n - 1:
        raise ValueError(
            f"mapping_loss: k_map={k_map} needs at least {k_map + 1} points, "
            f"got {cloud.n}"
        )
    rebuilt = tz._coerce(rebuilt)
    if rebuilt.shape[0] != cloud.n:
        raise ValueError(
            f"mapping_loss: rebuilt rows {rebuilt.shape[0]} do not match "
            f"cloud size {cloud.n}"
        )
    table = knn_euclidean(cloud, k_map, exclude_self=True)
    v = np.exp(-(table.scores ** 2) / alpha)
    n, k = table.indices.shape
    nb = tz.gather_rows(rebuilt, table.indices)
    diff = tz.sub(tz.reshape(rebuilt, (n, 1, rebuilt.shape[1])), nb)
    sq = tz.sum_over(tz.square(diff), axis=2)
    total = tz.sum_over(tz.mul(sq, Tensor(v)))
    return tz.mul(total, 1.0 / (n * k))


@dataclass(frozen=True)
class PairOutputs:
    """Everything total_objective needs for one shape pair.

    cross_target: rebuilt target cloud indexed like the source; None
    when neither lambda_cross nor lambda_reg needs it.  cross_source:
    rebuilt source cloud indexed like the target.  self_source /
    self_target: self-reconstructions.
    """

    source: PointCloud
    target: PointCloud
    cross_target: Optional[Tensor] = None
    cross_source: Optional[Tensor] = None
    self_source: Optional[Tensor] = None
    self_target: Optional[Tensor] = None


def _divergence_fn(config: LossConfig):
    if config.divergence == "cs":
        return lambda rec, tgt: cs_divergence(rec, tgt, config.sigma)
    if config.divergence == "cd":
        return chamfer
    return emd


def total_objective(outputs: PairOutputs, config: LossConfig):
    """Weighted sum of cross, self, and smoothness components.

    lambda_cross * (D(rebuilt_src, src) + D(rebuilt_tgt, tgt))
    + lambda_self * (same for the self-reconstructions)
    + lambda_reg * (smoothness of both cross reconstructions).

    Components whose lambda is zero are skipped and may be None in
    outputs; a positive lambda with a missing component is an error.
    """
    div = _divergence_fn(config)
    terms = []
    if config.lambda_cross > 0:
        _require(outputs.cross_source, "cross_source", "lambda_cross")
        _require(outputs.cross_target, "cross_target", "lambda_cross")
        pair_sum = tz.add(
            div(outputs.cross_source, outputs.source),
            div(outputs.cross_target, outputs.target),
        )
        terms.append(tz.mul(pair_sum, config.lambda_cross))
    if config.lambda_self > 0:
        _require(outputs.self_source, "self_source", "lambda_self")
        _require(outputs.self_target, "self_target", "lambda_self")
        pair_sum = tz.add(
            div(outputs.self_source, outputs.source),
            div(outputs.self_target, outputs.target),
        )
        terms.append(tz.mul(pair_sum, config.lambda_self))
    if config.lambda_reg > 0:
        _require(outputs.cross_target, "cross_target", "lambda_reg")
        _require(outputs.cross_source, "cross_source", "lambda_reg")
        alpha_x = config.alpha if config.alpha is not None else default_alpha(outputs.source)
        alpha_y = config.alpha if config.alpha is not None else default_alpha(outputs.target)
        pair_sum = tz.add(
            mapping_loss(outputs.source, outputs.cross_target, config.k_map, alpha_x),
            mapping_loss(outputs.target, outputs.cross_source, config.k_map, alpha_y),
        )
        terms.append(tz.mul(pair_sum, config.lambda_reg))
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for term in terms[1:]:
        total = tz.add(total, term)
    return total


def _require(component, name, lam):
    if component is None:
        raise ValueError(f"total_objective: {lam} > 0 but {name} is missing")
