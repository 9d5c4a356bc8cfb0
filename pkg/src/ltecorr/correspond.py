"""Correspondence inference and evaluation.

Matching is independent per point: source row i maps to the target row
with the highest cosine similarity, ties to the lower index.  The map
need not be a bijection.  Evaluation measures the coordinate distance
between predicted and ground-truth target points, absolute (err) and
relative to the target's diameter (acc at a tolerance epsilon).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import _kernels
from .neighbors import cosine_similarity_matrix
from .pointcloud import ShapePair

DEFAULT_EPS_GRID = tuple(e / 100.0 for e in range(0, 21))


@dataclass(frozen=True)
class Correspondence:
    """mapping[i]: predicted target row for source row i."""

    mapping: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.mapping, dtype=np.int64)
        if m.ndim != 1:
            raise ValueError(f"Correspondence: mapping must be 1-D, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    @property
    def n(self):
        return self.mapping.shape[0]


@dataclass(frozen=True)
class EvalReport:
    """err: mean distance to the ground-truth target point; acc_curve:
    (epsilon, accuracy) pairs, accuracy strictly-within epsilon *
    dist_max; dist_max: target diameter."""

    err: float
    acc_curve: List[Tuple[float, float]]
    dist_max: float

    def acc(self, eps) -> float:
        for e, a in self.acc_curve:
            if e == eps:
                return a
        raise KeyError(f"EvalReport: epsilon {eps} not on the grid")


def match_nn(fx, fy) -> Correspondence:
    """Per-row cosine argmax of fx rows against fy rows."""
    sims = cosine_similarity_matrix(fx, fy)
    # argmax returns the first maximum: the lower-index tie rule
    return Correspondence(mapping=np.argmax(sims, axis=1).astype(np.int64))


def evaluate(pred: Correspondence, pair: ShapePair, eps_grid=None) -> EvalReport:
    """Score a predicted correspondence against the ground truth.

    err is the mean Euclidean distance between predicted and true target
    points; acc(eps) the fraction strictly within eps * dist_max, with
    dist_max the exhaustive maximum pairwise distance within the target.
    """
    if eps_grid is None:
        eps_grid = DEFAULT_EPS_GRID
    n = pair.n
    if pred.n != n:
        raise ValueError(f"evaluate: prediction length {pred.n} != pair size {n}")
    if pred.mapping.size and (pred.mapping.min() < 0 or pred.mapping.max() >= n):
        raise ValueError("evaluate: prediction index out of range")
    tgt = pair.target.points
    dists = np.linalg.norm(tgt[pred.mapping] - tgt[pair.gt_map], axis=1)
    err = float(np.mean(dists))
    dist_max = float(np.sqrt(np.max(_kernels.pairwise_sqdist(tgt, tgt))))
    curve = [(float(e), float(np.mean(dists < e * dist_max))) for e in eps_grid]
    return EvalReport(err=err, acc_curve=curve, dist_max=dist_max)


def report_csv(report: EvalReport) -> str:
    """CSV rendering: `err,<value>` header then epsilon,accuracy rows."""
    lines = [f"err,{report.err:.17g}", "epsilon,accuracy"]
    for eps, acc in report.acc_curve:
        lines.append(f"{eps:.17g},{acc:.17g}")
    return "\n".join(lines) + "\n"


def save_correspondence(corr: Correspondence, path):
    """One predicted target index per line."""
    with open(path, "w", encoding="ascii") as fh:
        for idx in corr.mapping:
            fh.write(f"{int(idx)}\n")


def load_correspondence(path) -> Correspondence:
    entries = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                entries.append(int(stripped))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: not an index") from None
    return Correspondence(mapping=np.array(entries, dtype=np.int64))


def optimal_linear_transform(fx, fy, gt_map) -> np.ndarray:
    """Least-squares D x D map A aligning fx rows to permuted fy rows.

    Minimizes ||fx A^T - fy[gt_map]||_F via the pseudo-inverse,
    truncating singular values below 1e-10 of the largest.  With
    deficient rank this is the minimum-norm minimizer.
    """
    fx = np.asarray(getattr(fx, "value", fx), dtype=np.float64)
    fy = np.asarray(getattr(fy, "value", fy), dtype=np.float64)
    gt_map = np.asarray(gt_map, dtype=np.int64)
    permuted = fy[gt_map]
    return (np.linalg.pinv(fx, rcond=1e-10) @ permuted).T


def match_with_transform(fx, fy, a) -> Correspondence:
    """match_nn after mapping the source embedding through A."""
    fx = np.asarray(getattr(fx, "value", fx), dtype=np.float64)
    return match_nn(fx @ np.asarray(a, dtype=np.float64).T, fy)
