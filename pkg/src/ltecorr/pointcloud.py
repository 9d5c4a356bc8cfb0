"""Point-cloud data model, XYZ file IO, synthetic pair generation.

Shapes are plain N x 3 float64 coordinate arrays in dimensionless model
units.  Training pairs are built synthetically: sample a base surface,
normalize it, warp a copy with a smooth Gaussian radial-basis displacement
field, then permute the warped copy.  The permutation is the exact
ground-truth correspondence, which real scan datasets never provide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BASE_SHAPES = ("sphere", "torus", "articulated")

_WARP_CENTERS = 8
# Per-axis std of a center's offset vector is _WARP_OFFSET_SCALE * strength.
# At the default corpus strength this yields displacements comparable to the
# typical neighbor spacing: nearest-point matching on raw coordinates breaks
# down while the smooth field keeps most local neighborhoods intact.
_WARP_OFFSET_SCALE = 3.0


@dataclass(frozen=True)
class PointCloud:
    """Immutable cloud of N >= 2 finite 3-D points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"PointCloud: expected (N, 3) points, got {pts.shape}")
        if pts.shape[0] < 2:
            raise ValueError("PointCloud: need at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("PointCloud: non-finite coordinate")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class ShapePair:
    """Source/target clouds plus the ground-truth index map.

    gt_map[i] is the target row corresponding to source row i; always a
    permutation of 0..N-1.
    """

    source: PointCloud
    target: PointCloud
    gt_map: np.ndarray = field(repr=False)

    def __post_init__(self):
        gt = np.ascontiguousarray(self.gt_map, dtype=np.int64)
        n = self.source.n
        if self.target.n != n:
            raise ValueError(
                f"ShapePair: clouds differ in size ({n} vs {self.target.n})"
            )
        if gt.shape != (n,) or not np.array_equal(np.sort(gt), np.arange(n)):
            raise ValueError("ShapePair: gt_map is not a permutation of 0..N-1")
        gt.setflags(write=False)
        object.__setattr__(self, "gt_map", gt)

    @property
    def n(self):
        return self.source.n


def load_xyz(path) -> PointCloud:
    """Read an ASCII cloud: one point per line, three decimal fields."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ValueError(
                    f"{path}: line {lineno}: expected 3 fields, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric coordinate"
                ) from None
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 points, got {len(rows)}")
    return PointCloud(np.array(rows, dtype=np.float64))


def save_xyz(cloud: PointCloud, path):
    """Write a cloud in the load_xyz format, round-trip exact."""
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in cloud.points:
            # 17 significant digits: float64 round-trips exactly
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def load_map(path) -> np.ndarray:
    """Read a ground-truth map file: one target index per line."""
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
    return np.array(entries, dtype=np.int64)


def save_map(gt_map, path):
    with open(path, "w", encoding="ascii") as fh:
        for idx in gt_map:
            fh.write(f"{int(idx)}\n")


def normalize(cloud: PointCloud) -> PointCloud:
    """Center the centroid at the origin and scale the max radius to 1."""
    pts = cloud.points - cloud.points.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1).max()
    if radius <= 0.0:
        raise ValueError("normalize: degenerate cloud (all points identical)")
    return PointCloud(pts / radius)


def add_noise(cloud: PointCloud, sigma_noise, seed) -> PointCloud:
    """Perturb every coordinate with an independent N(0, sigma^2) draw."""
    if sigma_noise < 0:
        raise ValueError(f"add_noise: negative sigma {sigma_noise}")
    rng = np.random.default_rng(seed)
    jitter = rng.normal(0.0, sigma_noise, size=cloud.points.shape)
    return PointCloud(cloud.points + jitter)


def _sample_sphere(n, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_torus(n, rng, major=1.0, minor=0.4):
    u = rng.uniform(0.0, 2.0 * np.pi, size=n)
    v = rng.uniform(0.0, 2.0 * np.pi, size=n)
    ring = major + minor * np.cos(v)
    return np.stack(
        [ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1
    )


def _sample_articulated(n, rng):
    """Two spheres joined by a cylinder, a crude articulated body."""
    n_a = n // 3
    n_b = n // 3
    n_c = n - n_a - n_b
    head = 0.45 * _sample_sphere(n_a, rng) + np.array([0.0, 0.0, 1.0])
    body = 0.6 * _sample_sphere(n_b, rng) + np.array([0.0, 0.0, -0.6])
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_c)
    height = rng.uniform(-0.1, 0.55, size=n_c)
    limb = np.stack(
        [0.18 * np.cos(theta), 0.18 * np.sin(theta), height], axis=1
    )
    return np.concatenate([head, body, limb], axis=0)


_SAMPLERS = {
    "sphere": _sample_sphere,
    "torus": _sample_torus,
    "articulated": _sample_articulated,
}


def warp_field(points, centers, offsets, widths):
    """Gaussian radial-basis displacement evaluated at the given points.

    displacement(x) = sum_c offsets[c] * exp(-||x - centers[c]||^2 / widths[c]^2)
    """
    disp = np.zeros_like(points)
    for center, offset, width in zip(centers, offsets, widths):
        d2 = np.sum((points - center) ** 2, axis=1)
        disp += np.exp(-d2 / (width * width))[:, None] * offset
    return disp


def gen_pair(base_shape, n_points, warp_strength, seed, return_warp=False):
    """Build one synthetic training pair with exact ground truth.

    The base surface sample is normalized, the target copy is displaced by
    a smooth random warp (8 Gaussian centers, per-center offset scaled by
    warp_strength) and then permuted; gt_map records the permutation.
    Deterministic per (base_shape, n_points, warp_strength, seed).

    With return_warp=True also returns (centers, offsets, widths) so the
    displacement field can be re-evaluated independently.
    """
    if base_shape not in _SAMPLERS:
        raise ValueError(
            f"gen_pair: unknown base shape {base_shape!r}; expected one of "
            f"{', '.join(BASE_SHAPES)}"
        )
    if n_points < 8:
        raise ValueError(f"gen_pair: need n_points >= 8, got {n_points}")
    if warp_strength < 0:
        raise ValueError(f"gen_pair: negative warp_strength {warp_strength}")
    rng = np.random.default_rng(seed)
    source = normalize(PointCloud(_SAMPLERS[base_shape](n_points, rng)))

    centers = rng.uniform(-1.0, 1.0, size=(_WARP_CENTERS, 3))
    offsets = _WARP_OFFSET_SCALE * warp_strength * rng.normal(size=(_WARP_CENTERS, 3))
    widths = rng.uniform(0.4, 0.9, size=_WARP_CENTERS)
    warped = source.points + warp_field(source.points, centers, offsets, widths)

    perm = rng.permutation(n_points)
    target = np.empty_like(warped)
    target[perm] = warped
    pair = ShapePair(source=source, target=PointCloud(target), gt_map=perm)
    if return_warp:
        return pair, (centers, offsets, widths)
    return pair
