"""Pure geometric kernels: point-cloud container, normalization, farthest
point sampling, k-nearest neighbors and Chamfer distance.

All functions are deterministic, take immutable inputs and share no state.
Points are stored as float32; distance reductions accumulate in float64
except FPS, whose greedy min-distance bookkeeping runs in float32 (the
tie rules below make it deterministic regardless).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadCount, DegenerateCloud, EmptyCloud, InvalidCloud


class PointCloud:
    """Ordered list of 3D points, (n, 3) float32, all coordinates finite."""

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidCloud(f"expected (n, 3) points, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise InvalidCloud("point cloud contains NaN/Inf coordinates")
        self.points = pts

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.count

    def subset(self, indices) -> "PointCloud":
        return PointCloud(self.points[np.asarray(indices, dtype=np.int64)])

    def __repr__(self) -> str:
        return f"PointCloud(count={self.count})"


@dataclass(frozen=True)
class NormParams:
    """Centroid offset and max-radius scale of a (partial) cloud."""

    offset: np.ndarray  # (3,) float64
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64).reshape(3))
        if not self.scale > 0:
            raise DegenerateCloud(f"scale must be positive, got {self.scale}")


def compute_norm_params(pp: PointCloud) -> NormParams:
    """Offset = centroid, scale = max distance of any point to the centroid.

    Raises DegenerateCloud when every point coincides (scale would be 0).
    """
    if pp.count < 1:
        raise EmptyCloud("cannot normalize an empty cloud")
    pts = pp.points.astype(np.float64)
    offset = pts.mean(axis=0)
    centered = pts - offset
    scale = float(np.sqrt((centered * centered).sum(axis=1).max()))
    if scale == 0.0:
        raise DegenerateCloud("all points coincide; cannot derive a scale")
    return NormParams(offset=offset, scale=scale)


def normalize(pc: PointCloud, np_: NormParams) -> PointCloud:
    """(p - offset) / scale for every point; count unchanged."""
    pts = (pc.points.astype(np.float64) - np_.offset) / np_.scale
    return PointCloud(pts.astype(np.float32))


def denormalize(pc: PointCloud, np_: NormParams) -> PointCloud:
    """p * scale + offset; inverse of normalize up to float32 rounding."""
    pts = pc.points.astype(np.float64) * np_.scale + np_.offset
    return PointCloud(pts.astype(np.float32))


def _lex_first(pts: np.ndarray, candidates: np.ndarray) -> int:
    """Among candidate indices, pick lexicographically smallest (x, y, z),
    then lowest index."""
    if candidates.size == 1:
        return int(candidates[0])
    cx, cy, cz = pts[candidates, 0], pts[candidates, 1], pts[candidates, 2]
    order = np.lexsort((candidates, cz, cy, cx))
    return int(candidates[order[0]])


def fps(pc: PointCloud, k: int) -> np.ndarray:
    """Greedy farthest-point subset of size k; returns indices in pick order.

    Seed = point with maximum distance from the centroid; every later pick
    maximizes the min squared distance to the chosen set. Ties break on
    lexicographic (x, y, z), then lowest index, which makes the selected
    coordinates independent of input storage order.
    """
    n = pc.count
    if k < 1 or k > n:
        raise BadCount(f"fps needs 1 <= k <= {n}, got {k}")
    pts = pc.points
    centroid = pts.astype(np.float64).mean(axis=0).astype(np.float32)
    diff = pts - centroid
    d2 = (diff * diff).sum(axis=1)
    seed = _lex_first(pts, np.flatnonzero(d2 == d2.max()))

    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = seed
    if k == 1:
        return chosen
    diff = pts - pts[seed]
    dmin = (diff * diff).sum(axis=1)
    for i in range(1, k):
        best = _lex_first(pts, np.flatnonzero(dmin == dmin.max()))
        chosen[i] = best
        diff = pts - pts[best]
        np.minimum(dmin, (diff * diff).sum(axis=1), out=dmin)
    return chosen


def knn(pc: PointCloud, query, k: int) -> np.ndarray:
    """Indices of the k nearest points to query, ascending by distance,
    ties by lowest index."""
    n = pc.count
    if k < 1 or k > n:
        raise BadCount(f"knn needs 1 <= k <= {n}, got {k}")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    diff = pc.points.astype(np.float64) - q
    d2 = (diff * diff).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k].astype(np.int64)


def knn_many(pc: PointCloud, queries: np.ndarray, k: int) -> np.ndarray:
    """Row-batched knn: (q, 3) queries -> (q, k) index matrix.

    Produces exactly the rows knn() would return for each query.
    """
    n = pc.count
    if k < 1 or k > n:
        raise BadCount(f"knn needs 1 <= k <= {n}, got {k}")
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    diff = pc.points.astype(np.float64)[None, :, :] - q[:, None, :]
    d2 = (diff * diff).sum(axis=2)
    return np.argsort(d2, axis=1, kind="stable")[:, :k].astype(np.int64)


def _nn_indices(x: np.ndarray, y: np.ndarray, block: int = 2048) -> np.ndarray:
    """For each row of x, index of its nearest row in y (squared L2).

    Selection runs on a blocked float32 Gram expansion; callers wanting
    accurate distances recompute them from the returned indices.
    """
    n = x.shape[0]
    y2 = (y * y).sum(axis=1)
    out = np.empty(n, dtype=np.int64)
    for s in range(0, n, block):
        xb = x[s : s + block]
        g = xb @ y.T
        g *= -2.0
        g += (xb * xb).sum(axis=1)[:, None]
        g += y2[None, :]
        out[s : s + block] = g.argmin(axis=1)
    return out


def _directional_sq(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over x of the squared distance to its nearest neighbor in y.

    Returns (mean, nn_indices). The mean is recomputed in float64 from the
    selected pairs, so it does not inherit the float32 selection noise.
    """
    idx = _nn_indices(x, y)
    d = x.astype(np.float64) - y[idx].astype(np.float64)
    return float((d * d).sum(axis=1).mean()), idx


def chamfer_l2(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean-squared nearest-neighbor distance.

    (1/|a|) sum_x min_y ||x-y||^2 + (1/|b|) sum_y min_x ||y-x||^2,
    accumulated in float64. Exactly symmetric in (a, b).
    """
    if a.count < 1 or b.count < 1:
        raise EmptyCloud("chamfer distance needs non-empty clouds")
    ab, _ = _directional_sq(a.points, b.points)
    ba, _ = _directional_sq(b.points, a.points)
    return ab + ba


def chamfer_l2_parts(a: np.ndarray, b: np.ndarray):
    """Chamfer value plus the nearest-neighbor index maps, for gradient use.

    Returns (value, nn_a_to_b, nn_b_to_a) on raw (n, 3) float32 arrays.
    """
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise EmptyCloud("chamfer distance needs non-empty clouds")
    ab, idx_ab = _directional_sq(a, b)
    ba, idx_ba = _directional_sq(b, a)
    return ab + ba, idx_ab, idx_ba
