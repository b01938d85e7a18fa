"""Tokenization of a normalized partial cloud.

FPS picks region centers, KNN gathers the member points of each local
region, a two-stage EdgeConv backbone pools one feature vector per region,
and a small MLP embeds each center's position. Region features and
positional embeddings concatenate into the transformer's input tokens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geomcore
from .config import ModelConfig
from .diffcore import ops
from .diffcore.layers import BatchNorm1d, Linear, Mlp
from .diffcore.tensor import Tensor, constant
from .errors import ShapeMismatch
from .geomcore import PointCloud


@dataclass
class LocalRegions:
    centers: PointCloud
    center_indices: np.ndarray  # (R,) into the source cloud
    groups: np.ndarray  # (R, k_group) member indices into the source cloud


def build_regions(pp_n: PointCloud, n_regions: int, k_group: int) -> LocalRegions:
    """FPS centers plus the k_group nearest members around each center."""
    idx = geomcore.fps(pp_n, n_regions)
    centers = pp_n.points[idx]
    groups = geomcore.knn_many(pp_n, centers, k_group)
    return LocalRegions(PointCloud(centers), idx, groups)


def _group_neighbor_indices(coords: np.ndarray, k_edge: int) -> np.ndarray:
    """Per-member neighbor lists inside each group, self excluded.

    coords is (R, P, 3); returns (R, P, k_edge) local indices in [0, P).
    Ties break toward lower index (stable sort), mirroring geomcore.knn.
    """
    r, p, _ = coords.shape
    diff = coords[:, :, None, :].astype(np.float64) - coords[:, None, :, :].astype(np.float64)
    d2 = (diff * diff).sum(axis=3)
    order = np.argsort(d2, axis=2, kind="stable")
    keep = order != np.arange(p)[None, :, None]
    compact = order[keep].reshape(r, p, p - 1)
    return compact[:, :, :k_edge]


class EdgeConvFeatures:
    """Stacked EdgeConv layers pooled to one feature vector per region.

    Each layer maps edge features [x_j ; x_m - x_j] through a
    linear/batchnorm/relu block and max-pools over the k_edge neighbors;
    the final per-member features max-pool over the group.
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig, dtype=np.float32):
        self.k_edge = cfg.k_edge
        self.dtype = dtype
        self.linears = []
        self.norms = []
        d_in = 3
        for width in cfg.edge_widths:
            self.linears.append(Linear(rng, 2 * d_in, width, dtype))
            self.norms.append(BatchNorm1d(width, dtype))
            d_in = width

    def __call__(self, regions: LocalRegions, pp_n: PointCloud, training: bool) -> Tensor:
        groups = regions.groups
        r, p = groups.shape
        k = self.k_edge
        coords = pp_n.points[groups]  # (R, P, 3)
        local_nb = _group_neighbor_indices(coords, k)  # (R, P, K)
        base = (np.arange(r, dtype=np.int64) * p)[:, None, None]
        flat_nb = (local_nb + base).reshape(-1)  # indices into the (R*P, d) member table

        x = constant(coords.reshape(r * p, 3), dtype=self.dtype)
        for linear, norm in zip(self.linears, self.norms):
            width = linear.w.shape[1]
            rep = ops.repeat_rows(x, k)
            nbr = ops.take_rows(x, flat_nb)
            edge = ops.concat_lastdim(rep, ops.sub(nbr, rep))
            h = ops.relu(norm(linear(edge), training))
            x = ops.max_over_axis(ops.reshape(h, (r * p, k, width)), 1)
        return ops.max_over_axis(ops.reshape(x, (r, p, x.shape[1])), 1)

    def named_params(self, prefix: str):
        for i, (linear, norm) in enumerate(zip(self.linears, self.norms)):
            yield from linear.named_params(f"{prefix}.{i}.linear")
            yield from norm.named_params(f"{prefix}.{i}.norm")

    def named_buffers(self, prefix: str):
        for i, norm in enumerate(self.norms):
            yield from norm.named_buffers(f"{prefix}.{i}.norm")


class CenterEmbedding:
    """Two-layer MLP from center coordinates to positional embeddings."""

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig, dtype=np.float32):
        self.dtype = dtype
        self.mlp = Mlp(rng, (3, cfg.pe_hidden, cfg.pe_width), dtype)

    def __call__(self, centers: PointCloud) -> Tensor:
        return self.mlp(constant(centers.points, dtype=self.dtype))

    def named_params(self, prefix: str):
        yield from self.mlp.named_params(prefix)

    def named_buffers(self, prefix: str):
        return iter(())


def make_tokens(fe: Tensor, pe: Tensor) -> Tensor:
    """Row-wise [FE | PE] concatenation into the transformer input tokens."""
    if fe.data.shape[0] != pe.data.shape[0]:
        raise ShapeMismatch(f"token counts differ: {fe.shape} vs {pe.shape}")
    return ops.concat_lastdim(fe, pe)
