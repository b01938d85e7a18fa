"""Folding-based dense generation and final cloud assembly.

Each query's decoder feature mixes with its sparse anchor point, then a
1D grid of samples folds twice through small MLPs into per-center offset
points. Generated points are residual: zero fold weights reproduce the
anchors exactly. assemble() concatenates the generated points, the sparse
points, and the observed partial into the final completed cloud.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .diffcore import ops
from .diffcore.layers import Linear, Mlp
from .diffcore.tensor import Tensor, constant
from .errors import CountMismatch, ShapeMismatch
from .geomcore import PointCloud


@dataclass(frozen=True)
class FoldConfig:
    points_per_center: int
    n_queries: int
    sparse_count: int
    n_partial: int
    decoder_width: int
    mixed_width: int
    hidden: int

    def __post_init__(self):
        if self.points_per_center < 1:
            raise ShapeMismatch("points_per_center must be >= 1")

    @property
    def grid(self) -> np.ndarray:
        if self.points_per_center == 1:
            return np.zeros(1, dtype=np.float32)
        return np.linspace(-0.5, 0.5, self.points_per_center, dtype=np.float32)

    @property
    def missing_count(self) -> int:
        return self.n_queries * self.points_per_center + self.sparse_count

    @property
    def completed_count(self) -> int:
        return self.n_partial + self.missing_count

    @classmethod
    def from_model(cls, cfg: ModelConfig) -> "FoldConfig":
        return cls(
            points_per_center=cfg.points_per_center,
            n_queries=cfg.n_queries,
            sparse_count=cfg.sparse_count,
            n_partial=cfg.n_partial,
            decoder_width=cfg.decoder_width,
            mixed_width=cfg.fold_mixed_width,
            hidden=cfg.fold_hidden,
        )


class FoldingGenerator:
    def __init__(self, rng: np.random.Generator, cfg: FoldConfig, dtype=np.float32):
        self.cfg = cfg
        self.mixer = Linear(rng, cfg.decoder_width + 3, cfg.mixed_width, dtype)
        self.fold1 = Mlp(rng, (cfg.mixed_width + 1, cfg.hidden, 3), dtype)
        self.fold2 = Mlp(rng, (cfg.mixed_width + 3, cfg.hidden, 3), dtype)

    def __call__(self, decoder_features: Tensor, sparse: Tensor, training: bool = True) -> Tensor:
        """(n_queries, decoder_width) features + (n_queries, 3) anchors ->
        (n_queries * points_per_center, 3) generated points."""
        cfg = self.cfg
        if decoder_features.data.shape != (cfg.n_queries, cfg.decoder_width):
            raise ShapeMismatch(
                f"decoder features {decoder_features.shape} != ({cfg.n_queries}, {cfg.decoder_width})"
            )
        if sparse.data.shape != (cfg.n_queries, 3):
            raise ShapeMismatch(f"sparse anchors {sparse.shape} != ({cfg.n_queries}, 3)")
        f = cfg.points_per_center
        mixed = ops.relu(self.mixer(ops.concat_lastdim(decoder_features, sparse)))
        rep = ops.repeat_rows(mixed, f)
        grid_col = constant(np.tile(cfg.grid, cfg.n_queries)[:, None].astype(rep.data.dtype))
        first = self.fold1(ops.concat_lastdim(rep, grid_col))
        offsets = self.fold2(ops.concat_lastdim(rep, first))
        return ops.add(ops.repeat_rows(sparse, f), offsets)

    def named_params(self, prefix: str):
        yield from self.mixer.named_params(f"{prefix}.mixer")
        yield from self.fold1.named_params(f"{prefix}.fold1")
        yield from self.fold2.named_params(f"{prefix}.fold2")

    def named_buffers(self, prefix: str):
        return iter(())


def assemble(pm_fold: PointCloud, ps: PointCloud, pp_n: PointCloud, cfg: FoldConfig):
    """Concatenate folded points + sparse points into the missing cloud, then
    prepend the observed partial to form the completed cloud.

    The partial's points are copied bit-exactly to the head of the result.
    """
    if pm_fold.count != cfg.n_queries * cfg.points_per_center:
        raise CountMismatch(
            f"folded cloud has {pm_fold.count} points, expected {cfg.n_queries * cfg.points_per_center}"
        )
    if ps.count != cfg.sparse_count:
        raise CountMismatch(f"sparse cloud has {ps.count} points, expected {cfg.sparse_count}")
    if pp_n.count != cfg.n_partial:
        raise CountMismatch(f"partial cloud has {pp_n.count} points, expected {cfg.n_partial}")
    pm = PointCloud(np.concatenate([pm_fold.points, ps.points], axis=0))
    pc = PointCloud(np.concatenate([pp_n.points, pm.points], axis=0))
    return pm, pc
