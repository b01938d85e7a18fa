import numpy as np
import pytest

from conftest import random_cloud, toy_config
from pcdcomplete.config import ModelConfig
from pcdcomplete.diffcore.tensor import constant
from pcdcomplete.errors import CountMismatch
from pcdcomplete.foldgen import FoldConfig, FoldingGenerator, assemble
from pcdcomplete.geomcore import PointCloud, chamfer_l2
from pcdcomplete.geomcore import _directional_sq


def _fold_cfg(**kw):
    return FoldConfig.from_model(toy_config(**kw))


def _zero_folder(cfg_kwargs=None, seed=0):
    cfg = _fold_cfg(**(cfg_kwargs or {}))
    folder = FoldingGenerator(np.random.default_rng(seed), cfg)
    for lin in [folder.fold2.layers[-1]]:
        lin.w.data[:] = 0.0
        lin.b.data[:] = 0.0
    return cfg, folder


def test_zero_fold_weights_reproduce_anchors():
    cfg, folder = _zero_folder()
    rng = np.random.default_rng(1)
    ad = constant(rng.normal(size=(cfg.n_queries, cfg.decoder_width)).astype(np.float32))
    ps = constant(rng.normal(size=(cfg.n_queries, 3)).astype(np.float32))
    points = folder(ad, ps).data
    assert np.array_equal(points, np.repeat(ps.data, cfg.points_per_center, axis=0))


def test_single_grid_sample_gives_one_point_per_center():
    cfg = _fold_cfg(points_per_center=1)
    folder = FoldingGenerator(np.random.default_rng(2), cfg)
    rng = np.random.default_rng(3)
    ad = constant(rng.normal(size=(cfg.n_queries, cfg.decoder_width)).astype(np.float32))
    ps = constant(rng.normal(size=(cfg.n_queries, 3)).astype(np.float32))
    assert folder(ad, ps).data.shape == (cfg.n_queries, 3)


def test_default_config_fold_counts():
    cfg = FoldConfig.from_model(ModelConfig())
    assert cfg.n_queries * cfg.points_per_center == 5952
    assert cfg.missing_count == 6144
    assert cfg.completed_count == 8192
    assert cfg.grid.shape == (31,)
    assert cfg.grid.min() == -0.5 and cfg.grid.max() == 0.5


def test_assemble_counts_and_bit_exact_partial():
    cfg = _fold_cfg()
    rng = np.random.default_rng(4)
    pm_fold = PointCloud(rng.normal(size=(cfg.n_queries * cfg.points_per_center, 3)).astype(np.float32))
    ps = PointCloud(rng.normal(size=(cfg.sparse_count, 3)).astype(np.float32))
    pp = random_cloud(cfg.n_partial, seed=5)
    pm, pc = assemble(pm_fold, ps, pp, cfg)
    assert pm.count == cfg.missing_count
    assert pc.count == cfg.completed_count
    assert np.array_equal(pc.points[: pp.count], pp.points)
    assert np.array_equal(pm.points[: pm_fold.count], pm_fold.points)


def test_assemble_partial_to_completed_direction_is_zero():
    cfg = _fold_cfg()
    rng = np.random.default_rng(6)
    pm_fold = PointCloud(rng.normal(size=(cfg.n_queries * cfg.points_per_center, 3)).astype(np.float32))
    ps = PointCloud(rng.normal(size=(cfg.sparse_count, 3)).astype(np.float32))
    pp = random_cloud(cfg.n_partial, seed=7)
    _, pc = assemble(pm_fold, ps, pp, cfg)
    direction_pp_to_pc, _ = _directional_sq(pp.points, pc.points)
    assert direction_pp_to_pc == 0.0
    assert chamfer_l2(pp, pc) >= 0.0


def test_assemble_count_mismatch():
    cfg = _fold_cfg()
    rng = np.random.default_rng(8)
    good_fold = PointCloud(rng.normal(size=(cfg.n_queries * cfg.points_per_center, 3)).astype(np.float32))
    good_ps = PointCloud(rng.normal(size=(cfg.sparse_count, 3)).astype(np.float32))
    good_pp = random_cloud(cfg.n_partial, seed=9)
    with pytest.raises(CountMismatch):
        assemble(PointCloud(good_fold.points[:-1]), good_ps, good_pp, cfg)
    with pytest.raises(CountMismatch):
        assemble(good_fold, PointCloud(good_ps.points[:-1]), good_pp, cfg)
    with pytest.raises(CountMismatch):
        assemble(good_fold, good_ps, PointCloud(good_pp.points[:-1]), cfg)


def test_generated_points_finite_and_near_anchors_untrained():
    cfg = _fold_cfg()
    folder = FoldingGenerator(np.random.default_rng(10), cfg)
    rng = np.random.default_rng(11)
    ad = constant(rng.normal(size=(cfg.n_queries, cfg.decoder_width)).astype(np.float32))
    ps_arr = rng.uniform(-1, 1, size=(cfg.n_queries, 3)).astype(np.float32)
    points = folder(ad, constant(ps_arr)).data
    assert np.isfinite(points).all()
    offsets = points - np.repeat(ps_arr, cfg.points_per_center, axis=0)
    # residual formulation keeps untrained output near its anchors
    assert np.abs(offsets).max() < 10.0
