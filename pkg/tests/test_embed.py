import numpy as np
import pytest

from conftest import random_cloud, toy_config
from pcdcomplete.config import ModelConfig
from pcdcomplete.diffcore.tensor import constant
from pcdcomplete.embed import CenterEmbedding, EdgeConvFeatures, build_regions, make_tokens
from pcdcomplete.errors import ShapeMismatch
from pcdcomplete.geomcore import PointCloud


def test_build_regions_every_point_its_own_group():
    pc = random_cloud(12, seed=0)
    regions = build_regions(pc, n_regions=12, k_group=1)
    assert sorted(regions.center_indices.tolist()) == list(range(12))
    for center_idx, group in zip(regions.center_indices, regions.groups):
        assert group.tolist() == [center_idx]


def test_build_regions_default_counts():
    pc = random_cloud(2048, seed=1)
    regions = build_regions(pc, n_regions=128, k_group=32)
    assert regions.centers.count == 128
    assert regions.groups.shape == (128, 32)
    for center_idx, group in zip(regions.center_indices, regions.groups):
        assert center_idx in group


def test_build_regions_permutation_same_center_coords():
    pc = random_cloud(256, seed=2)
    rng = np.random.default_rng(3)
    perm = rng.permutation(256)
    permuted = PointCloud(pc.points[perm])
    a = build_regions(pc, 16, 8)
    b = build_regions(permuted, 16, 8)
    assert np.array_equal(a.centers.points, b.centers.points)


def test_edgeconv_degenerate_group_is_finite():
    cfg = toy_config(n_partial=8, n_regions=2, k_group=4, k_edge=2)
    pts = np.zeros((8, 3), dtype=np.float32)
    pts[4:] = 1.0  # two clusters of identical points
    pc = PointCloud(pts)
    regions = build_regions(pc, 2, 4)
    extractor = EdgeConvFeatures(np.random.default_rng(0), cfg)
    fe = extractor(regions, pc, training=True)
    assert np.isfinite(fe.data).all()
    assert fe.data.shape == (2, cfg.fe_width)


def test_edgeconv_offset_half_cancels_translation():
    # zero the weight rows for the absolute-coordinate half of the edge
    # feature; the remaining (x_m - x_j) half must be translation invariant
    cfg = toy_config(n_regions=4, k_group=4, k_edge=2, edge_widths=(6,))
    extractor = EdgeConvFeatures(np.random.default_rng(1), cfg)
    extractor.linears[0].w.data[:3, :] = 0.0
    pc = random_cloud(32, seed=4)
    shifted = PointCloud(pc.points + np.float32(0.73))
    fe_a = extractor(build_regions(pc, 4, 4), pc, training=True)
    fe_b = extractor(build_regions(shifted, 4, 4), shifted, training=True)
    assert np.allclose(fe_a.data, fe_b.data, atol=1e-6)


def test_edgeconv_three_point_hand_trace():
    # one group of 3 points, identity MLP at width 6, max over the 2
    # neighbor edges, recomputed with straight-line numpy
    cfg = toy_config(n_partial=3, n_regions=1, k_group=3, k_edge=2, edge_widths=(6,))
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.5, -0.5], [-1.0, 2.0, 0.25]], dtype=np.float32)
    pc = PointCloud(pts)
    regions = build_regions(pc, 1, 3)
    extractor = EdgeConvFeatures(np.random.default_rng(2), cfg)
    lin = extractor.linears[0]
    lin.w.data = np.eye(6, dtype=np.float32)
    lin.b.data = np.zeros(6, dtype=np.float32)
    norm = extractor.norms[0]
    fe = extractor(
        regions, pc, training=False
    )  # eval-mode norm with fresh stats = scale by 1/sqrt(1+eps)

    members = pts[regions.groups[0]]
    scale = 1.0 / np.sqrt(1.0 + 1e-5)
    per_member = []
    for j in range(3):
        edges = []
        others = sorted(range(3), key=lambda m: (((members[m] - members[j]) ** 2).sum(), m))
        for m in others[1:3]:  # 2 nearest neighbors, self excluded
            e = np.concatenate([members[j], members[m] - members[j]])
            edges.append(np.maximum(e * scale * norm.gamma.data + norm.beta.data, 0.0))
        per_member.append(np.max(edges, axis=0))
    expected = np.max(per_member, axis=0)
    assert np.allclose(fe.data[0], expected, atol=1e-6)


def test_center_embedding_zero_input_probe():
    cfg = toy_config()
    embed = CenterEmbedding(np.random.default_rng(3), cfg)
    zero = PointCloud(np.zeros((4, 3), dtype=np.float32))
    pe = embed(zero)
    # zero centers: the first linear contributes only its bias
    first = embed.mlp.layers[0]
    hidden = np.maximum(first.b.data, 0.0)
    second = embed.mlp.layers[1]
    expected = hidden @ second.w.data + second.b.data
    assert np.allclose(pe.data, np.tile(expected, (4, 1)), atol=1e-6)


def test_center_embedding_identical_centers_identical_rows():
    cfg = toy_config()
    embed = CenterEmbedding(np.random.default_rng(4), cfg)
    centers = PointCloud(np.tile(np.array([[0.3, -0.2, 0.9]], dtype=np.float32), (5, 1)))
    pe = embed(centers).data
    assert np.array_equal(pe, np.tile(pe[:1], (5, 1)))


def test_token_widths_add_up():
    cfg = ModelConfig()
    assert cfg.pe_width == cfg.fe_width == 128
    assert cfg.token_width == 256


def test_make_tokens_order_and_zero_pe():
    fe = constant(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    pe = constant(np.array([[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]], dtype=np.float32))
    tokens = make_tokens(fe, pe)
    assert tokens.data.shape == (2, 5)
    assert tokens.data[0].tolist() == [1.0, 2.0, 5.0, 6.0, 7.0]
    zero_pe = constant(np.zeros((2, 3), dtype=np.float32))
    tokens2 = make_tokens(fe, zero_pe)
    assert np.array_equal(tokens2.data[:, :2], fe.data)
    assert np.all(tokens2.data[:, 2:] == 0)


def test_make_tokens_row_mismatch():
    fe = constant(np.zeros((2, 2), dtype=np.float32))
    pe = constant(np.zeros((3, 2), dtype=np.float32))
    with pytest.raises(ShapeMismatch):
        make_tokens(fe, pe)
