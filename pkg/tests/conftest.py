import numpy as np
import pytest

from pcdcomplete.config import ModelConfig
from pcdcomplete.geomcore import PointCloud


def toy_config(**overrides) -> ModelConfig:
    base = dict(
        n_partial=32,
        n_regions=8,
        k_group=4,
        k_edge=2,
        edge_widths=(6, 8),
        pe_hidden=4,
        pe_width=8,
        d_model=16,
        n_heads=2,
        n_enc_layers=1,
        n_dec_layers=1,
        global_width=16,
        n_queries=6,
        sparse_count=6,
        decoder_width=8,
        points_per_center=2,
        fold_mixed_width=12,
        fold_hidden=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def toy_cfg():
    return toy_config()


def random_cloud(n: int, seed: int, lo=-1.0, hi=1.0) -> PointCloud:
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(lo, hi, size=(n, 3)).astype(np.float32))
