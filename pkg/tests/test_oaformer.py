import numpy as np
import pytest

from conftest import toy_config
from pcdcomplete.diffcore.tensor import constant
from pcdcomplete.errors import LayerCountMismatch, ShapeMismatch
from pcdcomplete.network import CompletionNetwork
from pcdcomplete.oaformer import Decoder, Encoder, OAConfig, OffsetAttentionLayer, SparseQueryHead


def _oa(cfg):
    return OAConfig.from_model(cfg)


def _layer_oracle(layer, f, ctx=None):
    """Straight-line recompute of one offset-attention layer (eval norm)."""
    ctx = f if ctx is None else ctx
    d = layer.d_model
    h = layer.n_heads
    dh = d // h
    q = f @ layer.wq.w.data + layer.wq.b.data
    k = ctx @ layer.wk.w.data + layer.wk.b.data
    v = ctx @ layer.wv.w.data + layer.wv.b.data
    qh = q.reshape(-1, h, dh).transpose(1, 0, 2)
    kh = k.reshape(-1, h, dh).transpose(1, 0, 2)
    vh = v.reshape(-1, h, dh).transpose(1, 0, 2)
    scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    attn = e / e.sum(axis=-1, keepdims=True)
    merged = (attn @ vh).transpose(1, 0, 2).reshape(-1, d)
    sa = merged @ layer.wo.w.data + layer.wo.b.data
    branch = f - sa if layer.offset_mode else sa
    pre = branch @ layer.lbr_linear.w.data + layer.lbr_linear.b.data
    xhat = pre / np.sqrt(1.0 + 1e-5)  # fresh running stats: mean 0, var 1
    lbr = np.maximum(xhat * layer.lbr_norm.gamma.data + layer.lbr_norm.beta.data, 0.0)
    return lbr + f


def test_single_token_one_key_softmax():
    layer = OffsetAttentionLayer(np.random.default_rng(0), d_model=8, n_heads=2, offset_mode=True)
    f = np.random.default_rng(1).normal(size=(1, 8)).astype(np.float32)
    out = layer(constant(f), None, training=False)
    assert np.allclose(out.data, _layer_oracle(layer, f), atol=1e-5)


def test_identical_rows_identical_outputs():
    layer = OffsetAttentionLayer(np.random.default_rng(2), d_model=8, n_heads=2, offset_mode=True)
    row = np.random.default_rng(3).normal(size=(1, 8)).astype(np.float32)
    f = np.tile(row, (5, 1))
    out = layer(constant(f), None, training=False).data
    assert np.allclose(out, np.tile(out[:1], (5, 1)), atol=1e-6)


def test_two_token_hand_trace():
    layer = OffsetAttentionLayer(np.random.default_rng(4), d_model=4, n_heads=1, offset_mode=True)
    for lin in (layer.wq, layer.wk, layer.wv, layer.wo, layer.lbr_linear):
        lin.w.data = np.eye(4, dtype=np.float32)
        lin.b.data = np.zeros(4, dtype=np.float32)
    f = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]], dtype=np.float32)
    out = layer(constant(f), None, training=False).data
    assert np.allclose(out, _layer_oracle(layer, f), atol=1e-6)


def test_layer_permutation_equivariance():
    layer = OffsetAttentionLayer(np.random.default_rng(5), d_model=16, n_heads=4, offset_mode=True)
    f = np.random.default_rng(6).normal(size=(10, 16)).astype(np.float32)
    perm = np.random.default_rng(7).permutation(10)
    out = layer(constant(f), None, training=True).data
    out_p = layer(constant(f[perm]), None, training=True).data
    assert np.abs(out_p - out[perm]).max() < 1e-5


def test_layer_rejects_wrong_width():
    layer = OffsetAttentionLayer(np.random.default_rng(8), d_model=8, n_heads=2, offset_mode=True)
    with pytest.raises(ShapeMismatch):
        layer(constant(np.zeros((3, 7), np.float32)), None, training=True)


def test_encoder_global_feature_token_order_free(toy_cfg):
    enc = Encoder(np.random.default_rng(9), _oa(toy_cfg))
    tokens = np.random.default_rng(10).normal(size=(8, 16)).astype(np.float32)
    perm = np.random.default_rng(11).permutation(8)
    ae = enc(constant(tokens), training=True).global_feature.data
    ae_p = enc(constant(tokens[perm]), training=True).global_feature.data
    assert np.abs(ae - ae_p).max() < 1e-5


def test_encoder_shapes_default_config():
    from pcdcomplete.config import ModelConfig

    cfg = ModelConfig()
    enc = Encoder(np.random.default_rng(12), _oa(cfg))
    tokens = np.random.default_rng(13).normal(size=(128, 256)).astype(np.float32)
    out = enc(constant(tokens), training=True)
    assert out.global_feature.data.shape == (1024,)
    assert len(out.memory) == 4
    assert all(m.data.shape == (128, 256) for m in out.memory)


def test_encoder_zero_tokens_finite(toy_cfg):
    enc = Encoder(np.random.default_rng(14), _oa(toy_cfg))
    out = enc(constant(np.zeros((8, 16), np.float32)), training=True)
    assert np.isfinite(out.global_feature.data).all()


def test_query_head_sparse_bias_probe():
    cfg = toy_config(n_queries=1, sparse_count=1)
    head = SparseQueryHead(np.random.default_rng(15), _oa(cfg))
    head.sparse_head.w.data[:] = 0.0
    head.sparse_head.b.data = np.array([0.1, -0.2, 0.3], dtype=np.float32)
    _, sparse = head(constant(np.random.default_rng(16).normal(size=16).astype(np.float32)))
    assert np.allclose(sparse.data, [[0.1, -0.2, 0.3]], atol=1e-7)


def test_query_head_shapes(toy_cfg):
    head = SparseQueryHead(np.random.default_rng(17), _oa(toy_cfg))
    queries, sparse = head(constant(np.zeros(16, np.float32)))
    assert queries.data.shape == (6, 16)
    assert sparse.data.shape == (6, 3)


def test_decoder_single_layer_doubles_skip_memory(toy_cfg):
    dec = Decoder(np.random.default_rng(18), _oa(toy_cfg))
    rng = np.random.default_rng(19)
    queries = constant(rng.normal(size=(6, 16)).astype(np.float32))
    memory = [constant(rng.normal(size=(8, 16)).astype(np.float32))]
    out = dec(queries, memory, training=False).data

    x = dec.self_layers[0](queries, None, training=False)
    doubled = constant(2.0 * memory[0].data)
    x = dec.cross_layers[0](x, doubled, training=False)
    expected = (x.data @ dec.out_proj.w.data) + dec.out_proj.b.data
    assert np.allclose(out, expected, atol=1e-5)


def test_decoder_layer_count_mismatch(toy_cfg):
    dec = Decoder(np.random.default_rng(20), _oa(toy_cfg))
    with pytest.raises(LayerCountMismatch):
        dec(constant(np.zeros((6, 16), np.float32)), [], training=False)


def test_skips_change_activations_not_param_count():
    cfg_on = toy_config(n_enc_layers=2, n_dec_layers=2, skip_connections=True)
    cfg_off = toy_config(n_enc_layers=2, n_dec_layers=2, skip_connections=False)
    net_on = CompletionNetwork(cfg_on, seed=0)
    net_off = CompletionNetwork(cfg_off, seed=0)
    assert net_on.param_count() == net_off.param_count()

    from conftest import random_cloud

    pc = random_cloud(32, seed=21)
    a = net_on.predict(pc).completed
    b = net_off.predict(pc).completed
    assert not np.allclose(a, b)


def test_all_variants_same_param_count():
    counts = set()
    for variant in "ABCD":
        cfg = toy_config().with_variant(variant)
        counts.add(CompletionNetwork(cfg, seed=0).param_count())
    assert len(counts) == 1


def test_offset_flag_changes_activations():
    net_d = CompletionNetwork(toy_config().with_variant("D"), seed=0)
    net_b = CompletionNetwork(toy_config().with_variant("B"), seed=0)
    from conftest import random_cloud

    pc = random_cloud(32, seed=22)
    assert not np.allclose(net_d.predict(pc).completed, net_b.predict(pc).completed)


@pytest.mark.parametrize("layers", [1, 2, 4])
def test_output_shapes_across_layer_counts(layers):
    cfg = toy_config(n_enc_layers=layers, n_dec_layers=layers)
    net = CompletionNetwork(cfg, seed=1)
    from conftest import random_cloud

    result = net.forward(random_cloud(32, seed=23), training=True)
    assert result.tokens.data.shape == (8, 16)
    assert result.sparse.data.shape == (6, 3)
    assert result.decoder_features.data.shape == (6, 8)
    assert result.completed.data.shape == (32 + 18, 3)
