"""Offset-attention transformer encoder and decoder.

An offset-attention layer feeds the difference between its input tokens
and their attention output through a linear/batchnorm/relu block and adds
the input back. With offset_attention disabled the same block processes
the attention output directly (plain residual attention), which keeps the
parameter count identical across ablation variants. The decoder mirrors
the encoder but inserts a cross-attention sublayer whose context is the
encoder memory; with skip_connections enabled, layer i attends over
(encoder layer-i memory + final encoder memory) summed element-wise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .diffcore import ops
from .diffcore.layers import BatchNorm1d, Linear, Mlp
from .diffcore.tensor import Tensor
from .errors import LayerCountMismatch, ShapeMismatch


@dataclass(frozen=True)
class OAConfig:
    d_model: int
    n_heads: int
    n_enc_layers: int
    n_dec_layers: int
    global_width: int
    n_queries: int
    sparse_count: int
    decoder_width: int
    query_pe_hidden: int
    offset_attention: bool
    skip_connections: bool

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeMismatch("d_model must divide evenly into heads")
        if self.sparse_count != self.n_queries:
            raise ShapeMismatch("sparse_count must equal n_queries")

    @classmethod
    def from_model(cls, cfg: ModelConfig) -> "OAConfig":
        return cls(
            d_model=cfg.d_model,
            n_heads=cfg.n_heads,
            n_enc_layers=cfg.n_enc_layers,
            n_dec_layers=cfg.n_dec_layers,
            global_width=cfg.global_width,
            n_queries=cfg.n_queries,
            sparse_count=cfg.sparse_count,
            decoder_width=cfg.decoder_width,
            query_pe_hidden=cfg.pe_hidden,
            offset_attention=cfg.offset_attention,
            skip_connections=cfg.skip_connections,
        )


@dataclass
class EncoderOutput:
    memory: list  # per-layer (tokens, d_model) activations
    global_feature: Tensor  # (global_width,)


class OffsetAttentionLayer:
    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int, offset_mode: bool, dtype=np.float32):
        self.d_model = d_model
        self.n_heads = n_heads
        self.offset_mode = offset_mode
        self.wq = Linear(rng, d_model, d_model, dtype)
        self.wk = Linear(rng, d_model, d_model, dtype)
        self.wv = Linear(rng, d_model, d_model, dtype)
        self.wo = Linear(rng, d_model, d_model, dtype)
        self.lbr_linear = Linear(rng, d_model, d_model, dtype)
        self.lbr_norm = BatchNorm1d(d_model, dtype)

    def _heads(self, t: Tensor, n: int) -> Tensor:
        dh = self.d_model // self.n_heads
        return ops.permute(ops.reshape(t, (n, self.n_heads, dh)), (1, 0, 2))

    def __call__(self, f: Tensor, context: Tensor | None, training: bool) -> Tensor:
        if f.data.ndim != 2 or f.data.shape[1] != self.d_model:
            raise ShapeMismatch(f"attention input must be (tokens, {self.d_model}), got {f.shape}")
        ctx = f if context is None else context
        if ctx.data.shape[1] != self.d_model:
            raise ShapeMismatch(f"attention context width {ctx.shape} != {self.d_model}")
        t, c = f.data.shape[0], ctx.data.shape[0]
        dh = self.d_model // self.n_heads
        qh = self._heads(self.wq(f), t)
        kh = self._heads(self.wk(ctx), c)
        vh = self._heads(self.wv(ctx), c)
        scores = ops.scale(ops.matmul(qh, ops.permute(kh, (0, 2, 1))), 1.0 / math.sqrt(dh))
        attn = ops.softmax_lastdim(scores)
        merged = ops.reshape(ops.permute(ops.matmul(attn, vh), (1, 0, 2)), (t, self.d_model))
        sa = self.wo(merged)
        branch = ops.sub(f, sa) if self.offset_mode else sa
        return ops.add(ops.relu(self.lbr_norm(self.lbr_linear(branch), training)), f)

    def named_params(self, prefix: str):
        for name, mod in (
            ("wq", self.wq),
            ("wk", self.wk),
            ("wv", self.wv),
            ("wo", self.wo),
            ("lbr_linear", self.lbr_linear),
            ("lbr_norm", self.lbr_norm),
        ):
            yield from mod.named_params(f"{prefix}.{name}")

    def named_buffers(self, prefix: str):
        yield from self.lbr_norm.named_buffers(f"{prefix}.lbr_norm")


class Encoder:
    """Stacked self-mode offset-attention layers plus the global feature head."""

    def __init__(self, rng: np.random.Generator, cfg: OAConfig, dtype=np.float32):
        self.layers = [
            OffsetAttentionLayer(rng, cfg.d_model, cfg.n_heads, cfg.offset_attention, dtype)
            for _ in range(cfg.n_enc_layers)
        ]
        self.global_head = Linear(rng, cfg.d_model, cfg.global_width, dtype)

    def __call__(self, tokens: Tensor, training: bool) -> EncoderOutput:
        memory = []
        x = tokens
        for layer in self.layers:
            x = layer(x, None, training)
            memory.append(x)
        pooled = ops.maxpool_over_tokens(x)
        return EncoderOutput(memory=memory, global_feature=self.global_head(pooled))

    def named_params(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}.layers.{i}")
        yield from self.global_head.named_params(f"{prefix}.global_head")

    def named_buffers(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.named_buffers(f"{prefix}.layers.{i}")


class SparseQueryHead:
    """Global feature -> sparse full-shape points and decoder query tokens.

    Queries are the reshaped output of a fully connected layer, each
    augmented by a positional embedding of its own sparse point, so every
    query is anchored to one predicted coarse location.
    """

    def __init__(self, rng: np.random.Generator, cfg: OAConfig, dtype=np.float32):
        self.cfg = cfg
        self.sparse_head = Linear(rng, cfg.global_width, cfg.sparse_count * 3, dtype)
        self.query_head = Linear(rng, cfg.global_width, cfg.n_queries * cfg.d_model, dtype)
        self.query_pe = Mlp(rng, (3, cfg.query_pe_hidden, cfg.d_model), dtype)

    def __call__(self, global_feature: Tensor) -> tuple[Tensor, Tensor]:
        if global_feature.data.shape != (self.cfg.global_width,):
            raise ShapeMismatch(
                f"global feature must be ({self.cfg.global_width},), got {global_feature.shape}"
            )
        sparse = ops.reshape(self.sparse_head(global_feature), (self.cfg.sparse_count, 3))
        raw = ops.reshape(self.query_head(global_feature), (self.cfg.n_queries, self.cfg.d_model))
        queries = ops.add(raw, self.query_pe(sparse))
        return queries, sparse

    def named_params(self, prefix: str):
        yield from self.sparse_head.named_params(f"{prefix}.sparse_head")
        yield from self.query_head.named_params(f"{prefix}.query_head")
        yield from self.query_pe.named_params(f"{prefix}.query_pe")

    def named_buffers(self, prefix: str):
        return iter(())


class Decoder:
    """Per block: self-attention over queries, then cross-attention into the
    (optionally skip-summed) encoder memory; a final linear maps each token
    to the decoder feature width."""

    def __init__(self, rng: np.random.Generator, cfg: OAConfig, dtype=np.float32):
        self.cfg = cfg
        self.self_layers = []
        self.cross_layers = []
        for _ in range(cfg.n_dec_layers):
            self.self_layers.append(
                OffsetAttentionLayer(rng, cfg.d_model, cfg.n_heads, cfg.offset_attention, dtype)
            )
            self.cross_layers.append(
                OffsetAttentionLayer(rng, cfg.d_model, cfg.n_heads, cfg.offset_attention, dtype)
            )
        self.out_proj = Linear(rng, cfg.d_model, cfg.decoder_width, dtype)

    def __call__(self, queries: Tensor, memory: list, training: bool) -> Tensor:
        if len(self.self_layers) > len(memory):
            raise LayerCountMismatch(
                f"decoder needs {len(self.self_layers)} memories, encoder provided {len(memory)}"
            )
        last = memory[-1]
        x = queries
        for i in range(len(self.self_layers)):
            x = self.self_layers[i](x, None, training)
            ctx = ops.add(memory[i], last) if self.cfg.skip_connections else last
            x = self.cross_layers[i](x, ctx, training)
        return self.out_proj(x)

    def named_params(self, prefix: str):
        for i in range(len(self.self_layers)):
            yield from self.self_layers[i].named_params(f"{prefix}.blocks.{i}.self")
            yield from self.cross_layers[i].named_params(f"{prefix}.blocks.{i}.cross")
        yield from self.out_proj.named_params(f"{prefix}.out_proj")

    def named_buffers(self, prefix: str):
        for i in range(len(self.self_layers)):
            yield from self.self_layers[i].named_buffers(f"{prefix}.blocks.{i}.self")
            yield from self.cross_layers[i].named_buffers(f"{prefix}.blocks.{i}.cross")
