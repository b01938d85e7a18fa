"""The completion network: embedding -> encoder -> queries -> decoder ->
folding -> assembled clouds, plus checkpoint save/load."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .diffcore import ops
from .diffcore.checkpoint import load_checkpoint, save_checkpoint
from .diffcore.layers import Linear, collect_params
from .diffcore.tensor import Tensor, constant
from .embed import CenterEmbedding, EdgeConvFeatures, build_regions, make_tokens
from .errors import ConfigMismatch, ShapeMismatch
from .foldgen import FoldConfig, FoldingGenerator
from .geomcore import PointCloud
from .oaformer import Decoder, Encoder, OAConfig, SparseQueryHead


@dataclass
class ForwardResult:
    sparse: Tensor  # (sparse_count, 3)
    missing: Tensor  # (missing_count, 3)
    completed: Tensor  # (completed_count, 3)
    tokens: Tensor  # (n_regions, token_width)
    global_feature: Tensor  # (global_width,)
    decoder_features: Tensor  # (n_queries, decoder_width)


@dataclass
class Prediction:
    sparse: np.ndarray
    missing: np.ndarray
    completed: np.ndarray


class CompletionNetwork:
    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        rng = np.random.Generator(np.random.PCG64(seed))
        self.edge_features = EdgeConvFeatures(rng, cfg, dtype)
        self.center_embed = CenterEmbedding(rng, cfg, dtype)
        self.input_proj = (
            Linear(rng, cfg.token_width, cfg.d_model, dtype) if cfg.token_width != cfg.d_model else None
        )
        oa = OAConfig.from_model(cfg)
        self.encoder = Encoder(rng, oa, dtype)
        self.head = SparseQueryHead(rng, oa, dtype)
        self.decoder = Decoder(rng, oa, dtype)
        self.folder = FoldingGenerator(rng, FoldConfig.from_model(cfg), dtype)

    def forward(self, pp_n: PointCloud, training: bool = True) -> ForwardResult:
        """Run the network on a normalized partial cloud.

        The observed points enter the completed cloud as constants, so no
        gradient flows into them through the loss.
        """
        cfg = self.cfg
        if pp_n.count < max(cfg.n_regions, cfg.k_group):
            raise ShapeMismatch(
                f"partial cloud of {pp_n.count} points is too small for "
                f"{cfg.n_regions} regions of {cfg.k_group}"
            )
        regions = build_regions(pp_n, cfg.n_regions, cfg.k_group)
        fe = self.edge_features(regions, pp_n, training)
        pe = self.center_embed(regions.centers)
        tokens = make_tokens(fe, pe)
        x = self.input_proj(tokens) if self.input_proj is not None else tokens
        enc = self.encoder(x, training)
        queries, sparse = self.head(enc.global_feature)
        decoder_features = self.decoder(queries, enc.memory, training)
        folded = self.folder(decoder_features, sparse, training)
        missing = ops.concat_rows(folded, sparse)
        completed = ops.concat_rows(constant(pp_n.points, dtype=self.dtype), missing)
        return ForwardResult(
            sparse=sparse,
            missing=missing,
            completed=completed,
            tokens=tokens,
            global_feature=enc.global_feature,
            decoder_features=decoder_features,
        )

    def predict(self, pp_n: PointCloud) -> Prediction:
        """Inference forward pass (eval-mode batchnorm, no recording)."""
        result = self.forward(pp_n, training=False)
        return Prediction(
            sparse=result.sparse.numpy(),
            missing=result.missing.numpy(),
            completed=result.completed.numpy(),
        )

    # -- parameter plumbing -------------------------------------------------

    def named_params(self):
        yield from self.edge_features.named_params("edge_features")
        yield from self.center_embed.named_params("center_embed")
        if self.input_proj is not None:
            yield from self.input_proj.named_params("input_proj")
        yield from self.encoder.named_params("encoder")
        yield from self.head.named_params("head")
        yield from self.decoder.named_params("decoder")
        yield from self.folder.named_params("folder")

    def named_buffers(self):
        yield from self.edge_features.named_buffers("edge_features")
        yield from self.encoder.named_buffers("encoder")
        yield from self.decoder.named_buffers("decoder")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in collect_params(self.named_params())]

    def param_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: t.data for name, t in collect_params(self.named_params())}
        for name, arr in self.named_buffers():
            state[name] = arr
        return state

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = dict(collect_params(self.named_params()))
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        if expected != set(arrays):
            missing = expected - set(arrays)
            extra = set(arrays) - expected
            raise ConfigMismatch(f"state mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, tensor in params.items():
            if tuple(arrays[name].shape) != tensor.data.shape:
                raise ConfigMismatch(f"shape of {name}: {arrays[name].shape} != {tensor.data.shape}")
            tensor.data = np.ascontiguousarray(arrays[name], dtype=tensor.data.dtype)
        for name, buf in buffers.items():
            if tuple(arrays[name].shape) != buf.shape:
                raise ConfigMismatch(f"shape of {name}: {arrays[name].shape} != {buf.shape}")
            buf[...] = arrays[name]

    # -- checkpoints ---------------------------------------------------------

    def save(self, path, metadata: dict | None = None) -> None:
        config = {"model": self.cfg.to_dict(), "meta": metadata or {}}
        save_checkpoint(path, config, self.state_arrays())

    @classmethod
    def load(cls, path) -> tuple["CompletionNetwork", dict]:
        config, arrays = load_checkpoint(path)
        if "model" not in config:
            raise ConfigMismatch("checkpoint config blob lacks a 'model' section")
        net = cls(ModelConfig.from_dict(config["model"]), seed=0)
        net.load_state_arrays(arrays)
        return net, config.get("meta", {})
