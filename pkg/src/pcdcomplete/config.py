"""Architecture configuration.

The default configuration carries the full-scale model constants
(2048-point partials, 128 tokens, 192 sparse points, 6144 generated
points, 8192-point completions, 1024-wide global feature, 512-wide
decoder features). desk() is a reduced preset with the same structural
invariants, sized so CPU training finishes in minutes.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from .errors import LayerCountMismatch, ShapeMismatch


@dataclass(frozen=True)
class ModelConfig:
    # point counts
    n_partial: int = 2048
    n_regions: int = 128
    k_group: int = 32
    k_edge: int = 8
    # embedding
    edge_widths: tuple = (64, 128)
    pe_hidden: int = 64
    pe_width: int = 128
    # transformer
    d_model: int = 256
    n_heads: int = 4
    n_enc_layers: int = 4
    n_dec_layers: int = 4
    global_width: int = 1024
    n_queries: int = 192
    sparse_count: int = 192
    decoder_width: int = 512
    # folding generator
    points_per_center: int = 31
    fold_mixed_width: int = 512
    fold_hidden: int = 256
    # ablation switches
    offset_attention: bool = True
    skip_connections: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeMismatch(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if self.sparse_count != self.n_queries:
            raise ShapeMismatch("one sparse point per query: sparse_count must equal n_queries")
        if self.n_dec_layers > self.n_enc_layers:
            raise LayerCountMismatch(
                f"decoder layers ({self.n_dec_layers}) exceed encoder layers ({self.n_enc_layers})"
            )
        if self.k_edge >= self.k_group:
            raise ShapeMismatch("k_edge must be smaller than k_group (self excluded)")

    @property
    def fe_width(self) -> int:
        return self.edge_widths[-1]

    @property
    def token_width(self) -> int:
        return self.fe_width + self.pe_width

    @property
    def missing_count(self) -> int:
        return self.n_queries * self.points_per_center + self.sparse_count

    @property
    def completed_count(self) -> int:
        return self.n_partial + self.missing_count

    @classmethod
    def desk(cls) -> "ModelConfig":
        return cls(
            n_regions=64,
            k_group=16,
            k_edge=8,
            edge_widths=(24, 48),
            pe_hidden=32,
            pe_width=48,
            d_model=96,
            n_heads=4,
            n_enc_layers=2,
            n_dec_layers=2,
            global_width=192,
            n_queries=64,
            sparse_count=64,
            decoder_width=96,
            points_per_center=8,
            fold_mixed_width=96,
            fold_hidden=48,
        )

    def with_variant(self, variant: str) -> "ModelConfig":
        """Map an ablation variant letter onto the two architecture switches.

        A: plain self-attention, no skips; B: adds skips; C: offset
        attention only; D: offset attention plus skips.
        """
        table = {
            "A": (False, False),
            "B": (False, True),
            "C": (True, False),
            "D": (True, True),
        }
        if variant not in table:
            raise ShapeMismatch(f"unknown model variant {variant!r}")
        offset, skips = table[variant]
        return replace(self, offset_attention=offset, skip_connections=skips)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edge_widths"] = list(self.edge_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["edge_widths"] = tuple(d["edge_widths"])
        return cls(**d)
