"""Miniature transformer encoder with per-block adapter attachment slots.

Post-norm residual blocks: sublayer -> (slot adapters) -> add -> norm, so
an attached adapter transforms the sublayer output before the residual
add. One extra slot sits after the embedding sum for invertible adapters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ContractError
from .params import ParamStore
from .rng import Rng
from .tensor import (
    Tensor,
    concat,
    embedding,
    gelu,
    layer_norm,
    matmul,
    softmax,
    transpose,
)

INIT_STD = 0.02
MASK_BIAS = -1e30
SLOT_KINDS = ("post_attn", "post_ffn")


@dataclass
class EncoderConfig:
    """Backbone dimensions. Defaults are the desk-scale configuration."""

    vocab_size: int = 2000
    max_seq_len: int = 256
    hidden_dim: int = 64
    num_blocks: int = 4
    num_heads: int = 4
    ffn_dim: int = 128
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for field in ("vocab_size", "max_seq_len", "hidden_dim",
                      "num_heads", "ffn_dim"):
            if getattr(self, field) < 1:
                raise ContractError(f"EncoderConfig.{field} must be >= 1")
        if self.num_blocks < 0:
            raise ContractError("EncoderConfig.num_blocks must be >= 0")
        if self.hidden_dim % self.num_heads != 0:
            raise ContractError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


class EncoderModel:
    """Token/position embeddings + N transformer blocks + adapter slots.

    All weights live in a single named ParamStore; adapter units attached
    by the adapters module register their tensors into the same store.
    """

    def __init__(self, config: EncoderConfig, rng: Rng | None = None):
        self.config = config
        self.params = ParamStore()
        self.embed_slot: list = []
        self.block_slots: list[dict[str, list]] = [
            {kind: [] for kind in SLOT_KINDS} for _ in range(config.num_blocks)
        ]
        self.attached: dict[str, object | None] = {"language": None, "task": None}
        self._init_params(rng or Rng(config.seed).child("encoder-init"))

    def _init_params(self, rng: Rng) -> None:
        cfg = self.config
        p = self.params

        def weight(name, shape):
            p.add(name, Tensor(rng.normal(shape, INIT_STD), requires_grad=True))

        def zeros(name, shape):
            p.add(name, Tensor(np.zeros(shape), requires_grad=True))

        def ones(name, shape):
            p.add(name, Tensor(np.ones(shape), requires_grad=True))

        weight("embed.token", (cfg.vocab_size, cfg.hidden_dim))
        weight("embed.pos", (cfg.max_seq_len, cfg.hidden_dim))
        for i in range(cfg.num_blocks):
            for proj in ("wq", "wk", "wv", "wo"):
                weight(f"block.{i}.attn.{proj}", (cfg.hidden_dim, cfg.hidden_dim))
            for b in ("bq", "bk", "bv", "bo"):
                zeros(f"block.{i}.attn.{b}", (cfg.hidden_dim,))
            ones(f"block.{i}.attn_norm.gain", (cfg.hidden_dim,))
            zeros(f"block.{i}.attn_norm.bias", (cfg.hidden_dim,))
            weight(f"block.{i}.ffn.w1", (cfg.hidden_dim, cfg.ffn_dim))
            zeros(f"block.{i}.ffn.b1", (cfg.ffn_dim,))
            weight(f"block.{i}.ffn.w2", (cfg.ffn_dim, cfg.hidden_dim))
            zeros(f"block.{i}.ffn.b2", (cfg.hidden_dim,))
            ones(f"block.{i}.ffn_norm.gain", (cfg.hidden_dim,))
            zeros(f"block.{i}.ffn_norm.bias", (cfg.hidden_dim,))
        p.set_trainable(p.names())

    def backbone_names(self) -> list[str]:
        return [n for n in self.params.names()
                if n.startswith(("embed.", "block."))]

    def embed(self, token_ids, training: bool = False, rng: Rng | None = None,
              trace: list | None = None) -> Tensor:
        """Token + learned position embedding, then any embed-slot adapter."""
        ids = np.asarray(token_ids, dtype=np.intp)
        if ids.ndim != 1 or ids.size == 0:
            raise ContractError("embed expects a non-empty 1-D id sequence")
        if ids.size > self.config.max_seq_len:
            raise ContractError(
                f"sequence length {ids.size} exceeds max_seq_len {self.config.max_seq_len}"
            )
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ContractError(
                f"token id out of range [0, {self.config.vocab_size}); "
                "map unknowns in the tokenizer first"
            )
        x = embedding(self.params["embed.token"], ids) + self.params["embed.pos"][0:ids.size]
        for unit in self.embed_slot:
            x = unit.forward(x)
            if trace is not None:
                trace.append(("embed", unit.kind, unit.name))
        return self._dropout(x, training, rng)

    def self_attention(self, x: Tensor, pad_mask=None, block: int = 0) -> Tensor:
        """Multi-head attention sublayer output (post output-projection).

        The enclosing block adds the residual and layer norm; padded
        positions marked True in pad_mask receive zero attention weight.
        """
        return self._attention(x, pad_mask, block)

    def attention_weights(self, x: Tensor, pad_mask=None, block: int = 0) -> np.ndarray:
        """Per-head attention weight matrices [num_heads, seq, seq]."""
        collect: list[np.ndarray] = []
        self._attention(x, pad_mask, block, collect=collect)
        return np.stack(collect)

    def _attention(self, x: Tensor, pad_mask, i: int,
                   collect: list | None = None) -> Tensor:
        cfg = self.config
        p = self.params
        head_dim = cfg.hidden_dim // cfg.num_heads
        scale = 1.0 / math.sqrt(head_dim)
        q = matmul(x, p[f"block.{i}.attn.wq"]) + p[f"block.{i}.attn.bq"]
        k = matmul(x, p[f"block.{i}.attn.wk"]) + p[f"block.{i}.attn.bk"]
        v = matmul(x, p[f"block.{i}.attn.wv"]) + p[f"block.{i}.attn.bv"]
        bias = None
        if pad_mask is not None:
            pad_mask = np.asarray(pad_mask, dtype=bool)
            if pad_mask.shape != (x.data.shape[0],):
                raise ContractError(
                    f"pad_mask shape {pad_mask.shape} does not match seq {x.data.shape[0]}"
                )
            if pad_mask.any():
                bias = Tensor(np.where(pad_mask, MASK_BIAS, 0.0))
        heads = []
        for a in range(cfg.num_heads):
            cols = slice(a * head_dim, (a + 1) * head_dim)
            qa, ka, va = q[:, cols], k[:, cols], v[:, cols]
            scores = matmul(qa, transpose(ka)) * scale
            if bias is not None:
                scores = scores + bias
            weights = softmax(scores, axis=-1)
            if collect is not None:
                collect.append(weights.data.copy())
            heads.append(matmul(weights, va))
        merged = concat(heads, axis=1)
        return matmul(merged, p[f"block.{i}.attn.wo"]) + p[f"block.{i}.attn.bo"]

    def _ffn(self, x: Tensor, i: int) -> Tensor:
        p = self.params
        h = gelu(matmul(x, p[f"block.{i}.ffn.w1"]) + p[f"block.{i}.ffn.b1"])
        return matmul(h, p[f"block.{i}.ffn.w2"]) + p[f"block.{i}.ffn.b2"]

    def _apply_slot(self, h: Tensor, i: int, slot: str,
                    trace: list | None) -> Tensor:
        for unit in self.block_slots[i][slot]:
            h = unit.forward(h)
            if trace is not None:
                trace.append((f"block.{i}.{slot}", unit.kind, unit.name))
        return h

    def _dropout(self, x: Tensor, training: bool, rng: Rng | None) -> Tensor:
        rate = self.config.dropout_rate
        if not training or rate == 0.0:
            return x
        if rng is None:
            raise ContractError("training-mode dropout requires an Rng")
        keep = (rng.uniform(shape=x.data.shape) >= rate) / (1.0 - rate)
        return x * Tensor(keep)

    def encode(self, feature_or_ids, pad_mask=None, training: bool = False,
               rng: Rng | None = None, trace: list | None = None) -> Tensor:
        """Full forward pass including any occupied adapter slots.

        Deterministic in eval mode (dropout off). Output shape is always
        [len(input) x hidden_dim].
        """
        ids = getattr(feature_or_ids, "token_ids", feature_or_ids)
        x = self.embed(ids, training=training, rng=rng, trace=trace)
        for i in range(self.config.num_blocks):
            a = self._attention(x, pad_mask, i)
            a = self._dropout(a, training, rng)
            a = self._apply_slot(a, i, "post_attn", trace)
            x = layer_norm(x + a, self.params[f"block.{i}.attn_norm.gain"],
                           self.params[f"block.{i}.attn_norm.bias"])
            f = self._ffn(x, i)
            f = self._dropout(f, training, rng)
            f = self._apply_slot(f, i, "post_ffn", trace)
            x = layer_norm(x + f, self.params[f"block.{i}.ffn_norm.gain"],
                           self.params[f"block.{i}.ffn_norm.bias"])
        return x

    def occupied_slot_count(self) -> int:
        return sum(
            1
            for block in self.block_slots
            for kind in SLOT_KINDS
            if block[kind]
        ) + (1 if self.embed_slot else 0)
