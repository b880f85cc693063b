"""Object transformer: object queries and pixel readout attend to each other.

Each block runs, in order:

1. queries cross-attend to the readout, residual, layer norm;
2. readout cross-attends to the updated queries, residual, layer norm;
3. a feed-forward net on each stream, residual, layer norm.

There is no positional encoding.  Reductions over the attended set use
sorted summation, so permuting readout positions permutes the output and
changes nothing else, bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import DTYPE, ContractError, gelu, layer_norm, linear, sorted_sum


def _dense(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return (rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)).astype(DTYPE)


@dataclass
class AttentionWeights:
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray

    @classmethod
    def seeded(cls, rng, dim: int) -> "AttentionWeights":
        z = lambda: np.zeros(dim, DTYPE)  # noqa: E731
        return cls(_dense(rng, dim, dim), z(), _dense(rng, dim, dim), z(),
                   _dense(rng, dim, dim), z(), _dense(rng, dim, dim), z())


@dataclass
class FeedForward:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def seeded(cls, rng, dim: int, mult: int) -> "FeedForward":
        hidden = dim * mult
        return cls(_dense(rng, dim, hidden), np.zeros(hidden, DTYPE),
                   _dense(rng, hidden, dim), np.zeros(dim, DTYPE))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return linear(gelu(linear(x, self.w1, self.b1)), self.w2, self.b2)


@dataclass
class Norm:
    gain: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "Norm":
        return cls(np.ones(dim, DTYPE), np.zeros(dim, DTYPE))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return layer_norm(x, self.gain, self.bias)


@dataclass
class BlockWeights:
    query_attn: AttentionWeights
    readout_attn: AttentionWeights
    query_ffn: FeedForward
    readout_ffn: FeedForward
    query_norm1: Norm
    readout_norm1: Norm
    query_norm2: Norm
    readout_norm2: Norm

    @classmethod
    def seeded(cls, rng, dim: int, ffn_mult: int = 2) -> "BlockWeights":
        return cls(
            AttentionWeights.seeded(rng, dim),
            AttentionWeights.seeded(rng, dim),
            FeedForward.seeded(rng, dim, ffn_mult),
            FeedForward.seeded(rng, dim, ffn_mult),
            Norm.identity(dim), Norm.identity(dim), Norm.identity(dim), Norm.identity(dim),
        )


@dataclass
class TransformerParams:
    """Seeded block weights plus the static object queries ``X``."""

    blocks: list[BlockWeights]
    heads: int
    queries: np.ndarray

    @classmethod
    def generate(cls, seed: int, dim: int, num_blocks: int = 3, heads: int = 2,
                 num_queries: int = 8, ffn_mult: int = 2) -> "TransformerParams":
        if dim % heads:
            raise ContractError(f"width {dim} not divisible by {heads} heads")
        rng = np.random.default_rng([seed, 0x7F0])
        blocks = [BlockWeights.seeded(rng, dim, ffn_mult) for _ in range(num_blocks)]
        queries = (rng.standard_normal((num_queries, dim)) * 0.5).astype(DTYPE)
        return cls(blocks, heads, queries)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)


def cross_attention(x, context, w: AttentionWeights, heads: int, trace=None, tag: str = "") -> np.ndarray:
    """Multi-head scaled dot-product attention of ``x`` rows over ``context`` rows."""
    n, dim = x.shape
    p = context.shape[0]
    d = dim // heads
    q = linear(x, w.wq, w.bq).reshape(n, heads, d).transpose(1, 0, 2)
    k = linear(context, w.wk, w.bk).reshape(p, heads, d).transpose(1, 0, 2)
    v = linear(context, w.wv, w.bv).reshape(p, heads, d).transpose(1, 0, 2)

    # (heads, n, p); each score reduces one contiguous d-vector
    scores = (q[:, :, None, :] * k[:, None, :, :]).sum(axis=-1) * DTYPE(1.0 / math.sqrt(d))
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    attn = e / sorted_sum(e, axis=-1)[..., None]
    if trace is not None:
        trace.append((tag, attn))
    out = sorted_sum(attn[..., None] * v[:, None, :, :], axis=2)  # (heads, n, d)
    out = out.transpose(1, 0, 2).reshape(n, dim).astype(DTYPE)
    return linear(out, w.wo, w.bo)


def init_queries(queries, memory) -> np.ndarray:
    """Initial query state ``X + S``."""
    queries = np.asarray(queries, dtype=DTYPE)
    memory = np.asarray(memory, dtype=DTYPE)
    if queries.shape != memory.shape:
        raise ContractError(f"queries {queries.shape} and object memory {memory.shape} differ")
    return queries + memory


def block(x, r, w: BlockWeights, heads: int, trace=None) -> tuple[np.ndarray, np.ndarray]:
    """One bidirectional block; returns the updated ``(queries, readout)``."""
    x = w.query_norm1(x + cross_attention(x, r, w.query_attn, heads, trace, "queries"))
    r = w.readout_norm1(r + cross_attention(r, x, w.readout_attn, heads, trace, "readout"))
    x = w.query_norm2(x + w.query_ffn(x))
    r = w.readout_norm2(r + w.readout_ffn(r))
    return x, r


def forward(readout, queries, memory, params: TransformerParams, trace=None) -> np.ndarray:
    """Run all blocks and return the final readout ``(P, C)``.

    With zero blocks the readout is returned unchanged.
    """
    readout = np.asarray(readout, dtype=DTYPE)
    if not params.blocks:
        return readout
    if readout.shape[1] != np.asarray(queries).shape[1]:
        raise ContractError(f"readout width {readout.shape[1]} != query width {np.asarray(queries).shape[1]}")
    x = init_queries(queries, memory)
    r = readout
    for w in params.blocks:
        x, r = block(x, r, w, params.heads, trace)
    return r
