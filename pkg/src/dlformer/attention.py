"""Scaled dot-product attention and its interpretable multi-head form.

The interpretable variant keeps one score matrix per layer instead of h:
every head projects queries and keys with its own maps, the h softmaxed
score matrices are averaged into a single row-stochastic matrix, and that
average is applied to a value projection shared across all heads.  Because
the value projection is shared, averaging the scores first and averaging
the per-head attention outputs are algebraically the same thing; the
averaged matrix is therefore a faithful record of what the layer did, and
it is what the explanation stage consumes.  The cross form uses the decoder
stream as queries and the encoder latent as keys and values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class AttentionParams:
    """Per-head query/key maps, shared value map, output map."""

    query_maps: list[Tensor]  # h maps, each (d_model, d_attn)
    key_maps: list[Tensor]    # h maps, each (d_model, d_attn)
    value_map: Tensor         # (d_model, d_attn), shared across heads
    out_map: Tensor           # (d_attn, d_model)

    @property
    def num_heads(self) -> int:
        return len(self.query_maps)

    @classmethod
    def create(
        cls, d_model: int, d_attn: int, num_heads: int, rng: np.random.Generator
    ) -> "AttentionParams":
        def mat(rows, cols):
            bound = math.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)

        return cls(
            query_maps=[mat(d_model, d_attn) for _ in range(num_heads)],
            key_maps=[mat(d_model, d_attn) for _ in range(num_heads)],
            value_map=mat(d_model, d_attn),
            out_map=mat(d_attn, d_model),
        )

    def named_tensors(self, prefix: str):
        for i, w in enumerate(self.query_maps):
            yield f"{prefix}.wq{i}", w
        for i, w in enumerate(self.key_maps):
            yield f"{prefix}.wk{i}", w
        yield f"{prefix}.wv", self.value_map
        yield f"{prefix}.wh", self.out_map


@dataclass
class AttentionRecord:
    """Head-averaged score matrix from one attention application.

    ``weights`` has shape (n_q, n_k), or (B, n_q, n_k) for a batched
    forward pass; every row is a probability vector.
    """

    weights: np.ndarray
    block: str = ""


def attention_scores(q: Tensor, k: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d_attn)) over rows; optional additive mask."""
    d_attn = q.shape[-1]
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d_attn))
    if mask is not None:
        logits = ad.add(logits, Tensor(mask))
    return ad.softmax_rows(logits)


def single_head_attention(
    q: Tensor, k: Tensor, v: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor
) -> Tensor:
    scores = attention_scores(ad.matmul(q, w_q), ad.matmul(k, w_k))
    return ad.matmul(scores, ad.matmul(v, w_v))


def averaged_scores(
    q: Tensor, k: Tensor, params: AttentionParams, mask: np.ndarray | None = None
) -> Tensor:
    """Mean of the h per-head score matrices; rows stay stochastic."""
    total = None
    for w_q, w_k in zip(params.query_maps, params.key_maps):
        head = attention_scores(ad.matmul(q, w_q), ad.matmul(k, w_k), mask)
        total = head if total is None else ad.add(total, head)
    return ad.scale(total, 1.0 / params.num_heads)


def interpretable_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: AttentionParams,
    mask: np.ndarray | None = None,
    block: str = "",
) -> tuple[Tensor, AttentionRecord]:
    """Head-averaged attention with shared value projection.

    Returns the layer output and a record of the averaged score matrix.
    """
    avg = averaged_scores(q, k, params, mask)
    out = ad.matmul(ad.matmul(avg, ad.matmul(v, params.value_map)), params.out_map)
    return out, AttentionRecord(weights=avg.data.copy(), block=block)


def cross_attention(
    decoder_stream: Tensor,
    encoder_latent: Tensor,
    params: AttentionParams,
    block: str = "",
) -> tuple[Tensor, AttentionRecord]:
    """Interpretable attention with decoder queries over the encoder latent."""
    return interpretable_attention(
        decoder_stream, encoder_latent, encoder_latent, params, block=block
    )


def causal_mask(n: int) -> np.ndarray:
    """Additive mask blocking attention to later positions."""
    mask = np.zeros((n, n), dtype=np.float64)
    mask[np.triu_indices(n, k=1)] = -1e30
    return mask
