"""Distributed-lag embedding: value projection plus position encodings.

Each (feature, lag) pair of the input window becomes its own sequence
position.  The flattened sequence is feature-major: positions
(j-1)*L+1 ... j*L hold feature j's lags oldest to newest.  Every position's
scalar is projected to the embedding width by one shared affine map, then
two sinusoidal encodings are added: a global one indexed over the whole
flattened sequence and a local one that restarts at each feature block.
The decoder side embeds its reference-plus-masked-future vector the same
way, with positions indexed 1..T+r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericError


def sinusoidal_encoding(p_max: int, dim: int, period: float = 10000.0) -> np.ndarray:
    """Sin/cos position table, positions 1-based, shape (p_max, dim).

    Even column 2d holds sin(p / period^(2d/dim)), odd column 2d+1 the
    matching cosine.
    """
    if dim % 2 != 0:
        raise ConfigError(f"embedding dimension must be even, got {dim}")
    if p_max < 1:
        raise ConfigError(f"need at least one position, got p_max={p_max}")
    positions = np.arange(1, p_max + 1, dtype=np.float64)[:, None]
    pair_index = np.arange(0, dim, 2, dtype=np.float64)[None, :]  # the 2d in the exponent
    angles = positions / np.power(period, pair_index / dim)
    table = np.empty((p_max, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def global_encoding(seq_len: int, dim: int, period: float = 10000.0) -> np.ndarray:
    """One continuous position index over the whole flattened sequence."""
    return sinusoidal_encoding(seq_len, dim, period)


def local_encoding(num_features: int, lag: int, dim: int, period: float = 10000.0) -> np.ndarray:
    """The lag-length table repeated per feature; local positions restart."""
    return np.tile(sinusoidal_encoding(lag, dim, period), (num_features, 1))


def flatten_lags(x: np.ndarray) -> np.ndarray:
    """(k, L) window -> length k*L vector, feature-major."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"expected a (features, lags) matrix, got shape {x.shape}")
    return x.reshape(-1)


def unflatten_lags(v: np.ndarray, num_features: int, lag: int) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(num_features, lag)


@dataclass
class ValueEmbedding:
    """Shared scalar -> dim affine map (one weight row, one bias vector)."""

    weight: Tensor  # (1, dim)
    bias: Tensor    # (dim,)

    @classmethod
    def create(cls, dim: int, rng: np.random.Generator) -> "ValueEmbedding":
        bound = np.sqrt(6.0 / (1 + dim))
        w = Tensor(rng.uniform(-bound, bound, size=(1, dim)), requires_grad=True)
        b = Tensor(np.zeros(dim), requires_grad=True)
        return cls(weight=w, bias=b)

    def __call__(self, values: Tensor, activation: bool) -> Tensor:
        """Project (..., n) scalars to (..., n, dim); optional ReLU."""
        column = ad.reshape(values, values.shape + (1,))
        projected = ad.add(ad.matmul(column, self.weight), self.bias)
        return ad.relu(projected) if activation else projected


def embed_window(
    inputs: np.ndarray,
    embedding: ValueEmbedding,
    positional: Tensor,
    activation: bool = True,
) -> Tensor:
    """Distributed-lag embedding of a (k, L) window or a (B, k, L) batch.

    Output is (k*L, dim) per sample: projected values plus the precomputed
    sum of global and local position encodings.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if not np.isfinite(inputs).all():
        raise NumericError("window inputs contain non-finite values")
    flat_shape = inputs.shape[:-2] + (inputs.shape[-2] * inputs.shape[-1],)
    flat = Tensor(inputs.reshape(flat_shape))
    return ad.add(embedding(flat, activation), positional)


def embed_decoder_input(
    decoder_values: np.ndarray,
    embedding: ValueEmbedding,
    positional: Tensor,
    activation: bool = True,
) -> Tensor:
    """Embed the length-(T+r) decoder vector (or a batch of them)."""
    values = Tensor(np.asarray(decoder_values, dtype=np.float64))
    return ad.add(embedding(values, activation), positional)
