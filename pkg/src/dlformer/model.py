"""Encoder/decoder stacks and the full forecaster forward pass.

Block wiring is residual-only: attention plus residual, then the
position-wise feed-forward plus residual, with no normalization by default
(a config switch can add post-residual layer norm for stability
experiments).  The decoder input concatenates the r known reference values
of the target with T zeros for the masked future, and the output head maps
each decoder position to a scalar through two affine layers with a ReLU
between; the forecast is the last T of those scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .attention import AttentionParams, AttentionRecord, causal_mask, interpretable_attention
from .embedding import (
    ValueEmbedding,
    embed_decoder_input,
    embed_window,
    global_encoding,
    local_encoding,
    sinusoidal_encoding,
)
from .errors import ConfigError, DimensionError


@dataclass
class ModelConfig:
    """Architecture hyperparameters; defaults follow the reference setup."""

    num_features: int                 # k
    lag: int                          # L, distributed lag size
    horizon: int                      # T, forecast steps
    reference: int | None = None      # r, defaults to min(horizon, lag)
    embed_dim: int = 128              # width of every stream
    attn_dim: int = 16                # per-head attention width
    num_heads: int = 8
    num_encoder_blocks: int = 6
    num_decoder_blocks: int = 6
    ff_dim: int | None = None         # feed-forward inner width, default 4x embed
    head_dim: int | None = None       # output-head inner width, default embed/2
    period: float = 10000.0           # positional-encoding period constant
    embed_activation: str = "both"    # relu on value embeddings: both|encoder|decoder|none
    causal_mask: bool = False         # optional mask in decoder self-attention
    layer_norm: bool = False          # optional post-residual layer norm

    def __post_init__(self):
        if self.reference is None:
            self.reference = min(self.horizon, self.lag)
        if self.ff_dim is None:
            self.ff_dim = 4 * self.embed_dim
        if self.head_dim is None:
            self.head_dim = max(1, self.embed_dim // 2)
        for name in ("num_features", "lag", "horizon", "reference", "embed_dim",
                     "attn_dim", "num_heads", "ff_dim", "head_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.num_encoder_blocks < 0 or self.num_decoder_blocks < 0:
            raise ConfigError("block counts cannot be negative")
        if self.embed_dim % 2 != 0:
            raise ConfigError(f"embed_dim must be even, got {self.embed_dim}")
        if self.reference > self.lag:
            raise ConfigError(
                f"reference length {self.reference} exceeds lag {self.lag}"
            )
        if self.period <= 1:
            raise ConfigError(f"period constant must exceed 1, got {self.period}")
        if self.embed_activation not in ("both", "encoder", "decoder", "none"):
            raise ConfigError(
                f"embed_activation must be both|encoder|decoder|none, got {self.embed_activation!r}"
            )

    @property
    def seq_len(self) -> int:
        """Flattened input length: one position per (feature, lag) pair."""
        return self.num_features * self.lag

    @property
    def decoder_len(self) -> int:
        return self.horizon + self.reference

    def to_dict(self) -> dict:
        return {
            "num_features": self.num_features, "lag": self.lag,
            "horizon": self.horizon, "reference": self.reference,
            "embed_dim": self.embed_dim, "attn_dim": self.attn_dim,
            "num_heads": self.num_heads,
            "num_encoder_blocks": self.num_encoder_blocks,
            "num_decoder_blocks": self.num_decoder_blocks,
            "ff_dim": self.ff_dim, "head_dim": self.head_dim,
            "period": self.period, "embed_activation": self.embed_activation,
            "causal_mask": self.causal_mask, "layer_norm": self.layer_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    bound = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


@dataclass
class FeedForward:
    """Position-wise two-layer map; identical at every sequence position."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, dim: int, inner: int, rng: np.random.Generator) -> "FeedForward":
        return cls(
            w1=_xavier(rng, dim, inner),
            b1=Tensor(np.zeros(inner), requires_grad=True),
            w2=_xavier(rng, inner, dim),
            b2=Tensor(np.zeros(dim), requires_grad=True),
        )

    def __call__(self, x: Tensor) -> Tensor:
        hidden = ad.relu(ad.add(ad.matmul(x, self.w1), self.b1))
        return ad.add(ad.matmul(hidden, self.w2), self.b2)

    def named_tensors(self, prefix: str):
        yield f"{prefix}.w1", self.w1
        yield f"{prefix}.b1", self.b1
        yield f"{prefix}.w2", self.w2
        yield f"{prefix}.b2", self.b2


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    @classmethod
    def create(cls, dim: int) -> "LayerNormParams":
        return cls(Tensor(np.ones(dim), requires_grad=True),
                   Tensor(np.zeros(dim), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)

    def named_tensors(self, prefix: str):
        yield f"{prefix}.gain", self.gain
        yield f"{prefix}.bias", self.bias


@dataclass
class EncoderBlock:
    attn: AttentionParams
    ff: FeedForward
    norms: list[LayerNormParams] = field(default_factory=list)


@dataclass
class DecoderBlock:
    self_attn: AttentionParams
    cross_attn: AttentionParams
    ff: FeedForward
    norms: list[LayerNormParams] = field(default_factory=list)


@dataclass
class OutputHead:
    """Two affine layers with a ReLU between, mapping width -> 1 per position."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, dim: int, inner: int, rng: np.random.Generator) -> "OutputHead":
        return cls(
            w1=_xavier(rng, dim, inner),
            b1=Tensor(np.zeros(inner), requires_grad=True),
            w2=_xavier(rng, inner, 1),
            b2=Tensor(np.zeros(1), requires_grad=True),
        )

    def __call__(self, x: Tensor) -> Tensor:
        hidden = ad.relu(ad.add(ad.matmul(x, self.w1), self.b1))
        scalars = ad.add(ad.matmul(hidden, self.w2), self.b2)
        return ad.reshape(scalars, scalars.shape[:-1])

    def named_tensors(self, prefix: str):
        yield f"{prefix}.w1", self.w1
        yield f"{prefix}.b1", self.b1
        yield f"{prefix}.w2", self.w2
        yield f"{prefix}.b2", self.b2


def build_decoder_input(reference: np.ndarray, horizon: int) -> np.ndarray:
    """Known reference values followed by zeros for the masked future."""
    reference = np.asarray(reference, dtype=np.float64)
    zeros_shape = reference.shape[:-1] + (horizon,)
    return np.concatenate([reference, np.zeros(zeros_shape)], axis=-1)


@dataclass
class BatchRecords:
    """Attention records from one forward pass."""

    last_cross: AttentionRecord | None
    all_records: list[AttentionRecord] | None = None


class DLFormer:
    """The full forecaster: embeddings, block stacks and output head."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.input_embedding = ValueEmbedding.create(c.embed_dim, rng)
        self.decoder_embedding = ValueEmbedding.create(c.embed_dim, rng)
        self.encoder_blocks = [
            self._make_encoder_block(rng) for _ in range(c.num_encoder_blocks)
        ]
        self.decoder_blocks = [
            self._make_decoder_block(rng) for _ in range(c.num_decoder_blocks)
        ]
        self.head = OutputHead.create(c.embed_dim, c.head_dim, rng)
        # immutable positional tables, shared across samples
        self.encoder_positional = Tensor(
            global_encoding(c.seq_len, c.embed_dim, c.period)
            + local_encoding(c.num_features, c.lag, c.embed_dim, c.period)
        )
        self.decoder_positional = Tensor(
            sinusoidal_encoding(c.decoder_len, c.embed_dim, c.period)
        )
        self._self_mask = causal_mask(c.decoder_len) if c.causal_mask else None

    def _make_encoder_block(self, rng) -> EncoderBlock:
        c = self.config
        norms = [LayerNormParams.create(c.embed_dim) for _ in range(2)] if c.layer_norm else []
        return EncoderBlock(
            attn=AttentionParams.create(c.embed_dim, c.attn_dim, c.num_heads, rng),
            ff=FeedForward.create(c.embed_dim, c.ff_dim, rng),
            norms=norms,
        )

    def _make_decoder_block(self, rng) -> DecoderBlock:
        c = self.config
        norms = [LayerNormParams.create(c.embed_dim) for _ in range(3)] if c.layer_norm else []
        return DecoderBlock(
            self_attn=AttentionParams.create(c.embed_dim, c.attn_dim, c.num_heads, rng),
            cross_attn=AttentionParams.create(c.embed_dim, c.attn_dim, c.num_heads, rng),
            ff=FeedForward.create(c.embed_dim, c.ff_dim, rng),
            norms=norms,
        )

    # -- parameter registry -------------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}

        def put(pairs):
            for name, tensor in pairs:
                params[name] = tensor

        put([("embed.w", self.input_embedding.weight), ("embed.b", self.input_embedding.bias),
             ("dec_embed.w", self.decoder_embedding.weight), ("dec_embed.b", self.decoder_embedding.bias)])
        for i, block in enumerate(self.encoder_blocks):
            put(block.attn.named_tensors(f"enc{i}.attn"))
            put(block.ff.named_tensors(f"enc{i}.ff"))
            for j, norm in enumerate(block.norms):
                put(norm.named_tensors(f"enc{i}.ln{j}"))
        for i, block in enumerate(self.decoder_blocks):
            put(block.self_attn.named_tensors(f"dec{i}.self"))
            put(block.cross_attn.named_tensors(f"dec{i}.cross"))
            put(block.ff.named_tensors(f"dec{i}.ff"))
            for j, norm in enumerate(block.norms):
                put(norm.named_tensors(f"dec{i}.ln{j}"))
        put(self.head.named_tensors("head"))
        return params

    def parameter_count(self) -> int:
        return sum(t.size for t in self.named_parameters().values())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ConfigError(
                f"parameter names do not match model (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)})"
            )
        for name, tensor in params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise ConfigError(
                    f"parameter {name!r} has shape {values.shape}, expected {tensor.shape}"
                )
            tensor.data = values.copy()

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters().items()}

    # -- forward pass --------------------------------------------------------

    def encode(self, z: Tensor) -> Tensor:
        for block in self.encoder_blocks:
            attended, _ = interpretable_attention(z, z, z, block.attn)
            z = ad.add(attended, z)
            if block.norms:
                z = block.norms[0](z)
            z = ad.add(block.ff(z), z)
            if block.norms:
                z = block.norms[1](z)
        return z

    def decode(
        self, s: Tensor, memory: Tensor, collect: bool = False
    ) -> tuple[Tensor, BatchRecords]:
        last_cross = None
        collected: list[AttentionRecord] = []
        total = len(self.decoder_blocks)
        for i, block in enumerate(self.decoder_blocks):
            attended, self_rec = interpretable_attention(
                s, s, s, block.self_attn, mask=self._self_mask, block=f"decoder.{i}.self"
            )
            s = ad.add(attended, s)
            if block.norms:
                s = block.norms[0](s)
            crossed, cross_rec = interpretable_attention(
                s, memory, memory, block.cross_attn, block=f"decoder.{i}.cross"
            )
            s = ad.add(crossed, s)
            if block.norms:
                s = block.norms[1](s)
            s = ad.add(block.ff(s), s)
            if block.norms:
                s = block.norms[2](s)
            if i == total - 1:
                last_cross = cross_rec
            if collect:
                collected.extend([self_rec, cross_rec])
        return s, BatchRecords(last_cross=last_cross, all_records=collected if collect else None)

    def forward_batch(
        self, inputs: np.ndarray, reference: np.ndarray, collect: bool = False
    ) -> tuple[Tensor, BatchRecords]:
        """Run a (B, k, L) input batch with (B, r) references to (B, T) forecasts."""
        c = self.config
        inputs = np.asarray(inputs, dtype=np.float64)
        reference = np.asarray(reference, dtype=np.float64)
        if inputs.shape[-2:] != (c.num_features, c.lag):
            raise DimensionError(
                f"inputs have shape {inputs.shape}, expected (..., {c.num_features}, {c.lag})"
            )
        if reference.shape[-1] != c.reference:
            raise DimensionError(
                f"reference has shape {reference.shape}, expected (..., {c.reference})"
            )
        relu_enc = c.embed_activation in ("both", "encoder")
        relu_dec = c.embed_activation in ("both", "decoder")
        z = embed_window(inputs, self.input_embedding, self.encoder_positional, relu_enc)
        memory = self.encode(z)
        decoder_values = build_decoder_input(reference, c.horizon)
        s = embed_decoder_input(
            decoder_values, self.decoder_embedding, self.decoder_positional, relu_dec
        )
        s, records = self.decode(s, memory, collect=collect)
        scalars = self.head(s)                       # (..., T+r)
        forecast = ad.take(scalars, (Ellipsis, slice(c.reference, None)))
        return forecast, records

    def forward(self, sample) -> tuple[np.ndarray, AttentionRecord | None]:
        """Per-sample forward: returns the length-T forecast and the record
        of the last decoder block's cross-attention."""
        pred, records = self.forward_batch(sample.inputs, sample.reference)
        record = records.last_cross
        return pred.data.copy(), record

    def predict(self, samples, chunk_size: int = 256) -> np.ndarray:
        """Forecasts for a list of samples, batched, gradient-free."""
        from .data import stack_windows

        outputs = []
        for start in range(0, len(samples), chunk_size):
            part = samples[start : start + chunk_size]
            x, y_ref, _ = stack_windows(part)
            pred, _ = self.forward_batch(x, y_ref)
            outputs.append(pred.data)
        return np.concatenate(outputs, axis=0)
