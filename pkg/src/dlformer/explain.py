"""Attention-based explanation: per-(feature, lag) importance of forecasts.

For every sample the forward pass caches the head-averaged cross-attention
of the last decoder block.  The explanation takes one row of that matrix --
by default the final forecast position -- and averages it over all samples
in a fixed order.  The result is a probability distribution over the k*L
flattened input positions, which marginalizes exactly into per-feature
importance (sum of each feature's L weights) and per-feature lag profiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import WindowSample, stack_windows
from .errors import ConfigError, DataError
from .model import DLFormer

VERSION = "0.1.0"


@dataclass
class ExplanationMap:
    """Sample-averaged attention over flattened (feature, lag) positions."""

    weights: np.ndarray          # (k*L,), nonnegative, sums to 1
    feature_names: list[str]
    lag: int
    sample_count: int
    row_index: int               # which decoder output row was read

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.feature_names) * self.lag,):
            raise DataError(
                f"weights shape {self.weights.shape} does not match "
                f"{len(self.feature_names)} features x lag {self.lag}"
            )

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    def labels(self) -> list[tuple[str, int]]:
        """(feature, lag) per position; lag 1 is oldest, L is most recent."""
        return [
            (name, lag + 1)
            for name in self.feature_names
            for lag in range(self.lag)
        ]

    def top_pairs(self, count: int) -> list[tuple[str, int, float]]:
        order = np.argsort(self.weights)[::-1][:count]
        labels = self.labels()
        return [(labels[i][0], labels[i][1], float(self.weights[i])) for i in order]


@dataclass
class FeatureImportance:
    """Per-feature share of attention: the sum over that feature's lags."""

    feature_names: list[str]
    values: np.ndarray  # (k,)

    def argmax_feature(self) -> str:
        return self.feature_names[int(np.argmax(self.values))]

    def items(self):
        return list(zip(self.feature_names, self.values.tolist()))


@dataclass
class LagProfile:
    """One feature's length-L slice of the explanation map."""

    feature_name: str
    weights: np.ndarray  # (L,), lag 1 (oldest) .. L (most recent)

    def argmax_lag(self) -> int:
        return int(np.argmax(self.weights)) + 1


def attention_rows(
    model: DLFormer, samples: list[WindowSample], row_index: int, chunk_size: int = 256
) -> np.ndarray:
    """The chosen cross-attention row for every sample, shape (N, k*L)."""
    rows = []
    for start in range(0, len(samples), chunk_size):
        part = samples[start : start + chunk_size]
        x, y_ref, _ = stack_windows(part)
        _, records = model.forward_batch(x, y_ref)
        weights = records.last_cross.weights
        if weights.ndim == 2:  # single-sample batch
            weights = weights[None]
        rows.append(weights[:, row_index, :])
    return np.concatenate(rows, axis=0)


def extract_explanation(
    model: DLFormer,
    samples: list[WindowSample],
    feature_names: list[str] | None = None,
    row_index: int | None = None,
    chunk_size: int = 256,
) -> ExplanationMap:
    """Average the last decoder cross-attention row over all samples.

    ``row_index`` defaults to the final forecast position (the last row).
    The summation order over samples is fixed, so results are reproducible.
    """
    if not samples:
        raise DataError("explanation needs a non-empty sample list")
    if model.config.num_decoder_blocks < 1:
        raise ConfigError("explanation unavailable: model has no decoder blocks")
    c = model.config
    if row_index is None:
        row_index = c.decoder_len - 1
    if not 0 <= row_index < c.decoder_len:
        raise ConfigError(f"row_index {row_index} outside decoder rows 0..{c.decoder_len - 1}")
    if feature_names is None:
        feature_names = [f"x{j + 1}" for j in range(c.num_features)]
    rows = attention_rows(model, samples, row_index, chunk_size)
    weights = rows.sum(axis=0) / len(samples)
    return ExplanationMap(
        weights=weights,
        feature_names=list(feature_names),
        lag=c.lag,
        sample_count=len(samples),
        row_index=row_index,
    )


def per_horizon_explanations(
    model: DLFormer,
    samples: list[WindowSample],
    feature_names: list[str] | None = None,
) -> list[ExplanationMap]:
    """One map per forecast step, rows r .. r+T-1 of the attention matrix."""
    c = model.config
    return [
        extract_explanation(model, samples, feature_names, row_index=c.reference + step)
        for step in range(c.horizon)
    ]


def aggregate_by_feature(explanation: ExplanationMap) -> FeatureImportance:
    blocks = explanation.weights.reshape(explanation.num_features, explanation.lag)
    return FeatureImportance(
        feature_names=list(explanation.feature_names),
        values=blocks.sum(axis=1),
    )


def lag_profiles(explanation: ExplanationMap) -> list[LagProfile]:
    blocks = explanation.weights.reshape(explanation.num_features, explanation.lag)
    return [
        LagProfile(feature_name=name, weights=blocks[j].copy())
        for j, name in enumerate(explanation.feature_names)
    ]


def export_explanation(
    explanation: ExplanationMap,
    path,
    fmt: str = "csv",
    top: int | None = None,
    provenance: dict | None = None,
) -> None:
    """Write the map as long-format CSV (feature,lag,weight) or JSON."""
    if fmt == "csv":
        lines = []
        for key, value in (provenance or {}).items():
            lines.append(f"# {key}: {value}")
        lines.append("feature,lag,weight")
        if top is None:
            for (name, lag), w in zip(explanation.labels(), explanation.weights):
                lines.append(f"{name},{lag},{w!r}")
        else:
            for name, lag, w in explanation.top_pairs(top):
                lines.append(f"{name},{lag},{w!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "json":
        importance = aggregate_by_feature(explanation)
        profiles = lag_profiles(explanation)
        document = {
            "artifact_version": VERSION,
            "sample_count": explanation.sample_count,
            "row_index": explanation.row_index,
            "lag": explanation.lag,
            "feature_names": explanation.feature_names,
            "weights": explanation.weights.tolist(),
            "feature_importance": {n: v for n, v in importance.items()},
            "lag_profiles": {p.feature_name: p.weights.tolist() for p in profiles},
        }
        if provenance:
            document["provenance"] = dict(provenance)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(document, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ConfigError(f"unknown explanation format {fmt!r} (use csv or json)")


def load_explanation(path) -> ExplanationMap:
    """Read back a JSON explanation document."""
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    return ExplanationMap(
        weights=np.array(document["weights"], dtype=np.float64),
        feature_names=list(document["feature_names"]),
        lag=int(document["lag"]),
        sample_count=int(document["sample_count"]),
        row_index=int(document["row_index"]),
    )
