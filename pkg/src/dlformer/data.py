"""CSV ingestion, chronological splitting, normalization and windowing.

The input format is a UTF-8 comma-separated file with a header row, an
optional leading non-numeric timestamp column, and '.' decimals.  Leading
lines starting with '#' (provenance headers on generated files) are skipped.
Rows containing sentinel values (default -200, the Air Quality missing-data
marker), empty cells or NaN literals are dropped with a logged count.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_SENTINELS = (-200.0,)
_NAN_LITERALS = {"", "nan", "NaN", "NAN", "null", "NULL", "na", "NA"}


@dataclass
class SeriesTable:
    """Named multivariate series; rows are in time order and never reordered."""

    feature_names: list[str]
    target_name: str
    rows: np.ndarray  # (M, k) float64
    timestamps: list[str] | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.feature_names):
            raise DataError(
                f"rows shape {self.rows.shape} does not match "
                f"{len(self.feature_names)} feature names"
            )
        if self.target_name not in self.feature_names:
            raise DataError(
                f"target column {self.target_name!r} not among features "
                f"{self.feature_names}"
            )

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    @property
    def target_index(self) -> int:
        return self.feature_names.index(self.target_name)

    def slice_rows(self, start: int, stop: int) -> "SeriesTable":
        ts = self.timestamps[start:stop] if self.timestamps is not None else None
        return SeriesTable(self.feature_names, self.target_name, self.rows[start:stop], ts)


def load_csv(path, target_name: str, sentinels=DEFAULT_SENTINELS) -> SeriesTable:
    """Load a multivariate series from CSV, dropping sentinel/missing rows."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [row for row in csv.reader(fh)]
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc
    # skip leading provenance comments and blank lines
    while lines and (not lines[0] or lines[0][0].startswith("#")):
        lines.pop(0)
    if not lines:
        raise DataError(f"empty data file: {path}")
    header = [name.strip() for name in lines[0]]
    if len(set(header)) != len(header):
        raise DataError(f"duplicate column names in header: {header}")
    body = [row for row in lines[1:] if row]
    if not body:
        raise DataError(f"no data rows in {path}")

    has_timestamp = not _is_numeric_cell(body[0][0])
    names = header[1:] if has_timestamp else header
    if target_name not in names:
        raise DataError(
            f"target column {target_name!r} not found; available columns: {names}"
        )

    kept: list[list[float]] = []
    stamps: list[str] = []
    dropped = 0
    width = len(header)
    for i, row in enumerate(body, start=2):  # 1-based file line numbers, header is 1
        if len(row) != width:
            raise DataError(f"ragged row at line {i}: expected {width} cells, got {len(row)}")
        cells = row[1:] if has_timestamp else row
        values = []
        drop = False
        for name, cell in zip(names, cells):
            cell = cell.strip()
            if cell in _NAN_LITERALS:
                drop = True
                break
            try:
                value = float(cell)
            except ValueError as exc:
                raise DataError(
                    f"non-numeric value {cell!r} at line {i}, column {name!r}"
                ) from exc
            if not np.isfinite(value) or any(value == s for s in sentinels):
                drop = True
                break
            values.append(value)
        if drop:
            dropped += 1
            continue
        kept.append(values)
        if has_timestamp:
            stamps.append(row[0])
    if dropped:
        log.warning("dropped %d rows containing sentinel or non-finite values", dropped)
    if not kept:
        raise DataError(f"all {dropped} data rows in {path} were dropped as missing")
    return SeriesTable(
        feature_names=names,
        target_name=target_name,
        rows=np.array(kept, dtype=np.float64),
        timestamps=stamps if has_timestamp else None,
    )


def _is_numeric_cell(cell: str) -> bool:
    try:
        float(cell.strip())
        return True
    except ValueError:
        return cell.strip() in _NAN_LITERALS


@dataclass
class Normalizer:
    """Per-feature z-score statistics, fitted on the training split only."""

    mean: np.ndarray
    std: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    @classmethod
    def fit(cls, table: SeriesTable) -> "Normalizer":
        mean = table.rows.mean(axis=0)
        std = table.rows.std(axis=0)
        constant = std == 0.0
        if constant.any():
            flat = [n for n, c in zip(table.feature_names, constant) if c]
            log.warning("constant features %s pass through unscaled (std treated as 1)", flat)
            std = np.where(constant, 1.0, std)
        return cls(mean=mean, std=std, feature_names=list(table.feature_names))

    def apply(self, table: SeriesTable) -> SeriesTable:
        rows = (table.rows - self.mean) / self.std
        return SeriesTable(table.feature_names, table.target_name, rows, table.timestamps)

    def invert(self, table: SeriesTable) -> SeriesTable:
        rows = table.rows * self.std + self.mean
        return SeriesTable(table.feature_names, table.target_name, rows, table.timestamps)

    def invert_values(self, values: np.ndarray, feature_index: int) -> np.ndarray:
        """Map normalized values of one feature back to the original scale."""
        return values * self.std[feature_index] + self.mean[feature_index]


def chronological_split(table: SeriesTable, ratios=(0.6, 0.2, 0.2)):
    """Contiguous train/valid/test partition; floor sizes, remainder to train."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios} (sum {sum(ratios)})")
    n = len(table)
    if n < 3:
        raise DataError(f"table has {n} rows; need at least 3 to split")
    n_valid = int(np.floor(ratios[1] * n))
    n_test = int(np.floor(ratios[2] * n))
    n_train = n - n_valid - n_test
    train = table.slice_rows(0, n_train)
    valid = table.slice_rows(n_train, n_train + n_valid)
    test = table.slice_rows(n_train + n_valid, n)
    return train, valid, test


@dataclass
class WindowSample:
    """One model instance: lagged inputs, reference target values, future target."""

    inputs: np.ndarray      # (k, L), lag order oldest -> newest per feature
    reference: np.ndarray   # (r,) last r target values up to the anchor
    target: np.ndarray      # (T,) next T target values after the anchor
    anchor: int             # 0-based row index of the last input time step


def make_windows(table: SeriesTable, lag: int, horizon: int, reference: int) -> list[WindowSample]:
    """One sample per admissible anchor; count is M - L - T + 1."""
    if lag < 1 or horizon < 1:
        raise DataError(f"lag and horizon must be >= 1, got {lag} and {horizon}")
    if not 1 <= reference <= lag:
        raise DataError(f"reference length must satisfy 1 <= r <= lag, got r={reference}, lag={lag}")
    m = len(table)
    needed = lag + horizon
    if m < needed:
        raise DataError(f"table has {m} rows; windowing needs at least lag + horizon = {needed}")
    target_col = table.rows[:, table.target_index]
    samples = []
    for anchor in range(lag - 1, m - horizon):
        x = table.rows[anchor - lag + 1 : anchor + 1, :].T.copy()
        y_ref = target_col[anchor - reference + 1 : anchor + 1].copy()
        y = target_col[anchor + 1 : anchor + 1 + horizon].copy()
        samples.append(WindowSample(inputs=x, reference=y_ref, target=y, anchor=anchor))
    return samples


def stack_windows(samples: list[WindowSample]):
    """Stack samples into batch arrays (inputs, reference, target)."""
    if not samples:
        raise DataError("cannot stack an empty sample list")
    x = np.stack([s.inputs for s in samples])
    y_ref = np.stack([s.reference for s in samples])
    y = np.stack([s.target for s in samples])
    return x, y_ref, y


@dataclass
class WindowedData:
    """Windowed, normalized train/valid/test samples plus the fitted normalizer."""

    train: list[WindowSample]
    valid: list[WindowSample]
    test: list[WindowSample]
    normalizer: Normalizer | None
    feature_names: list[str]
    target_name: str


def split_and_window(
    table: SeriesTable,
    lag: int,
    horizon: int,
    reference: int | None = None,
    ratios=(0.6, 0.2, 0.2),
    normalize: bool = True,
) -> WindowedData:
    """Split chronologically, fit normalization on train, window each split.

    Windows never straddle split boundaries.  Raises before any training if
    some split is too short for even one window.
    """
    if reference is None:
        reference = min(horizon, lag)
    train_t, valid_t, test_t = chronological_split(table, ratios)
    needed = lag + horizon
    for name, part in (("train", train_t), ("valid", valid_t), ("test", test_t)):
        if len(part) < needed:
            raise DataError(
                f"degenerate split: {name} has {len(part)} rows but windowing "
                f"needs at least lag + horizon = {needed}"
            )
    normalizer = None
    if normalize:
        normalizer = Normalizer.fit(train_t)
        train_t, valid_t, test_t = (normalizer.apply(t) for t in (train_t, valid_t, test_t))
    return WindowedData(
        train=make_windows(train_t, lag, horizon, reference),
        valid=make_windows(valid_t, lag, horizon, reference),
        test=make_windows(test_t, lag, horizon, reference),
        normalizer=normalizer,
        feature_names=list(table.feature_names),
        target_name=table.target_name,
    )
