"""Forecast-quality metrics and the evaluation / lag-sweep harness.

RMSE and R-squared are pooled over every window and horizon step; dynamic
time warping is computed per window on the length-T (truth, forecast) pair
and averaged over windows.  DTW uses absolute difference as the local cost,
boundary anchoring, no window constraint and no path-length normalization.
Metrics are reported on the de-normalized (original) scale when a
normalizer is available.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Normalizer, WindowSample, stack_windows
from .errors import DataError
from .model import DLFormer

log = logging.getLogger(__name__)


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise DataError("rmse needs at least one value")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def r2(y, y_hat) -> float:
    """Coefficient of determination; NaN (with a warning) for constant truth."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size < 2:
        raise DataError("r2 needs at least two values")
    total = float(np.sum((y - y.mean()) ** 2))
    if total == 0.0:
        log.warning("r2 undefined: truth series is constant")
        return float("nan")
    residual = float(np.sum((y - y_hat) ** 2))
    return 1.0 - residual / total


def dtw(a, b) -> float:
    """Dynamic-time-warping distance with |x - y| local cost.

    Full dynamic program, boundary anchored at both ends, monotone steps
    (match, insert, delete), no band constraint, no normalization.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise DataError("dtw needs non-empty series")
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.empty((n, m), dtype=np.float64)
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = cost[0, j] + acc[0, j - 1]
    for i in range(1, n):
        acc[i, 0] = cost[i, 0] + acc[i - 1, 0]
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, m):
            row[j] = cost[i, j] + min(prev[j], row[j - 1], prev[j - 1])
    return float(acc[n - 1, m - 1])


@dataclass
class MetricCell:
    lag: int
    horizon: int
    rmse: float
    r2: float
    dtw: float
    count: int
    scale: str = "original"

    def as_dict(self) -> dict:
        return {
            "lag": self.lag, "horizon": self.horizon, "rmse": self.rmse,
            "r2": self.r2, "dtw": self.dtw, "count": self.count, "scale": self.scale,
        }


@dataclass
class MetricReport:
    """Grid of metric cells over the (lag, horizon) sweep."""

    cells: list[MetricCell] = field(default_factory=list)

    def cell(self, lag: int, horizon: int) -> MetricCell:
        for c in self.cells:
            if c.lag == lag and c.horizon == horizon:
                return c
        raise KeyError(f"no cell for lag={lag}, horizon={horizon}")

    def grid_csv(self) -> str:
        """Rows are horizons; columns are rmse/r2/dtw grouped per lag."""
        lags = sorted({c.lag for c in self.cells})
        horizons = sorted({c.horizon for c in self.cells})
        header = ["horizon"]
        for lag in lags:
            header += [f"rmse_lag{lag}", f"r2_lag{lag}", f"dtw_lag{lag}"]
        lines = [",".join(header)]
        for horizon in horizons:
            row = [str(horizon)]
            for lag in lags:
                try:
                    c = self.cell(lag, horizon)
                    row += [f"{c.rmse:.6g}", f"{c.r2:.6g}", f"{c.dtw:.6g}"]
                except KeyError:
                    row += ["", "", ""]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def evaluate(
    model: DLFormer,
    samples: list[WindowSample],
    normalizer: Normalizer | None = None,
    target_index: int | None = None,
) -> MetricCell:
    """Forecast every window and pool the three metrics."""
    if not samples:
        raise DataError("evaluate needs a non-empty sample list")
    preds = model.predict(samples)
    _, _, truth = stack_windows(samples)
    scale = "normalized"
    if normalizer is not None:
        if target_index is None:
            raise DataError("target_index required to de-normalize")
        preds = normalizer.invert_values(preds, target_index)
        truth = normalizer.invert_values(truth, target_index)
        scale = "original"
    per_window = [dtw(t, p) for t, p in zip(truth, preds)]
    return MetricCell(
        lag=model.config.lag,
        horizon=model.config.horizon,
        rmse=rmse(truth.reshape(-1), preds.reshape(-1)),
        r2=r2(truth.reshape(-1), preds.reshape(-1)),
        dtw=float(np.mean(per_window)),
        count=len(samples),
        scale=scale,
    )


def lag_sweep(
    table,
    lags=(3, 6, 12, 24),
    horizons=(1, 3, 6, 12),
    model_overrides: dict | None = None,
    train_config=None,
    ratios=(0.6, 0.2, 0.2),
    normalize: bool = True,
    base_seed: int = 0,
    split: str = "test",
    console=None,
) -> MetricReport:
    """Train and evaluate one model per (lag, horizon) cell.

    Cell seeds are derived deterministically from (base_seed, lag, horizon).
    """
    from .data import split_and_window
    from .model import ModelConfig
    from .training import TrainConfig, train

    report = MetricReport()
    overrides = dict(model_overrides or {})
    for lag in lags:
        for horizon in horizons:
            seed = int(np.random.SeedSequence([base_seed, lag, horizon]).generate_state(1)[0])
            data = split_and_window(table, lag, horizon, ratios=ratios, normalize=normalize)
            config = ModelConfig(
                num_features=table.num_features, lag=lag, horizon=horizon, **overrides
            )
            cell_train = train_config or TrainConfig()
            cell_train = TrainConfig(**{**cell_train.to_dict(), "seed": seed})
            checkpoint = train(
                data.train, data.valid, config, cell_train,
                normalizer=data.normalizer, console=console,
            )
            model = checkpoint.build_model()
            samples = getattr(data, split)
            cell = evaluate(model, samples, data.normalizer, table.target_index)
            report.cells.append(cell)
            log.info(
                "sweep cell lag=%d horizon=%d rmse=%.4g r2=%.4g dtw=%.4g",
                lag, horizon, cell.rmse, cell.r2, cell.dtw,
            )
    return report
