"""Seeded synthetic series generators with ground-truth sidecars.

Three generators: lagged-copy (the target equals one driver column delayed
by a fixed number of steps, plus Gaussian noise -- the localization test
bed), a sinusoid mixture, and independent random walks.  Each writes a
plain CSV (with a commented provenance header) plus a .meta.json sidecar
recording the generator parameters, in particular the driver column and
delay for lagged-copy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

VERSION = "0.1.0"


@dataclass
class SynthResult:
    feature_names: list[str]
    target_name: str
    values: np.ndarray  # (rows, k)
    meta: dict = field(default_factory=dict)


def lagged_copy(
    rows: int,
    num_features: int = 3,
    driver: int = 2,
    delay: int = 3,
    noise: float = 0.01,
    seed: int = 0,
) -> SynthResult:
    """Target at time t equals driver column at time t - delay, plus noise.

    Columns are f1..f{k-1} plus a final 'target' column; ``driver`` is the
    1-based index among the f-columns.  The first ``delay`` target values
    use a pre-roll of the driver series so the relation holds on every row.
    """
    if num_features < 2:
        raise ConfigError("lagged-copy needs at least 2 columns (driver + target)")
    if not 1 <= driver <= num_features - 1:
        raise ConfigError(f"driver must be in 1..{num_features - 1}, got {driver}")
    if delay < 1 or rows < delay + 2:
        raise ConfigError(f"need delay >= 1 and rows > delay + 1, got {delay}, {rows}")
    rng = np.random.default_rng(seed)
    extended = rng.standard_normal(rows + delay)  # driver history incl. pre-roll
    values = np.empty((rows, num_features), dtype=np.float64)
    for j in range(num_features - 1):
        if j == driver - 1:
            values[:, j] = extended[delay:]
        else:
            values[:, j] = rng.standard_normal(rows)
    values[:, -1] = extended[:rows] + noise * rng.standard_normal(rows)
    names = [f"f{j + 1}" for j in range(num_features - 1)] + ["target"]
    meta = {
        "generator": "lagged-copy",
        "rows": rows, "num_features": num_features,
        "driver": driver, "driver_column": names[driver - 1],
        "delay": delay, "noise": noise, "seed": seed,
        "relation": "target[t] = {col}[t - {d}] + noise".format(col=names[driver - 1], d=delay),
    }
    return SynthResult(names, "target", values, meta)


def sinusoid_mixture(
    rows: int, num_features: int = 3, noise: float = 0.05, seed: int = 0
) -> SynthResult:
    """Each column is a two-tone sinusoid; the target mixes the others."""
    if num_features < 2:
        raise ConfigError("sinusoid mixture needs at least 2 columns")
    rng = np.random.default_rng(seed)
    t = np.arange(rows, dtype=np.float64)
    values = np.empty((rows, num_features), dtype=np.float64)
    tones = []
    for j in range(num_features - 1):
        freqs = rng.uniform(0.01, 0.2, size=2)
        phases = rng.uniform(0, 2 * np.pi, size=2)
        values[:, j] = np.sin(2 * np.pi * freqs[0] * t + phases[0]) + 0.5 * np.sin(
            2 * np.pi * freqs[1] * t + phases[1]
        )
        tones.append({"freqs": freqs.tolist(), "phases": phases.tolist()})
    mix = rng.uniform(0.2, 1.0, size=num_features - 1)
    values[:, -1] = values[:, :-1] @ mix + noise * rng.standard_normal(rows)
    names = [f"f{j + 1}" for j in range(num_features - 1)] + ["target"]
    meta = {
        "generator": "sinusoid-mixture", "rows": rows, "num_features": num_features,
        "noise": noise, "seed": seed, "tones": tones, "mix": mix.tolist(),
    }
    return SynthResult(names, "target", values, meta)


def random_walk(rows: int, num_features: int = 3, seed: int = 0) -> SynthResult:
    """Independent Gaussian random walks; the last column is the target."""
    if num_features < 1:
        raise ConfigError("random walk needs at least 1 column")
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.standard_normal((rows, num_features)), axis=0)
    names = [f"f{j + 1}" for j in range(num_features - 1)] + ["target"]
    meta = {"generator": "random-walk", "rows": rows, "num_features": num_features, "seed": seed}
    return SynthResult(names, "target", values, meta)


GENERATORS = {
    "lagged-copy": lagged_copy,
    "sinusoid": sinusoid_mixture,
    "random-walk": random_walk,
}


def write_csv(result: SynthResult, path, provenance: dict | None = None) -> None:
    """Write the series as CSV plus a .meta.json ground-truth sidecar."""
    lines = [f"# artifact_version: {VERSION}"]
    for key, value in {**result.meta, **(provenance or {})}.items():
        if key in ("generator", "seed", "driver", "delay", "config_hash"):
            lines.append(f"# {key}: {value}")
    lines.append(",".join(result.feature_names))
    for row in result.values:
        lines.append(",".join(repr(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = {"artifact_version": VERSION, **result.meta}
    if provenance:
        sidecar.update(provenance)
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
