"""Self-describing checkpoint container.

A checkpoint is an .npz archive holding a format-version marker, the model
configuration and training metadata as JSON strings, the fitted normalizer
statistics, and every parameter tensor by name.  Floats are written
explicitly little-endian 64-bit so files are byte-comparable across
platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Normalizer
from .errors import CheckpointError
from .model import DLFormer, ModelConfig

FORMAT_VERSION = 1
_PARAM_PREFIX = "param/"


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    normalizer: Normalizer | None = None
    meta: dict = field(default_factory=dict)

    def build_model(self) -> DLFormer:
        model = DLFormer(self.config, seed=int(self.meta.get("seed", 0)))
        model.load_state(self.params)
        return model

    def save(self, path) -> None:
        arrays: dict[str, np.ndarray] = {
            "format_version": np.array(FORMAT_VERSION, dtype="<i8"),
            "config_json": np.array(json.dumps(self.config.to_dict(), sort_keys=True)),
            "meta_json": np.array(json.dumps(self.meta, sort_keys=True)),
        }
        if self.normalizer is not None:
            arrays["normalizer_mean"] = self.normalizer.mean.astype("<f8")
            arrays["normalizer_std"] = self.normalizer.std.astype("<f8")
            arrays["normalizer_names"] = np.array(json.dumps(self.normalizer.feature_names))
        for name, values in self.params.items():
            arrays[_PARAM_PREFIX + name] = np.asarray(values).astype("<f8")
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @staticmethod
    def load(path) -> "Checkpoint":
        try:
            archive = np.load(path, allow_pickle=False)
        except FileNotFoundError as exc:
            raise CheckpointError(f"checkpoint not found: {path}") from exc
        except Exception as exc:
            raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
        with archive:
            if "format_version" not in archive:
                raise CheckpointError(f"{path} is not a checkpoint (no format_version)")
            version = int(archive["format_version"])
            if version != FORMAT_VERSION:
                raise CheckpointError(
                    f"checkpoint format version {version} unsupported "
                    f"(this build reads version {FORMAT_VERSION})"
                )
            config = ModelConfig.from_dict(json.loads(str(archive["config_json"])))
            meta = json.loads(str(archive["meta_json"]))
            normalizer = None
            if "normalizer_mean" in archive:
                normalizer = Normalizer(
                    mean=np.asarray(archive["normalizer_mean"], dtype=np.float64),
                    std=np.asarray(archive["normalizer_std"], dtype=np.float64),
                    feature_names=json.loads(str(archive["normalizer_names"])),
                )
            params = {
                key[len(_PARAM_PREFIX):]: np.asarray(archive[key], dtype=np.float64)
                for key in archive.files
                if key.startswith(_PARAM_PREFIX)
            }
        return Checkpoint(config=config, params=params, normalizer=normalizer, meta=meta)
