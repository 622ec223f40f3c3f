"""Multivariate time-series forecasting with distributed-lag embedding,
interpretable multi-head attention, and per-(feature, lag) explanations.

Import is lazy so the command-line front end can configure threading before
numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "Tensor": "autodiff",
    "Tape": "autodiff",
    "SeriesTable": "data",
    "Normalizer": "data",
    "WindowSample": "data",
    "load_csv": "data",
    "chronological_split": "data",
    "make_windows": "data",
    "split_and_window": "data",
    "stack_windows": "data",
    "ModelConfig": "model",
    "DLFormer": "model",
    "build_decoder_input": "model",
    "TrainConfig": "training",
    "Adam": "training",
    "train": "training",
    "mse": "training",
    "Checkpoint": "checkpoint",
    "rmse": "metrics",
    "r2": "metrics",
    "dtw": "metrics",
    "evaluate": "metrics",
    "lag_sweep": "metrics",
    "MetricReport": "metrics",
    "ExplanationMap": "explain",
    "extract_explanation": "explain",
    "aggregate_by_feature": "explain",
    "lag_profiles": "explain",
    "export_explanation": "explain",
    "load_explanation": "explain",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value
