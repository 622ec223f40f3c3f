"""Mini-batch MSE training with Adam and validation-based early stopping.

Each epoch shuffles the training windows with a seeded generator, walks
them in batches (the final partial batch is kept, not dropped), and after
the epoch evaluates MSE on the validation split.  The best-validation
parameters are retained; training stops once validation has not improved
for ``patience`` consecutive epochs, or at the epoch cap.  A non-finite
loss or gradient aborts training and returns the last good checkpoint.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import Checkpoint
from .data import Normalizer, WindowSample, stack_windows
from .errors import ConfigError, DataError, NumericError
from .model import DLFormer, ModelConfig

log = logging.getLogger(__name__)

VERSION = "0.1.0"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("learning rate, batch size and max epochs must be positive")
        if not 1 <= self.patience <= self.max_epochs:
            raise ConfigError(
                f"patience must lie in [1, max_epochs], got {self.patience} vs {self.max_epochs}"
            )
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("invalid Adam constants")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs, "patience": self.patience,
            "seed": self.seed, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
        }


def mse(y, y_hat) -> float:
    """Mean squared error between two equal-length vectors."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise DataError("mse needs at least one value")
    return float(np.mean((y - y_hat) ** 2))


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Differentiable MSE against a constant target."""
    return ad.mean(ad.square(ad.sub(pred, Tensor(target))))


class Adam:
    """Bias-corrected Adam with per-tensor moment state, updating in place."""

    def __init__(self, params: dict[str, Tensor], learning_rate: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    @classmethod
    def from_config(cls, params: dict[str, Tensor], config: TrainConfig) -> "Adam":
        return cls(params, config.learning_rate, config.beta1, config.beta2, config.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.steps += 1
        t = self.steps
        correct1 = 1.0 - self.beta1 ** t
        correct2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(grad).all():
                raise NumericError(f"non-finite gradient in parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            p.data -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def validation_mse(model: DLFormer, samples: list[WindowSample], chunk_size: int = 256) -> float:
    preds = model.predict(samples, chunk_size=chunk_size)
    _, _, targets = stack_windows(samples)
    return mse(targets.reshape(-1), preds.reshape(-1))


def train(
    train_samples: list[WindowSample],
    valid_samples: list[WindowSample],
    model_config: ModelConfig,
    train_config: TrainConfig | None = None,
    normalizer: Normalizer | None = None,
    log_path=None,
    console=None,
    provenance: dict | None = None,
) -> Checkpoint:
    """Run the full training loop and return the best-validation checkpoint.

    ``log_path``, when given, receives one CSV line per epoch
    (epoch,train_mse,valid_mse,is_best) under a provenance header; the same
    line goes to ``console`` (default stdout, pass False to silence).
    """
    if not train_samples or not valid_samples:
        raise DataError("training needs non-empty train and valid sample lists")
    cfg = train_config or TrainConfig()
    model = DLFormer(model_config, seed=cfg.seed)
    adam = Adam.from_config(model.named_parameters(), cfg)
    rng = np.random.default_rng(cfg.seed)
    x_all, ref_all, y_all = stack_windows(train_samples)
    n = len(train_samples)

    stream = sys.stdout if console is None else console
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None

    def emit(line: str) -> None:
        if stream:
            print(line, file=stream)
        if log_file:
            log_file.write(line + "\n")

    if log_file and provenance:
        for key, value in provenance.items():
            log_file.write(f"# {key}: {value}\n")
    if log_file:
        log_file.write("epoch,train_mse,valid_mse,is_best\n")

    best_state = model.state()
    best_valid = np.inf
    best_epoch = -1
    epochs_run = 0
    stale = 0
    diverged = False
    try:
        for epoch in range(cfg.max_epochs):
            epochs_run = epoch + 1
            order = rng.permutation(n)
            squared_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                with Tape() as tape:
                    pred, _ = model.forward_batch(x_all[idx], ref_all[idx])
                    loss = mse_loss(pred, y_all[idx])
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    log.error("non-finite training loss at epoch %d; stopping", epoch)
                    diverged = True
                    break
                squared_sum += loss_value * idx.size * model_config.horizon
                adam.zero_grad()
                tape.backward(loss)
                try:
                    adam.step()
                except NumericError as exc:
                    log.error("%s at epoch %d; stopping", exc, epoch)
                    diverged = True
                    break
            if diverged:
                break
            train_mse = squared_sum / (n * model_config.horizon)
            valid = validation_mse(model, valid_samples)
            improved = valid < best_valid - 1e-12
            if improved:
                best_valid = valid
                best_state = model.state()
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
            emit(f"{epoch},{train_mse:.12g},{valid:.12g},{int(improved)}")
            if stale >= cfg.patience:
                break
    finally:
        if log_file:
            log_file.close()

    meta = {
        "version": VERSION,
        "seed": cfg.seed,
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_valid_mse": best_valid if np.isfinite(best_valid) else None,
        "diverged": diverged,
        "train_config": cfg.to_dict(),
    }
    if provenance:
        meta["provenance"] = dict(provenance)
    return Checkpoint(config=model_config, params=best_state, normalizer=normalizer, meta=meta)
