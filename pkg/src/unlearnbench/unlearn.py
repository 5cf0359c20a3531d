"""The three forgetting algorithms: retraining, update reversal, Fisher noise.

Retraining starts from the original initialization and never sees the
forget set. Update reversal (amnesiac unlearning) subtracts every recorded
training delta whose batch contained a target sample; batch and iterative
application are equivalent because each record is consumed at most once.
Fisher forgetting adds Gaussian noise scaled per parameter by the inverse
fourth root of the (clamped) Fisher diagonal computed on the remaining
data.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from .data import LabeledDataset
from .errors import NumericalFailureError
from .metrics import FimDiagonal, fim_diagonal_batched
from .nn import Architecture, ModelParameters, TrainConfig, init_model, sgd_train


@dataclass(frozen=True)
class FisherConfig:
    """Noise hyperparameters; alpha folds the Lagrangian trade-off and the
    assumed model-gap variance into one knob."""

    alpha: float = 1e-10
    fim_clamp_min: float = 1e-8
    noise_seed: int = 0
    noise_std_clamp_max: float | None = 0.02

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.fim_clamp_min <= 0:
            raise ValueError("fim_clamp_min must be > 0")
        if self.noise_std_clamp_max is not None and self.noise_std_clamp_max <= 0:
            raise ValueError("noise_std_clamp_max must be > 0")


def retrain(
    arch: Architecture,
    init_seed: int,
    remaining: LabeledDataset,
    cfg: TrainConfig,
) -> ModelParameters:
    """Train from scratch on the remaining data with the original init seed.

    The forget set is excluded by construction: it is never passed in.
    """
    if len(remaining) == 0:
        raise ValueError("remaining data must be nonempty")
    cfg = dataclasses.replace(cfg, record_updates=False)
    model, _ = sgd_train(init_model(arch, init_seed), remaining, cfg)
    return model


class _UpdateLogLike(Protocol):
    def records(self) -> Iterable: ...


def amnesiac_forget(
    model: ModelParameters,
    log: _UpdateLogLike,
    forget_indices: Iterable[int],
) -> tuple[ModelParameters, _UpdateLogLike]:
    """Subtract every unconsumed update whose batch touched the forget set.

    Matching records are marked consumed in the log, which makes a second
    call with the same targets a no-op and makes forgetting two sets
    iteratively equal to forgetting their union in one call. Works with
    in-memory and file-backed logs alike; deltas are accumulated in
    float64 in training order.
    """
    forget = frozenset(int(i) for i in forget_indices)
    acc = np.zeros(model.param_count, dtype=np.float64)
    touched = False
    for rec in log.records():
        if rec.consumed or forget.isdisjoint(map(int, rec.sample_indices)):
            continue
        delta = rec.delta
        if delta.size != model.param_count:
            raise ValueError(
                f"update log delta length {delta.size} does not match model "
                f"parameter count {model.param_count}"
            )
        acc += delta
        rec.consumed = True
        touched = True
    if not touched:
        return model.copy(), log
    params = (model.params.astype(np.float64) - acc).astype(model.params.dtype)
    result = ModelParameters(model.arch, params)
    result.check_finite()
    return result, log


def fisher_forget(
    model: ModelParameters,
    remaining: LabeledDataset,
    cfg: FisherConfig,
    fim: FimDiagonal | None = None,
) -> ModelParameters:
    """Add per-parameter Gaussian noise shaped by the Fisher diagonal.

    The diagonal is computed on the remaining data (or taken from ``fim``
    if precomputed), clamped elementwise from below, and turned into noise
    standard deviations ``(alpha / F_i) ** 0.25``, optionally capped. With
    ``alpha == 0`` the model is returned unchanged.
    """
    if cfg.alpha == 0.0:
        return model.copy()
    if fim is None:
        if len(remaining) == 0:
            raise ValueError("remaining data must be nonempty")
        fim = fim_diagonal_batched(model, remaining)
    clamped = np.maximum(fim.values, cfg.fim_clamp_min)
    std = (cfg.alpha / clamped) ** 0.25
    if cfg.noise_std_clamp_max is not None:
        std = np.minimum(std, cfg.noise_std_clamp_max)
    noise = np.random.default_rng(cfg.noise_seed).standard_normal(model.param_count)
    params = (model.params.astype(np.float64) + std * noise).astype(model.params.dtype)
    if not np.all(np.isfinite(params)):
        raise NumericalFailureError("Fisher noise produced non-finite parameters")
    return ModelParameters(model.arch, params)
