"""Information score, efficacy, its cheap upper bound, and accuracy.

The information score is the trace of the diagonal Fisher-information
approximation: the mean over the dataset of squared per-sample
log-likelihood gradients. Efficacy is its reciprocal (infinite at zero
information). The upper bound replaces the per-sample gradient pass with a
single accumulated cross-entropy gradient, so it costs one backward pass
instead of |D|.

Per-sample terms are accumulated sample-major in float64 so results are
reproducible independent of how callers batch their data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .nn import (
    ModelParameters,
    _float64_layers,
    batch_grad_mean,
    forward_batch,
    per_sample_grad,
)


@dataclass(frozen=True)
class FimDiagonal:
    """Diagonal Fisher approximation for one (model, dataset) pair."""

    values: np.ndarray  # float64, nonnegative, length |params|
    dataset_size: int

    @property
    def trace(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class EfficacyReport:
    information: float
    efficacy: float
    upper_bound: float
    grad_norm_sq: float

    def to_dict(self) -> dict:
        return {
            "information": self.information,
            "efficacy": self.efficacy,
            "upper_bound": self.upper_bound,
            "grad_norm_sq": self.grad_norm_sq,
        }

    def to_json(self) -> str:
        # IEEE infinities serialize as the string "inf"
        return json.dumps(
            {k: ("inf" if math.isinf(v) else v) for k, v in self.to_dict().items()}
        )


def fim_diagonal(model: ModelParameters, ds: LabeledDataset) -> FimDiagonal:
    """Mean squared per-sample gradient, one backward pass per sample."""
    if len(ds) == 0:
        raise ValueError("dataset must be nonempty")
    acc = np.zeros(model.param_count, dtype=np.float64)
    for x, y in zip(ds.features, ds.labels):
        g = per_sample_grad(model, x.astype(np.float64), int(y))
        acc += g * g
    acc /= len(ds)
    return FimDiagonal(acc, len(ds))


def fim_diagonal_batched(model: ModelParameters, ds: LabeledDataset) -> FimDiagonal:
    """Same diagonal as :func:`fim_diagonal`, via batched squared factors.

    Each per-sample weight gradient is an outer product d_i a_j of the
    backpropagated logit error and the layer input, so the summed square
    factorizes into one matrix product of elementwise squares per layer.
    Used where the diagonal itself is the goal (Fisher forgetting) rather
    than the per-sample cost model of the efficacy metric.
    """
    if len(ds) == 0:
        raise ValueError("dataset must be nonempty")
    layers = _float64_layers(model)
    last = len(layers) - 1
    n = len(ds)

    acts = [ds.features.astype(np.float64)]
    a = acts[0]
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)
    shifted = acts[-1] - acts[-1].max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)

    # d = per-sample gradient of log p(y|x) w.r.t. the logits
    d = -p
    d[np.arange(n), ds.labels] += 1.0

    offsets = []
    pos = 0
    for fan_out, fan_in in model.arch.layer_shapes:
        offsets.append(pos)
        pos += fan_out * fan_in + fan_out

    values = np.empty(model.param_count, dtype=np.float64)
    for i in range(last, -1, -1):
        w, _ = layers[i]
        fan_out, fan_in = w.shape
        start = offsets[i]
        values[start : start + fan_out * fan_in] = ((d * d).T @ (acts[i] * acts[i])).ravel()
        values[start + fan_out * fan_in : start + fan_out * fan_in + fan_out] = (d * d).sum(
            axis=0
        )
        if i > 0:
            d = (d @ w) * (acts[i] > 0)
    values /= n
    return FimDiagonal(values, n)


def information_score(model: ModelParameters, ds: LabeledDataset) -> float:
    """Trace of the diagonal Fisher approximation; nonnegative."""
    return fim_diagonal(model, ds).trace


def efficacy_from_information(information: float) -> float:
    """Reciprocal information; +inf exactly when the score is 0."""
    return 1.0 / information if information > 0.0 else math.inf


def efficacy(model: ModelParameters, ds: LabeledDataset) -> float:
    return efficacy_from_information(information_score(model, ds))


def grad_norm_sq(model: ModelParameters, ds: LabeledDataset) -> float:
    """Squared L2 norm of the mean cross-entropy gradient (one pass)."""
    if len(ds) == 0:
        raise ValueError("dataset must be nonempty")
    g = batch_grad_mean(model, ds.features.astype(np.float64), ds.labels)
    return float(g @ g)


def efficacy_upper_bound(model: ModelParameters, ds: LabeledDataset) -> float:
    """1 / ||grad L||^2; +inf at a zero gradient. Never exceeded by the efficacy."""
    gnsq = grad_norm_sq(model, ds)
    return 1.0 / gnsq if gnsq > 0.0 else math.inf


def efficacy_report(model: ModelParameters, ds: LabeledDataset) -> EfficacyReport:
    information = information_score(model, ds)
    gnsq = grad_norm_sq(model, ds)
    return EfficacyReport(
        information=information,
        efficacy=efficacy_from_information(information),
        upper_bound=1.0 / gnsq if gnsq > 0.0 else math.inf,
        grad_norm_sq=gnsq,
    )


def accuracy(model: ModelParameters, ds: LabeledDataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    if len(ds) == 0:
        raise ValueError("dataset must be nonempty")
    probs = forward_batch(model, ds.features.astype(np.float64))
    predicted = probs.argmax(axis=1)  # np.argmax already breaks ties low
    return float((predicted == ds.labels).mean())
