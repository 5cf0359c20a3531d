"""Fully connected softmax classifier with manual backpropagation.

Parameters live in a single flat float32 vector, ordered layer by layer:
the weight matrix of each layer (row-major, shape ``(fan_out, fan_in)``)
followed by its bias vector. Hidden layers are ReLU activated, the output
layer is a softmax over the classes.

Training is plain SGD. Metric-grade gradient routines
(:func:`per_sample_grad`, :func:`batch_grad_mean`) compute in float64 so
that downstream scores and finite-difference checks are not limited by
float32 noise; the training loop itself runs in float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterator

import numpy as np

from .errors import NumericalFailureError

if TYPE_CHECKING:
    from .data import LabeledDataset

PARAM_DTYPE = np.dtype("<f4")

DEFAULT_HIDDEN_SIZES = (512, 256, 128)
DEFAULT_CLASS_COUNT = 10


@dataclass(frozen=True)
class Architecture:
    """Layer sizes of the network, input first, classes last."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("architecture needs at least input and output layers")
        if any(s < 1 for s in sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {sizes}")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        """(fan_out, fan_in) per layer."""
        s = self.layer_sizes
        return tuple((s[i + 1], s[i]) for i in range(len(s) - 1))

    @property
    def param_count(self) -> int:
        return sum(out * in_ + out for out, in_ in self.layer_shapes)


def default_architecture(input_size: int, class_count: int = DEFAULT_CLASS_COUNT) -> Architecture:
    """The fixed benchmark topology: input, 512, 256, 128, classes."""
    return Architecture((input_size, *DEFAULT_HIDDEN_SIZES, class_count))


@dataclass
class ModelParameters:
    """An architecture plus its flat parameter vector."""

    arch: Architecture
    params: np.ndarray

    def __post_init__(self) -> None:
        self.params = np.ascontiguousarray(self.params, dtype=PARAM_DTYPE)
        if self.params.shape != (self.arch.param_count,):
            raise ValueError(
                f"parameter vector has length {self.params.size}, "
                f"architecture needs {self.arch.param_count}"
            )

    @property
    def param_count(self) -> int:
        return self.params.size

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.arch, self.params.copy())

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.params)):
            raise NumericalFailureError("model parameters contain NaN/Inf")


def _layer_views(flat: np.ndarray, arch: Architecture) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into (W, b) views without copying."""
    layers = []
    off = 0
    for out, in_ in arch.layer_shapes:
        w = flat[off : off + out * in_].reshape(out, in_)
        off += out * in_
        b = flat[off : off + out]
        off += out
        layers.append((w, b))
    return layers


def init_model(arch: Architecture, seed: int) -> ModelParameters:
    """Seed-deterministic init: weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(arch.param_count, dtype=PARAM_DTYPE)
    for w, b in _layer_views(flat, arch):
        out, in_ = w.shape
        limit = np.sqrt(6.0 / (in_ + out))
        w[...] = rng.uniform(-limit, limit, size=(out, in_)).astype(PARAM_DTYPE)
        b[...] = 0.0
    return ModelParameters(arch, flat)


def _float64_layers(model: ModelParameters) -> list[tuple[np.ndarray, np.ndarray]]:
    return _layer_views(model.params.astype(np.float64), model.arch)


def _check_input(model: ModelParameters, x: np.ndarray, batched: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    expected = (model.arch.input_size,)
    if batched:
        if x.ndim != 2 or x.shape[1] != model.arch.input_size:
            raise ValueError(f"expected inputs of shape (n, {model.arch.input_size}), got {x.shape}")
    elif x.shape != expected:
        raise ValueError(f"expected input of shape {expected}, got {x.shape}")
    return x


def _activations(layers, X: np.ndarray) -> list[np.ndarray]:
    """Per-layer activations for a batch; the last entry holds raw logits."""
    acts = [X]
    a = X
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)
    return acts


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(model: ModelParameters, x: np.ndarray) -> np.ndarray:
    """Class probability vector for a single input."""
    x = _check_input(model, x, batched=False)
    logits = _activations(_float64_layers(model), x[None, :])[-1][0]
    return np.exp(_log_softmax(logits))


def forward_batch(model: ModelParameters, X: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per input."""
    X = _check_input(model, X, batched=True)
    logits = _activations(_float64_layers(model), X)[-1]
    return np.exp(_log_softmax(logits))


def log_probs(model: ModelParameters, X: np.ndarray) -> np.ndarray:
    """Log class probabilities (stable log-softmax), one row per input."""
    X = _check_input(model, X, batched=True)
    return _log_softmax(_activations(_float64_layers(model), X)[-1])


def cross_entropy(model: ModelParameters, X: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels."""
    lp = log_probs(model, X)
    return float(-lp[np.arange(len(y)), np.asarray(y)].mean())


def per_sample_grad(model: ModelParameters, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of the true-label log-likelihood w.r.t. the flat parameters.

    Returns a float64 vector aligned index-for-index with ``model.params``.
    Note the sign: this is the log-likelihood gradient; the cross-entropy
    loss gradient over a dataset is minus the mean of these.
    """
    x = _check_input(model, x, batched=False)
    y = int(y)
    if not 0 <= y < model.arch.output_size:
        raise ValueError(f"label {y} out of range for {model.arch.output_size} classes")
    layers = _float64_layers(model)
    acts = _activations(layers, x)  # 1-D activations via matvec
    logits = acts[-1]
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    d = -p
    d[y] += 1.0  # d log p_y / d logits = onehot(y) - p

    grad = np.empty(model.param_count, dtype=np.float64)
    off = model.param_count
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_in = acts[i]
        out = w.shape[0]
        off -= out
        grad[off : off + out] = d
        off -= w.size
        np.multiply.outer(d, a_in, out=grad[off : off + w.size].reshape(w.shape))
        if i > 0:
            d = (w.T @ d) * (acts[i] > 0)
    if not np.all(np.isfinite(grad)):
        raise NumericalFailureError("non-finite values in per-sample gradient")
    return grad


def batch_grad_mean(model: ModelParameters, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean cross-entropy gradient over (X, y) in a single accumulation pass.

    This is the cheap path: one batched forward/backward regardless of the
    dataset size, as opposed to one backward per sample.
    """
    X = _check_input(model, X, batched=True)
    y = np.asarray(y)
    layers = _float64_layers(model)
    acts = _activations(layers, X)
    p = np.exp(_log_softmax(acts[-1]))
    d = p
    d[np.arange(len(y)), y] -= 1.0  # d L / d logits, summed form
    d /= len(y)

    grad = np.empty(model.param_count, dtype=np.float64)
    off = model.param_count
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_in = acts[i]
        out = w.shape[0]
        off -= out
        grad[off : off + out] = d.sum(axis=0)
        off -= w.size
        grad[off : off + w.size] = (d.T @ a_in).ravel()
        if i > 0:
            d = (d @ w) * (acts[i] > 0)
    if not np.all(np.isfinite(grad)):
        raise NumericalFailureError("non-finite values in batch gradient")
    return grad


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float
    batch_size: int
    seed: int = 0
    record_updates: bool = False
    shuffle: bool = True

    def validate(self, dataset_size: int) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 1 <= self.batch_size <= dataset_size:
            raise ValueError(
                f"batch_size must be in [1, {dataset_size}], got {self.batch_size}"
            )


@dataclass
class UpdateRecord:
    """One applied SGD step: which samples produced it and the exact delta."""

    epoch: int
    batch: int
    sample_indices: np.ndarray
    delta: np.ndarray  # float32, length |params|
    consumed: bool = False


@dataclass
class UpdateLog:
    """In-memory sequence of update records, ordered by (epoch, batch)."""

    entries: list[UpdateRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def records(self) -> Iterator[UpdateRecord]:
        return iter(self.entries)

    def reset_consumed(self) -> None:
        for rec in self.entries:
            rec.consumed = False

    def total_delta(self) -> np.ndarray:
        """float64 sum of all deltas; telescopes to final minus initial params."""
        if not self.entries:
            raise ValueError("empty update log")
        acc = np.zeros_like(self.entries[0].delta, dtype=np.float64)
        for rec in self.entries:
            acc += rec.delta
        return acc


UpdateSink = Callable[[int, int, np.ndarray, np.ndarray], None]


def sgd_train(
    model: ModelParameters,
    dataset: "LabeledDataset",
    cfg: TrainConfig,
    update_sink: UpdateSink | None = None,
) -> tuple[ModelParameters, UpdateLog | None]:
    """Plain SGD over the dataset; no momentum, no weight decay.

    Shuffles the sample order once per epoch from a seed-derived stream and
    keeps the last partial batch. When ``cfg.record_updates`` is set, the
    exact float32 delta applied by every step is recorded together with the
    post-shuffle sample indices of its batch; records go to ``update_sink``
    if given (e.g. a streaming file writer), otherwise into the returned
    :class:`UpdateLog`. The input model is never mutated.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    cfg.validate(n)

    X = dataset.features.astype(np.float32, copy=False)
    labels = np.asarray(dataset.labels)
    params = model.params.copy()
    layers = _layer_views(params, model.arch)
    last = len(layers) - 1
    rng = np.random.default_rng(cfg.seed)
    lr = np.float32(cfg.learning_rate)

    log: UpdateLog | None = None
    if cfg.record_updates and update_sink is None:
        log = UpdateLog()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb = X[idx]
            yb = labels[idx]
            if cfg.record_updates:
                before = params.copy()

            # forward in float32
            acts = [xb]
            a = xb
            for i, (w, b) in enumerate(layers):
                z = a @ w.T + b
                a = np.maximum(z, np.float32(0.0)) if i < last else z
                acts.append(a)
            z = acts[-1] - acts[-1].max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)

            # backward: mean cross-entropy gradient, applied in place
            d = p
            d[np.arange(len(yb)), yb] -= np.float32(1.0)
            d /= np.float32(len(yb))
            for i in range(last, -1, -1):
                w, b = layers[i]
                if i > 0:
                    d_prev = (d @ w) * (acts[i] > 0)
                w -= lr * (d.T @ acts[i])
                b -= lr * d.sum(axis=0)
                if i > 0:
                    d = d_prev

            if cfg.record_updates:
                delta = params - before
                indices = np.sort(idx).astype(np.uint32)
                if update_sink is not None:
                    update_sink(epoch, batch, indices, delta)
                else:
                    log.entries.append(UpdateRecord(epoch, batch, indices, delta))

    if not np.all(np.isfinite(params)):
        raise NumericalFailureError("training produced non-finite parameters")
    return ModelParameters(model.arch, params), log
