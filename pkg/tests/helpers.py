"""Shared test utilities: IDX file writers, tiny fixtures, oracles."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from unlearnbench.data import LabeledDataset
from unlearnbench.nn import Architecture, ModelParameters, init_model


def write_idx_images(path: Path, images: np.ndarray) -> None:
    """images: (n, rows, cols) uint8."""
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def random_model(arch: Architecture, seed: int, scale: float = 1.0) -> ModelParameters:
    """Model with nonzero biases too, for less structured test cases."""
    rng = np.random.default_rng(seed)
    params = rng.normal(0.0, 0.4 * scale, size=arch.param_count).astype(np.float32)
    return ModelParameters(arch, params)


def random_dataset(feature_size: int, n: int, seed: int, class_count: int = 3) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    return LabeledDataset(
        rng.random((n, feature_size)).astype(np.float32),
        rng.integers(0, class_count, n),
        class_count=class_count,
    )


def numeric_grad(f, params: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.empty(params.size)
    for i in range(params.size):
        bumped = params.astype(np.float64).copy()
        bumped[i] += h
        up = f(bumped)
        bumped[i] -= 2 * h
        down = f(bumped)
        grad[i] = (up - down) / (2 * h)
    return grad


def model_with_params(arch: Architecture, flat64: np.ndarray) -> ModelParameters:
    return ModelParameters(arch, flat64.astype(np.float32))


def trained_toy(seed: int = 0):
    """Small trained model plus its recorded update log and dataset."""
    from unlearnbench.nn import TrainConfig, sgd_train

    arch = Architecture((6, 8, 3))
    ds = random_dataset(6, 40, seed + 100, class_count=3)
    cfg = TrainConfig(epochs=3, learning_rate=0.1, batch_size=8, seed=seed, record_updates=True)
    initial = init_model(arch, seed)
    trained, log = sgd_train(initial, ds, cfg)
    return initial, trained, log, ds
