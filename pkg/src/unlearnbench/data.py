"""Dataset loading, preprocessing and forget-set construction.

MNIST comes as big-endian IDX files (optionally gzipped), CIFAR-10 as its
binary batch layout. CIFAR images are converted to greyscale with ITU-R
601 luminance weights. All pixel features are scaled to [0, 1]. A seeded
Gaussian-blob generator stands in for real data in tests.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 channels * 32 * 32

# ITU-R 601 luminance weights for greyscale conversion
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class LabeledDataset:
    features: np.ndarray  # (n, feature_size) float32
    labels: np.ndarray  # (n,) int64
    source: str = "synthetic"
    class_count: int = 10

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features and labels must have matching first dimension")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_size(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            self.features[indices], self.labels[indices], self.source, self.class_count
        )


@dataclass(frozen=True)
class DatasetSplit:
    """Index partition of a dataset into remaining and forget-target parts."""

    remaining: np.ndarray
    forget: np.ndarray
    target_class: int
    percentage: float


def _open_maybe_gzip(path: Path):
    with open(path, "rb") as probe:
        head = probe.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, path: Path, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(f"{path}: truncated file while reading {what}")
    return buf


def load_mnist_idx(images_path: str | Path, labels_path: str | Path) -> LabeledDataset:
    """Parse an IDX image/label file pair into a dataset with pixels in [0, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)

    with _open_maybe_gzip(images_path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        raw = _read_exact(f, count * rows * cols, images_path, "pixels")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with _open_maybe_gzip(labels_path) as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, labels_path, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        labels = np.frombuffer(_read_exact(f, label_count, labels_path, "labels"), dtype=np.uint8)

    if count != label_count:
        raise DataFormatError(
            f"image/label count mismatch: {count} images vs {label_count} labels"
        )
    features = pixels.astype(np.float32) / np.float32(255.0)
    return LabeledDataset(features, labels.astype(np.int64), source="mnist")


def load_cifar10(batch_paths: Sequence[str | Path]) -> LabeledDataset:
    """Parse CIFAR-10 binary batches into greyscale samples with N=1024."""
    all_features = []
    all_labels = []
    for path in map(Path, batch_paths):
        raw = path.read_bytes()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.max() > 9:
            raise DataFormatError(f"{path}: label byte out of range")
        channels = records[:, 1:].reshape(-1, 3, 1024).astype(np.float64)
        grey = np.tensordot(channels, _LUMA, axes=([1], [0])) / 255.0
        all_features.append(grey.astype(np.float32))
        all_labels.append(labels)
    return LabeledDataset(
        np.concatenate(all_features), np.concatenate(all_labels), source="cifar10"
    )


def take_first_per_class(ds: LabeledDataset, k: int = 100) -> LabeledDataset:
    """Keep the k lowest-index samples of every class, original order preserved."""
    keep = np.zeros(len(ds), dtype=bool)
    for cls in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == cls)
        if len(idx) < k:
            raise DataFormatError(f"class {cls} has only {len(idx)} samples, need {k}")
        keep[idx[:k]] = True
    return ds.subset(np.flatnonzero(keep))


def make_split(ds: LabeledDataset, target_class: int, p: float) -> DatasetSplit:
    """Mark the first round(p * class size) occurrences of the target class for forgetting."""
    if not 0 < p <= 1:
        raise ValueError(f"percentage must be in (0, 1], got {p}")
    class_idx = np.flatnonzero(ds.labels == target_class)
    if len(class_idx) == 0:
        raise DataFormatError(f"target class {target_class} not present in dataset")
    # round-half-up with a floor of one sample, so p=0.01 of 100 yields exactly 1
    count = min(len(class_idx), max(1, int(np.floor(p * len(class_idx) + 0.5))))
    forget = class_idx[:count]
    mask = np.ones(len(ds), dtype=bool)
    mask[forget] = False
    return DatasetSplit(np.flatnonzero(mask), forget, target_class, p)


def synthetic_blobs(
    seed: int,
    samples_per_class: int = 100,
    feature_size: int = 32,
    class_count: int = 10,
    spread: float = 0.12,
) -> LabeledDataset:
    """Seeded Gaussian blobs in [0, 1]^N, one cluster per class.

    Class means are drawn from a fixed stream so that datasets with
    different seeds (e.g. train/test) share the same cluster layout.
    """
    mean_rng = np.random.default_rng(1234)
    means = mean_rng.uniform(0.25, 0.75, size=(class_count, feature_size))
    rng = np.random.default_rng(seed)
    features = means.repeat(samples_per_class, axis=0)
    features = features + rng.normal(0.0, spread, size=features.shape)
    features = np.clip(features, 0.0, 1.0)
    labels = np.arange(class_count).repeat(samples_per_class)
    order = rng.permutation(len(labels))
    return LabeledDataset(
        features[order].astype(np.float32), labels[order], source="synthetic",
        class_count=class_count,
    )
