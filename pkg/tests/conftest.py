from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest


@pytest.fixture(scope="session")
def digits_data_dir(tmp_path_factory) -> Path:
    """sklearn digits written in MNIST IDX layout: 100 per class for training,
    the remainder as the test files."""
    from sklearn.datasets import load_digits

    from helpers import write_idx_images, write_idx_labels

    d = load_digits()
    pix = np.round(d.images.reshape(len(d.images), 64) / 16.0 * 255.0).astype(np.uint8)
    labels = d.target.astype(np.uint8)

    train_mask = np.zeros(len(labels), dtype=bool)
    for c in range(10):
        train_mask[np.flatnonzero(labels == c)[:100]] = True

    out = tmp_path_factory.mktemp("digits_idx")
    write_idx_images(out / "train-images-idx3-ubyte", pix[train_mask].reshape(-1, 8, 8))
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[train_mask])
    write_idx_images(out / "t10k-images-idx3-ubyte", pix[~train_mask].reshape(-1, 8, 8))
    write_idx_labels(out / "t10k-labels-idx1-ubyte", labels[~train_mask])
    return out
