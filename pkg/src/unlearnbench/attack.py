"""Black-box membership inference attack used as the evaluation baseline.

The attack only ever sees target-model outputs: its features per probed
sample are the sorted class probabilities, the cross-entropy loss of the
true label, and the one-hot label (21 values for 10 classes). A small
softmax MLP with one 64-unit hidden layer is trained on balanced
member/non-member features and emits a membership probability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .nn import (
    Architecture,
    ModelParameters,
    TrainConfig,
    forward_batch,
    init_model,
    log_probs,
    sgd_train,
)

ATTACK_HIDDEN_SIZE = 64
ATTACK_EPOCHS = 100
ATTACK_LEARNING_RATE = 0.1
ATTACK_BATCH_SIZE = 32


def attack_feature_size(class_count: int) -> int:
    return 2 * class_count + 1


def attack_architecture(class_count: int = 10) -> Architecture:
    # two-class softmax output; its class-1 probability is the membership score
    return Architecture((attack_feature_size(class_count), ATTACK_HIDDEN_SIZE, 2))


@dataclass
class AttackModel:
    model: ModelParameters
    seed: int
    epochs: int


def attack_features(target_model: ModelParameters, ds: LabeledDataset) -> np.ndarray:
    """Per-sample attack features from black-box target-model queries only."""
    lp = log_probs(target_model, ds.features.astype(np.float64))
    probs = np.exp(lp)
    sorted_probs = np.sort(probs, axis=1)[:, ::-1]
    loss = -lp[np.arange(len(ds)), ds.labels]
    onehot = np.zeros((len(ds), ds.class_count))
    onehot[np.arange(len(ds)), ds.labels] = 1.0
    return np.hstack([sorted_probs, loss[:, None], onehot]).astype(np.float32)


def build_attack_set(
    target_model: ModelParameters,
    members: LabeledDataset,
    non_members: LabeledDataset,
    seed: int = 0,
) -> LabeledDataset:
    """Balanced, labeled attack features: members 1, non-members 0.

    The larger side is subsampled (seeded) to the size of the smaller one.
    """
    if len(members) == 0 or len(non_members) == 0:
        raise ValueError("member and non-member sets must be nonempty")
    if members.feature_size != non_members.feature_size:
        raise ValueError("member and non-member feature sizes differ")
    rng = np.random.default_rng(seed)
    size = min(len(members), len(non_members))

    def pick(ds: LabeledDataset) -> LabeledDataset:
        if len(ds) == size:
            return ds
        return ds.subset(np.sort(rng.choice(len(ds), size=size, replace=False)))

    members, non_members = pick(members), pick(non_members)
    features = np.vstack(
        [attack_features(target_model, members), attack_features(target_model, non_members)]
    )
    labels = np.concatenate([np.ones(size, np.int64), np.zeros(size, np.int64)])
    return LabeledDataset(features, labels, source="synthetic", class_count=2)


def train_attack(
    attack_set: LabeledDataset,
    seed: int,
    epochs: int = ATTACK_EPOCHS,
    learning_rate: float = ATTACK_LEARNING_RATE,
    batch_size: int = ATTACK_BATCH_SIZE,
) -> AttackModel:
    """Deterministic SGD training of the attack classifier."""
    arch = Architecture((attack_set.feature_size, ATTACK_HIDDEN_SIZE, 2))
    cfg = TrainConfig(
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=min(batch_size, len(attack_set)),
        seed=seed,
    )
    model, _ = sgd_train(init_model(arch, seed), attack_set, cfg)
    return AttackModel(model=model, seed=seed, epochs=epochs)


def membership_probabilities(
    attack_model: AttackModel, target_model: ModelParameters, ds: LabeledDataset
) -> np.ndarray:
    """Membership probability in [0, 1] for every sample in ds."""
    features = attack_features(target_model, ds).astype(np.float64)
    return forward_batch(attack_model.model, features)[:, 1]


def mia_mean_probability(
    attack_model: AttackModel, target_model: ModelParameters, forget_set: LabeledDataset
) -> float:
    """Mean membership probability over the forget set."""
    if len(forget_set) == 0:
        raise ValueError("forget set must be nonempty")
    return float(membership_probabilities(attack_model, target_model, forget_set).mean())


def attack_result_json(seed: int, algorithm: str, p: float, mia_mean_prob: float) -> str:
    """Serialized per-cell attack result."""
    return json.dumps(
        {"seed": seed, "algorithm": algorithm, "p": p, "mia_mean_prob": mia_mean_prob}
    )
