"""Experiment grid orchestration.

For every seed the harness trains one model with update recording (the
log is streamed to disk), then for every forget percentage evaluates the
initial model, the trained model, and each requested forgetting algorithm:
accuracies on remaining/forget/test data, the information and efficacy
scores with their upper bound on the forget set, the membership-attack
mean probability, and wall-clock timings per phase. Rows are appended to a
CSV as they are produced so an interrupted run loses at most the cell in
flight; a JSON manifest records the exact configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .attack import AttackModel, build_attack_set, mia_mean_probability, train_attack
from .checkpoints import StoredUpdateLog, UpdateLogWriter
from .data import (
    DatasetSplit,
    LabeledDataset,
    load_cifar10,
    load_mnist_idx,
    make_split,
    synthetic_blobs,
    take_first_per_class,
)
from .errors import DataFormatError
from .metrics import (
    accuracy,
    efficacy_from_information,
    fim_diagonal,
    grad_norm_sq,
)
from .nn import ModelParameters, TrainConfig, default_architecture, init_model, sgd_train
from .unlearn import FisherConfig, amnesiac_forget, fisher_forget, retrain

DATA_DIR_ENV = "UNLB_DATA_DIR"

DEFAULT_PERCENTAGES = (0.01, 0.1, 0.25, 0.5, 0.8, 1.0)
DEFAULT_SEEDS = tuple(range(20))
ALGORITHMS = ("retrain", "amnesiac", "fisher")
BASELINES = ("initial", "pretrained")

# per-dataset training hyperparameters and default forget-target classes
DATASET_DEFAULTS = {
    "mnist": {"target_class": 3, "epochs": 50, "learning_rate": 0.1, "batch_size": 32},
    "cifar10": {"target_class": 8, "epochs": 200, "learning_rate": 0.1, "batch_size": 64},
    "synthetic": {"target_class": 3, "epochs": 20, "learning_rate": 0.1, "batch_size": 32},
}

RESULT_COLUMNS = (
    "dataset",
    "seed",
    "algorithm",
    "p",
    "acc_dr",
    "acc_df",
    "acc_test",
    "information",
    "efficacy",
    "upper_bound",
    "grad_norm_sq",
    "mia_mean_prob",
    "forget_seconds",
    "metric_seconds",
    "bound_seconds",
    "error",
)


@dataclass
class ResultRow:
    dataset: str
    seed: int
    algorithm: str
    p: float
    acc_dr: float = math.nan
    acc_df: float = math.nan
    acc_test: float = math.nan
    information: float = math.nan
    efficacy: float = math.nan
    upper_bound: float = math.nan
    grad_norm_sq: float = math.nan
    mia_mean_prob: float = math.nan
    forget_seconds: float = 0.0
    metric_seconds: float = 0.0
    bound_seconds: float = 0.0
    error: str = ""

    def to_csv_line(self) -> str:
        def fmt(v) -> str:
            if isinstance(v, float):
                return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan")
            return str(v)

        return ",".join(fmt(getattr(self, c)) for c in RESULT_COLUMNS)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    data_dir: str | None = None
    target_class: int | None = None
    percentages: tuple[float, ...] = DEFAULT_PERCENTAGES
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    epochs: int | None = None
    learning_rate: float | None = None
    batch_size: int | None = None
    alpha: float = 1e-10
    fim_clamp_min: float = 1e-8
    noise_std_clamp_max: float | None = 0.02
    algorithms: tuple[str, ...] = ALGORITHMS
    out_dir: str = "results"
    jobs: int = 1
    samples_per_class: int = 100
    synthetic_feature_size: int = 32
    keep_update_logs: bool = False

    def __post_init__(self) -> None:
        if self.dataset not in DATASET_DEFAULTS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        for p in self.percentages:
            if not 0 < p <= 1:
                raise ValueError(f"percentages must lie in (0, 1], got {p}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.percentages:
            raise ValueError("percentages must be nonempty")

    def resolved_target_class(self) -> int:
        if self.target_class is not None:
            return self.target_class
        return DATASET_DEFAULTS[self.dataset]["target_class"]

    def train_config(self, seed: int, record_updates: bool = False) -> TrainConfig:
        defaults = DATASET_DEFAULTS[self.dataset]
        return TrainConfig(
            epochs=self.epochs if self.epochs is not None else defaults["epochs"],
            learning_rate=(
                self.learning_rate
                if self.learning_rate is not None
                else defaults["learning_rate"]
            ),
            batch_size=(
                self.batch_size if self.batch_size is not None else defaults["batch_size"]
            ),
            seed=seed,
            record_updates=record_updates,
        )

    def fisher_config(self, noise_seed: int) -> FisherConfig:
        return FisherConfig(
            alpha=self.alpha,
            fim_clamp_min=self.fim_clamp_min,
            noise_seed=noise_seed,
            noise_std_clamp_max=self.noise_std_clamp_max,
        )

    def resolved_data_dir(self) -> Path | None:
        if self.data_dir:
            return Path(self.data_dir)
        env = os.environ.get(DATA_DIR_ENV)
        return Path(env) if env else None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_config_file(path: str | Path) -> dict:
    """Plain-text ``key = value`` configuration, ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def config_from_strings(values: dict) -> ExperimentConfig:
    """Build a config from string-valued settings (file or CLI)."""

    def split_list(s):
        return [part for part in str(s).replace(",", " ").split() if part]

    kwargs: dict = {}
    converters = {
        "dataset": str,
        "data_dir": str,
        "target_class": int,
        "percentages": lambda s: tuple(float(x) for x in split_list(s)),
        "seeds": lambda s: tuple(int(x) for x in split_list(s)),
        "epochs": int,
        "learning_rate": float,
        "batch_size": int,
        "alpha": float,
        "fim_clamp_min": float,
        "noise_std_clamp_max": lambda s: None if str(s).lower() == "none" else float(s),
        "algorithms": lambda s: tuple(split_list(s)),
        "out_dir": str,
        "jobs": int,
        "samples_per_class": int,
        "synthetic_feature_size": int,
        "keep_update_logs": lambda s: str(s).lower() in ("1", "true", "yes"),
    }
    for key, value in values.items():
        if key not in converters:
            raise DataFormatError(f"unknown configuration key {key!r}")
        if value is not None:
            kwargs[key] = converters[key](value)
    return ExperimentConfig(**kwargs)


def _find_idx_pair(data_dir: Path, images: str, labels: str) -> tuple[Path, Path]:
    def find(stem: str) -> Path:
        for candidate in (data_dir / stem, data_dir / f"{stem}.gz"):
            if candidate.exists():
                return candidate
        raise DataFormatError(f"missing data file {data_dir / stem}[.gz]")

    return find(images), find(labels)


def load_experiment_data(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """(train, test) datasets with the train side cut to the first k per class."""
    if config.dataset == "synthetic":
        train = synthetic_blobs(
            seed=101,
            samples_per_class=config.samples_per_class,
            feature_size=config.synthetic_feature_size,
        )
        test = synthetic_blobs(
            seed=202,
            samples_per_class=config.samples_per_class,
            feature_size=config.synthetic_feature_size,
        )
    else:
        data_dir = config.resolved_data_dir()
        if data_dir is None:
            raise DataFormatError(
                f"dataset {config.dataset!r} needs --data-dir or ${DATA_DIR_ENV}"
            )
        if config.dataset == "mnist":
            train = load_mnist_idx(
                *_find_idx_pair(data_dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")
            )
            test = load_mnist_idx(
                *_find_idx_pair(data_dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
            )
        else:  # cifar10
            batches = sorted(data_dir.glob("data_batch_*.bin"))
            if not batches:
                raise DataFormatError(f"no data_batch_*.bin files under {data_dir}")
            train = load_cifar10(batches)
            test_path = data_dir / "test_batch.bin"
            if not test_path.exists():
                raise DataFormatError(f"missing {test_path}")
            test = load_cifar10([test_path])
    return take_first_per_class(train, config.samples_per_class), test


def _evaluate_cell(
    config: ExperimentConfig,
    seed: int,
    algorithm: str,
    split: DatasetSplit,
    model: ModelParameters,
    remaining: LabeledDataset,
    forget: LabeledDataset,
    test: LabeledDataset,
    attack: AttackModel,
    forget_seconds: float,
) -> ResultRow:
    row = ResultRow(
        dataset=config.dataset,
        seed=seed,
        algorithm=algorithm,
        p=split.percentage,
        forget_seconds=forget_seconds,
    )
    row.acc_dr = accuracy(model, remaining)
    row.acc_df = accuracy(model, forget)
    row.acc_test = accuracy(model, test)

    t0 = time.perf_counter()
    row.information = fim_diagonal(model, forget).trace
    row.metric_seconds = time.perf_counter() - t0
    row.efficacy = efficacy_from_information(row.information)

    t0 = time.perf_counter()
    gnsq = grad_norm_sq(model, forget)
    row.bound_seconds = time.perf_counter() - t0
    row.grad_norm_sq = gnsq
    row.upper_bound = 1.0 / gnsq if gnsq > 0.0 else math.inf

    row.mia_mean_prob = mia_mean_probability(attack, model, forget)
    return row


def _run_seed(
    config: ExperimentConfig,
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    seed: int,
    out_dir: Path,
) -> list[ResultRow]:
    arch = default_architecture(train_ds.feature_size, train_ds.class_count)
    target_class = config.resolved_target_class()
    initial = init_model(arch, seed)

    log_path = out_dir / f"updates_seed{seed}.unlb"
    writer = UpdateLogWriter(log_path, arch)
    try:
        pretrained, _ = sgd_train(
            initial,
            train_ds,
            config.train_config(seed, record_updates=True),
            update_sink=writer.append,
        )
    finally:
        writer.close()

    rows: list[ResultRow] = []
    log = StoredUpdateLog(log_path)
    try:
        for p_index, p in enumerate(config.percentages):
            split = make_split(train_ds, target_class, p)
            remaining = train_ds.subset(split.remaining)
            forget = train_ds.subset(split.forget)

            attack_seed = seed * 10007 + p_index
            attack_set = build_attack_set(pretrained, train_ds, test_ds, seed=attack_seed)
            attack = train_attack(attack_set, seed=attack_seed)

            variants: list[tuple[str, ModelParameters, float]] = [
                ("initial", initial, 0.0),
                ("pretrained", pretrained, 0.0),
            ]
            for algorithm in config.algorithms:
                t0 = time.perf_counter()
                if algorithm == "retrain":
                    scrubbed = retrain(arch, seed, remaining, config.train_config(seed))
                elif algorithm == "amnesiac":
                    log.reset_consumed()
                    scrubbed, _ = amnesiac_forget(pretrained, log, split.forget)
                else:  # fisher
                    scrubbed = fisher_forget(
                        pretrained,
                        remaining,
                        config.fisher_config(noise_seed=seed * 20011 + p_index),
                    )
                variants.append((algorithm, scrubbed, time.perf_counter() - t0))

            for algorithm, model, forget_seconds in variants:
                try:
                    rows.append(
                        _evaluate_cell(
                            config, seed, algorithm, split, model,
                            remaining, forget, test_ds, attack, forget_seconds,
                        )
                    )
                except Exception as exc:  # keep the grid running
                    rows.append(
                        ResultRow(
                            dataset=config.dataset,
                            seed=seed,
                            algorithm=algorithm,
                            p=p,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    finally:
        log.close()
        if not config.keep_update_logs:
            log_path.unlink(missing_ok=True)
    return rows


def write_manifest(config: ExperimentConfig, out_dir: Path) -> Path:
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
    }
    manifest["config_hash"] = hashlib.sha256(
        json.dumps(manifest["config"], sort_keys=True).encode()
    ).hexdigest()
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Run the full grid and return all rows; results.csv and manifest.json
    are written under the configured output directory."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = load_experiment_data(config)
    write_manifest(config, out_dir)

    results_path = out_dir / "results.csv"
    rows: list[ResultRow] = []
    with open(results_path, "w") as f:
        f.write(",".join(RESULT_COLUMNS) + "\n")
        f.flush()

        def emit(seed_rows: list[ResultRow]) -> None:
            for row in seed_rows:
                f.write(row.to_csv_line() + "\n")
            f.flush()
            os.fsync(f.fileno())
            rows.extend(seed_rows)

        if config.jobs <= 1:
            for seed in config.seeds:
                emit(_run_seed(config, train_ds, test_ds, seed, out_dir))
        else:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                futures = [
                    pool.submit(_run_seed, config, train_ds, test_ds, seed, out_dir)
                    for seed in config.seeds
                ]
                for future in futures:  # submission order keeps output deterministic
                    emit(future.result())
    return rows
