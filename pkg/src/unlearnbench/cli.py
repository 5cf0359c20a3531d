"""Command-line entry point.

Subcommands: train, forget, efficacy, attack, experiment, report.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attack import attack_result_json, build_attack_set, mia_mean_probability, train_attack
from .checkpoints import StoredUpdateLog, UpdateLogWriter, load_checkpoint, save_checkpoint
from .data import LabeledDataset, make_split
from .errors import DataFormatError, NumericalFailureError
from .harness import (
    DATA_DIR_ENV,
    ExperimentConfig,
    config_from_strings,
    load_experiment_data,
    parse_config_file,
    run_experiment,
)
from .metrics import efficacy_report
from .nn import TrainConfig, default_architecture, init_model, sgd_train
from .report import generate_report
from .unlearn import FisherConfig, amnesiac_forget, fisher_forget, retrain

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", choices=("mnist", "cifar10", "synthetic"), default="synthetic")
    parser.add_argument("--data-dir", help=f"data directory (fallback: ${DATA_DIR_ENV})")
    parser.add_argument("--samples-per-class", type=int, default=100)


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float, dest="learning_rate")
    parser.add_argument("--batch-size", type=int)


def _data_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=args.dataset,
        data_dir=args.data_dir,
        samples_per_class=args.samples_per_class,
    )


def _load_data(args) -> tuple[LabeledDataset, LabeledDataset]:
    return load_experiment_data(_data_config(args))


def _train_config(args, record_updates: bool = False) -> TrainConfig:
    cfg = _data_config(args).train_config(args.seed, record_updates)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.learning_rate is not None:
        cfg.learning_rate = args.learning_rate
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    return cfg


def _forget_subset(args, train_ds: LabeledDataset):
    split = make_split(train_ds, args.target_class, args.percentage)
    return split, train_ds.subset(split.forget), train_ds.subset(split.remaining)


def cmd_train(args) -> int:
    train_ds, _ = _load_data(args)
    model = init_model(default_architecture(train_ds.feature_size, train_ds.class_count), args.seed)
    cfg = _train_config(args, record_updates=args.log_out is not None)
    if args.log_out:
        with UpdateLogWriter(args.log_out, model.arch) as writer:
            trained, _ = sgd_train(model, train_ds, cfg, update_sink=writer.append)
    else:
        trained, _ = sgd_train(model, train_ds, cfg)
    save_checkpoint(args.out, trained)
    print(f"saved checkpoint to {args.out}" + (f", update log to {args.log_out}" if args.log_out else ""))
    return EXIT_OK


def cmd_forget(args) -> int:
    train_ds, _ = _load_data(args)
    model = load_checkpoint(args.model)
    split, _, remaining = _forget_subset(args, train_ds)
    if args.algorithm == "retrain":
        scrubbed = retrain(model.arch, args.seed, remaining, _train_config(args))
    elif args.algorithm == "amnesiac":
        if not args.log:
            raise DataFormatError("amnesiac forgetting requires --log")
        with StoredUpdateLog(args.log) as log:
            scrubbed, _ = amnesiac_forget(model, log, split.forget)
    else:  # fisher
        cfg = FisherConfig(
            alpha=args.alpha,
            fim_clamp_min=args.fim_clamp_min,
            noise_seed=args.noise_seed,
            noise_std_clamp_max=args.noise_std_clamp_max,
        )
        scrubbed = fisher_forget(model, remaining, cfg)
    save_checkpoint(args.out, scrubbed)
    print(f"saved scrubbed checkpoint to {args.out}")
    return EXIT_OK


def cmd_efficacy(args) -> int:
    train_ds, _ = _load_data(args)
    model = load_checkpoint(args.model)
    if args.subset == "all":
        ds = train_ds
    else:
        split, forget, remaining = _forget_subset(args, train_ds)
        ds = forget if args.subset == "forget" else remaining
    print(efficacy_report(model, ds).to_json())
    return EXIT_OK


def cmd_attack(args) -> int:
    train_ds, test_ds = _load_data(args)
    target = load_checkpoint(args.model)
    baseline = load_checkpoint(args.baseline) if args.baseline else target
    _, forget, _ = _forget_subset(args, train_ds)
    attack_set = build_attack_set(baseline, train_ds, test_ds, seed=args.seed)
    attack = train_attack(attack_set, seed=args.seed)
    prob = mia_mean_probability(attack, target, forget)
    print(attack_result_json(args.seed, args.algorithm, args.percentage, prob))
    return EXIT_OK


def cmd_experiment(args) -> int:
    values: dict = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for key in (
        "dataset", "data_dir", "target_class", "percentages", "seeds", "epochs",
        "learning_rate", "batch_size", "alpha", "fim_clamp_min", "algorithms",
        "out_dir", "jobs", "samples_per_class",
    ):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    try:
        config = config_from_strings(values)
    except (ValueError, TypeError) as exc:
        raise DataFormatError(str(exc)) from exc
    rows = run_experiment(config)
    errors = sum(1 for r in rows if r.error)
    print(f"wrote {len(rows)} rows ({errors} with errors) to {Path(config.out_dir) / 'results.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    outputs = generate_report(args.results, args.out, render=not args.no_figures)
    for kind, paths in outputs.items():
        for path in paths:
            print(f"{kind[:-1]}: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unlb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, optionally recording updates")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log-out", help="stream the update log to this path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forget", help="apply a forgetting algorithm to a checkpoint")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--algorithm", required=True, choices=("retrain", "amnesiac", "fisher"))
    p.add_argument("--model", required=True, help="checkpoint of the trained model")
    p.add_argument("--log", help="update log (amnesiac)")
    p.add_argument("--target-class", type=int, default=3)
    p.add_argument("--percentage", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1e-10)
    p.add_argument("--fim-clamp-min", type=float, default=1e-8)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--noise-std-clamp-max", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forget)

    p = sub.add_parser("efficacy", help="efficacy report for a checkpoint on a data subset")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--target-class", type=int, default=3)
    p.add_argument("--percentage", type=float, default=1.0)
    p.add_argument("--subset", choices=("forget", "remaining", "all"), default="forget")
    p.set_defaults(func=cmd_efficacy)

    p = sub.add_parser("attack", help="membership inference attack on a checkpoint")
    _add_data_args(p)
    p.add_argument("--model", required=True, help="checkpoint to probe")
    p.add_argument("--baseline", help="checkpoint used to train the attack (default: --model)")
    p.add_argument("--algorithm", default="pretrained", help="label recorded in the result")
    p.add_argument("--target-class", type=int, default=3)
    p.add_argument("--percentage", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("experiment", help="run the full experimental grid")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--dataset", choices=("mnist", "cifar10", "synthetic"))
    p.add_argument("--data-dir")
    p.add_argument("--target-class", type=int)
    p.add_argument("--percentages", help="comma-separated list, e.g. 0.01,0.1,1")
    p.add_argument("--seeds", help="comma-separated list, e.g. 0,1,2")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--fim-clamp-min", type=float)
    p.add_argument("--algorithms", help="comma-separated subset of retrain,amnesiac,fisher")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="tables and figures from result CSVs")
    p.add_argument("results", nargs="+", help="results.csv files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="emit plot data only")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; remap (2 is reserved for data errors)
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
