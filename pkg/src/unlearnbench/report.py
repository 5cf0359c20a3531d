"""Result aggregation: accuracy tables, plot-data CSVs, rendered figures.

Reads one or more result CSVs produced by the harness and writes, next to
each other in the output directory, the mean/std accuracy table, the
efficacy/bound distribution data, the attack-probability distribution
data, an efficacy-vs-attack scatter file, and PNG figures of each. Columns
feeding log-scaled figure axes are also emitted pre-log-transformed.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

ALGORITHM_ORDER = ("initial", "pretrained", "retrain", "amnesiac", "fisher")
_ACC_COLS = ("acc_dr", "acc_df", "acc_test")


def load_results(paths: Sequence[str | Path]) -> pd.DataFrame:
    frames = [pd.read_csv(p) for p in paths]
    df = pd.concat(frames, ignore_index=True)
    errors = df["error"].fillna("").astype(str) != ""
    if errors.any():
        bad = df[errors]
        print(f"warning: skipping {len(bad)} row(s) with error markers")
        df = df[~errors]
    return df.reset_index(drop=True)


def _log10_or_nan(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    out = np.full(arr.shape, np.nan)
    ok = np.isfinite(arr) & (arr > 0)
    out[ok] = np.log10(arr[ok])
    return out


def missing_cells(df: pd.DataFrame) -> list[tuple]:
    """(algorithm, p) combinations lacking rows; reported, never fatal."""
    missing = []
    algorithms = [a for a in ALGORITHM_ORDER if a in set(df["algorithm"])]
    for alg in algorithms:
        for p in sorted(df["p"].unique()):
            if df[(df["algorithm"] == alg) & (df["p"] == p)].empty:
                missing.append((alg, p))
    return missing


def write_accuracy_table(df: pd.DataFrame, out_dir: Path) -> Path:
    """Mean and std of the three accuracies per algorithm and percentage."""
    grouped = df.groupby(["algorithm", "p"], sort=True)
    table = grouped[list(_ACC_COLS)].agg(["mean", "std"]).fillna(0.0)
    table.columns = [f"{col}_{stat}" for col, stat in table.columns]
    table = table.reset_index()
    order = {a: i for i, a in enumerate(ALGORITHM_ORDER)}
    table = table.sort_values(
        by=["algorithm", "p"], key=lambda c: c.map(order) if c.name == "algorithm" else c
    )
    path = out_dir / "accuracy_table.csv"
    table.to_csv(path, index=False, float_format="%.6g")
    return path


def write_efficacy_distributions(df: pd.DataFrame, out_dir: Path) -> Path:
    cols = df[["dataset", "algorithm", "p", "seed", "efficacy", "upper_bound"]].copy()
    cols["log10_efficacy"] = _log10_or_nan(df["efficacy"])
    cols["log10_upper_bound"] = _log10_or_nan(df["upper_bound"])
    path = out_dir / "efficacy_distributions.csv"
    cols.to_csv(path, index=False)
    return path


def write_mia_distributions(df: pd.DataFrame, out_dir: Path) -> Path:
    cols = df[["dataset", "algorithm", "p", "seed", "mia_mean_prob"]].copy()
    cols["log10_mia_mean_prob"] = _log10_or_nan(df["mia_mean_prob"])
    path = out_dir / "mia_distributions.csv"
    cols.to_csv(path, index=False)
    return path


def write_efficacy_vs_mia(df: pd.DataFrame, out_dir: Path) -> Path:
    cols = df[["dataset", "algorithm", "p", "seed", "efficacy", "mia_mean_prob"]].copy()
    cols["log10_efficacy"] = _log10_or_nan(df["efficacy"])
    cols["log10_mia_mean_prob"] = _log10_or_nan(df["mia_mean_prob"])
    path = out_dir / "efficacy_vs_mia.csv"
    cols.to_csv(path, index=False)
    return path


def _per_algorithm_axes(df: pd.DataFrame, title: str):
    algorithms = [a for a in ALGORITHM_ORDER[1:] if a in set(df["algorithm"])]
    fig, axes = plt.subplots(
        math.ceil(len(algorithms) / 2) or 1, 2, figsize=(10, 3.5 * max(1, math.ceil(len(algorithms) / 2)))
    )
    fig.suptitle(title)
    return fig, np.atleast_1d(axes).ravel(), algorithms


def _ecdf(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals = np.sort(values[np.isfinite(values) & (values > 0)])
    return vals, np.arange(1, len(vals) + 1) / max(len(vals), 1)


def plot_efficacy_distributions(df: pd.DataFrame, out_dir: Path) -> Path:
    """Per-algorithm empirical distributions of efficacy (solid) and its
    upper bound (dashed), one curve per percentage, log-scaled x axis."""
    fig, axes, algorithms = _per_algorithm_axes(df, "Efficacy and upper bound distributions")
    percentages = sorted(df["p"].unique())
    cmap = plt.get_cmap("viridis")
    for ax, alg in zip(axes, algorithms):
        sub = df[df["algorithm"] == alg]
        for i, p in enumerate(percentages):
            color = cmap(i / max(len(percentages) - 1, 1))
            cell = sub[sub["p"] == p]
            x, q = _ecdf(cell["efficacy"].to_numpy())
            if len(x):
                ax.plot(x, q, color=color, label=f"p={p:g}")
            x, q = _ecdf(cell["upper_bound"].to_numpy())
            if len(x):
                ax.plot(x, q, color=color, linestyle="--")
        ax.set_xscale("log")
        ax.set_title(alg)
        ax.set_xlabel("efficacy")
        ax.set_ylabel("empirical CDF")
        ax.legend(fontsize=7)
    for ax in axes[len(algorithms):]:
        ax.set_visible(False)
    fig.tight_layout()
    path = out_dir / "efficacy_distributions.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_efficacy_comparison(df: pd.DataFrame, out_dir: Path) -> Path:
    """Mean efficacy per algorithm across percentages, log y axis."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for alg in ALGORITHM_ORDER:
        sub = df[df["algorithm"] == alg]
        if sub.empty:
            continue
        stats = (
            sub.assign(log_eff=_log10_or_nan(sub["efficacy"]))
            .groupby("p")["log_eff"]
            .mean()
            .dropna()
        )
        ax.plot(stats.index, 10.0 ** stats.to_numpy(), marker="o", label=alg)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("forget percentage")
    ax.set_ylabel("geometric-mean efficacy")
    ax.set_title("Efficacy before training, after training, and after forgetting")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "efficacy_comparison.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_mia_distributions(df: pd.DataFrame, out_dir: Path) -> Path:
    fig, axes, algorithms = _per_algorithm_axes(df, "Membership attack mean probabilities")
    percentages = sorted(df["p"].unique())
    cmap = plt.get_cmap("viridis")
    for ax, alg in zip(axes, algorithms):
        sub = df[df["algorithm"] == alg]
        for i, p in enumerate(percentages):
            vals = sub[sub["p"] == p]["mia_mean_prob"].to_numpy()
            x, q = _ecdf(vals)
            if len(x):
                ax.plot(x, q, color=cmap(i / max(len(percentages) - 1, 1)), label=f"p={p:g}")
        ax.set_xscale("log")
        ax.set_title(alg)
        ax.set_xlabel("mean membership probability")
        ax.set_ylabel("empirical CDF")
        ax.legend(fontsize=7)
    for ax in axes[len(algorithms):]:
        ax.set_visible(False)
    fig.tight_layout()
    path = out_dir / "mia_distributions.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_efficacy_vs_mia(df: pd.DataFrame, out_dir: Path) -> Path:
    fig, axes, algorithms = _per_algorithm_axes(df, "Efficacy vs. membership attack probability")
    percentages = sorted(df["p"].unique())
    cmap = plt.get_cmap("viridis")
    for ax, alg in zip(axes, algorithms):
        sub = df[df["algorithm"] == alg]
        for i, p in enumerate(percentages):
            cell = sub[sub["p"] == p]
            ax.scatter(
                cell["efficacy"],
                cell["mia_mean_prob"],
                s=12,
                color=cmap(i / max(len(percentages) - 1, 1)),
                label=f"p={p:g}",
            )
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_title(alg)
        ax.set_xlabel("efficacy")
        ax.set_ylabel("mean membership probability")
        ax.legend(fontsize=7)
    for ax in axes[len(algorithms):]:
        ax.set_visible(False)
    fig.tight_layout()
    path = out_dir / "efficacy_vs_mia.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def generate_report(
    result_paths: Sequence[str | Path], out_dir: str | Path, render: bool = True
) -> dict[str, list[Path]]:
    """Write every table, plot-data file, and (optionally) figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    df = load_results(result_paths)
    missing = missing_cells(df)
    if missing:
        print(f"warning: no rows for {len(missing)} cell(s): {missing}")
    outputs = {
        "tables": [
            write_accuracy_table(df, out),
            write_efficacy_distributions(df, out),
            write_mia_distributions(df, out),
            write_efficacy_vs_mia(df, out),
        ],
        "figures": [],
    }
    if render:
        outputs["figures"] = [
            plot_efficacy_distributions(df, out),
            plot_efficacy_comparison(df, out),
            plot_mia_distributions(df, out),
            plot_efficacy_vs_mia(df, out),
        ]
    return outputs
