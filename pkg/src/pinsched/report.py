"""Figures from a results table written by ``pinsched``.

Kept apart from the simulation command so runs never need a plotting
backend; install the ``report`` extra to use it.
"""
from __future__ import annotations

import argparse
import math
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .cli import POLICY_ORDER, read_rows  # noqa: E402

METRICS = (
    ("mean_normalized_performance", "mean normalized performance"),
    ("total_core_hours", "core-hours"),
)


def aggregate(rows: list[dict], metric: str) -> dict[str, dict[float, float]]:
    """Seed-averaged ``metric`` per policy and subscription ratio."""
    acc: dict[str, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row.get(metric) is not None:
            acc[row["policy"]][row["sr"]].append(row[metric])
    return {p: {sr: math.fsum(v) / len(v) for sr, v in sorted(by_sr.items())}
            for p, by_sr in acc.items()}


def _policies(rows) -> list[str]:
    seen = {r["policy"] for r in rows}
    return [p.value for p in POLICY_ORDER if p.value in seen]


def plot_metric(rows: list[dict], metric: str, label: str, path: Path) -> Path:
    means = aggregate(rows, metric)
    policies = _policies(rows)
    srs = sorted({sr for p in means.values() for sr in p})
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / max(len(policies), 1)
    for k, policy in enumerate(policies):
        xs = [i + (k - (len(policies) - 1) / 2) * width for i in range(len(srs))]
        ys = [means[policy].get(sr, float("nan")) for sr in srs]
        ax.bar(xs, ys, width, label=policy)
    ax.set_xticks(range(len(srs)))
    ax.set_xticklabels([f"{sr:g}" for sr in srs])
    ax.set_xlabel("subscription ratio")
    ax.set_ylabel(label)
    scenario = rows[0]["scenario"] if rows else ""
    ax.set_title(f"{scenario}: {label}")
    top = max((y for p in means.values() for y in p.values()), default=1.0)
    ax.set_ylim(0, top * 1.2)  # headroom for the legend
    ax.legend(fontsize="small", ncol=len(policies), loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(results_path, out_dir=None) -> list[Path]:
    results_path = Path(results_path)
    rows = read_rows(results_path)
    if not rows:
        raise ValueError(f"{results_path} contains no rows")
    out_dir = Path(out_dir) if out_dir is not None else results_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    return [plot_metric(rows, metric, label, out_dir / f"{metric}.png")
            for metric, label in METRICS]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="pinsched-report",
                                description="Plot a pinsched results table.")
    p.add_argument("results", help="results.csv or results.json")
    p.add_argument("--out", help="figure directory (default: next to the results)")
    args = p.parse_args(argv)
    try:
        paths = render_report(args.results, args.out)
    except (OSError, ValueError, KeyError) as exc:
        print(f"pinsched-report: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
