"""Figure construction.

Both figure types are deterministic for identical input: the checked-in style
sheet pins every rc parameter that matters, estimator colors are assigned by
sorted tag so legends are stable across runs, and saved files carry no
timestamps (SVG hashsalt is fixed; metadata dates are stripped).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from bpgplots.csvio import SchemaError, read_curves, read_grad_compare

STYLE = Path(__file__).parent / "style.mplstyle"
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _colors(tags: list[str]) -> dict[str, str]:
    return {tag: PALETTE[i % len(PALETTE)] for i, tag in enumerate(sorted(tags))}


def _save(fig, out_path: str | Path) -> None:
    out = Path(out_path)
    kind = out.suffix.lower().lstrip(".") or "svg"
    if kind not in ("svg", "png"):
        raise SchemaError(f"unsupported output format {kind!r}: use .svg or .png")
    fig.savefig(out, format=kind, metadata={"Date": None} if kind == "svg" else None)
    plt.close(fig)


def plot_grad_compare(csv_path: str | Path, out_path: str | Path) -> None:
    """Two panels vs sample size: MSE (left) and mean angular error (right)."""
    rows = read_grad_compare(csv_path)
    means: dict = {}
    errs: dict = {}
    for r in rows:
        key = (r["estimator"], int(r["M"]))
        if r["rep"] == "mean":
            means[key] = (float(r["mse"]), float(r["angular_error_deg"]))
        elif r["rep"] == "stderr":
            errs[key] = (float(r["mse"]), float(r["angular_error_deg"]))
    if not means:
        raise SchemaError(f"{csv_path}: no summary rows (rep = mean); re-run the harness")
    tags = sorted({t for t, _ in means})
    ms = sorted({m for _, m in means})
    colors = _colors(tags)
    with plt.style.context(STYLE):
        fig, (ax_mse, ax_ang) = plt.subplots(1, 2)
        for tag in tags:
            xs = [m for m in ms if (tag, m) in means]
            mse = np.array([means[(tag, m)][0] for m in xs])
            ang = np.array([means[(tag, m)][1] for m in xs])
            e_mse = np.array([errs.get((tag, m), (0.0, 0.0))[0] for m in xs])
            e_ang = np.array([errs.get((tag, m), (0.0, 0.0))[1] for m in xs])
            ax_mse.errorbar(xs, mse, yerr=e_mse, marker="o", color=colors[tag], label=tag)
            ax_ang.errorbar(xs, ang, yerr=e_ang, marker="o", color=colors[tag], label=tag)
        ax_mse.set_yscale("log")
        ax_ang.set_yscale("log")
        ax_mse.set_xlabel("sample paths M")
        ax_ang.set_xlabel("sample paths M")
        ax_mse.set_ylabel("MSE")
        ax_ang.set_ylabel("mean angular error (deg)")
        ax_mse.legend()
        _save(fig, out_path)


def plot_learning_curves(csv_path: str | Path, out_path: str | Path, logy: bool = False) -> None:
    """Mean metric per update with a +/- one-standard-error band per algorithm."""
    rows = read_curves(csv_path)
    metric = rows[0]["metric_name"]
    series: dict = {}
    for r in rows:
        series.setdefault(r["algo"], {}).setdefault(int(r["update"]), []).append(
            float(r["metric_value"])
        )
    colors = _colors(sorted(series))
    clamped = False
    with plt.style.context(STYLE):
        fig, ax = plt.subplots(1, 1, figsize=(5.2, 3.4))
        floor = None
        if logy:
            positives = [v for per in series.values() for vals in per.values() for v in vals if v > 0]
            floor = min(positives) * 0.5 if positives else 1e-12
        for algo, per_update in series.items():
            xs = np.array(sorted(per_update))
            vals = [np.asarray(per_update[u], dtype=float) for u in xs]
            mean = np.array([v.mean() for v in vals])
            stderr = np.array([v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0 for v in vals])
            lo, hi = mean - stderr, mean + stderr
            if logy:
                if np.any(mean <= 0) or np.any(lo <= 0):
                    clamped = True
                mean = np.maximum(mean, floor)
                lo = np.maximum(lo, floor)
                hi = np.maximum(hi, floor)
            ax.plot(xs, mean, color=colors[algo], label=algo)
            ax.fill_between(xs, lo, hi, color=colors[algo], alpha=0.2, linewidth=0)
        if logy:
            ax.set_yscale("log")
            if clamped:
                ax.annotate("nonpositive values clamped for log scale", xy=(0.02, 0.02),
                            xycoords="axes fraction", fontsize=7, color="#777777")
        ax.set_xlabel("policy update")
        ax.set_ylabel(metric)
        ax.legend()
        _save(fig, out_path)
