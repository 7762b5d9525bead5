"""Report emission: delimited data files plus rendered matplotlib figures.

Every report path writes plot-ready CSV/JSON first and then renders a figure
next to it. Data files use repr() float formatting so repeated runs with the
same seeds produce byte-identical output.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from synthbal.evaluate import ConfusionMatrix, FidelityReport, MetricsReport


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Classification reports
# ---------------------------------------------------------------------------

def write_metrics_csv(report: MetricsReport, path: Path) -> None:
    header = [
        "class", "tp", "fn", "fp", "tn",
        "sensitivity", "specificity", "precision", "f1", "g_mean", "degenerate",
    ]
    rows = []
    for cls in report.classes:
        m = report.per_class[cls]
        rows.append([
            cls, m.tp, m.fn, m.fp, m.tn,
            m.sensitivity, m.specificity, m.precision, m.f1, m.g_mean,
            ";".join(m.degenerate),
        ])
    rows.append([
        "__micro__", "", "", "", "",
        report.micro_sensitivity, "", "", "", "", "",
    ])
    rows.append([
        "__macro__", "", "", "", "",
        report.macro_sensitivity, report.macro_specificity, "",
        report.macro_f1, report.macro_g_mean, "",
    ])
    write_csv(path, header, rows)


def write_confusion_csvs(cm: ConfusionMatrix, raw_path: Path, norm_path: Path) -> None:
    header = ["true\\predicted"] + list(cm.classes)
    raw_rows = [[cls] + [int(v) for v in cm.matrix[i]] for i, cls in enumerate(cm.classes)]
    write_csv(raw_path, header, raw_rows)
    norm = cm.row_normalized()
    norm_rows = [[cls] + [float(v) for v in norm[i]] for i, cls in enumerate(cm.classes)]
    write_csv(norm_path, header, norm_rows)


def fig_confusion(cm: ConfusionMatrix, path: Path, title: str = "") -> None:
    norm = cm.row_normalized()
    n = len(cm.classes)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * n, 0.8 + 0.8 * n))
    im = ax.imshow(norm, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n), cm.classes, rotation=45, ha="right")
    ax.set_yticks(range(n), cm.classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(n):
        for j in range(n):
            ax.text(
                j, i, f"{norm[i, j]:.2f}",
                ha="center", va="center", fontsize=8,
                color="white" if norm[i, j] > 0.5 else "black",
            )
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_sensitivity_table(
    rows: list[dict], minority_classes: list[str], path: Path
) -> None:
    """Grouped bars: per-resampler minority sensitivities and the micro total."""
    resamplers = [r["resampler"] for r in rows]
    series = {c: [r[f"sensitivity_{c}"] for r in rows] for c in minority_classes}
    series["total"] = [r["micro_sensitivity"] for r in rows]
    x = np.arange(len(resamplers))
    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(resamplers), 4))
    for i, (label, vals) in enumerate(series.items()):
        ax.bar(x + i * width, vals, width, label=label)
    ax.set_xticks(x + 0.4 - width / 2, resamplers, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("sensitivity")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_gmean_table(classes: list[str], columns: dict[str, list[float]], path: Path) -> None:
    x = np.arange(len(classes))
    width = 0.8 / max(1, len(columns))
    fig, ax = plt.subplots(figsize=(1.5 + 0.9 * len(classes), 4))
    for i, (label, vals) in enumerate(columns.items()):
        ax.bar(x + i * width, vals, width, label=label)
    ax.set_xticks(x + 0.4 - width / 2, classes, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("G-mean")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Fidelity reports
# ---------------------------------------------------------------------------

def write_fidelity_report(report: FidelityReport, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "mean_correlation": report.mean_correlation,
        "std_correlation": report.std_correlation,
        "degenerate_features": list(report.degenerate_features),
        "per_feature": [
            {
                "name": f.name,
                "real_mean": f.real_mean,
                "synth_mean": f.synth_mean,
                "real_std": f.real_std,
                "synth_std": f.synth_std,
                "range_extension": f.range_extension,
            }
            for f in report.per_feature
        ],
    }
    (out_dir / f"{stem}.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    hist_dir = out_dir / f"{stem}_histograms"
    hist_dir.mkdir(exist_ok=True)
    for f in report.per_feature:
        rows = [
            [float(lo), float(hi), float(rf), float(sf)]
            for lo, hi, rf, sf in zip(
                f.bin_edges[:-1], f.bin_edges[1:], f.real_freq, f.synth_freq
            )
        ]
        write_csv(
            hist_dir / f"{f.name}.csv",
            ["bin_lo", "bin_hi", "real_freq", "synth_freq"],
            rows,
        )


def fig_fidelity_correlation(report: FidelityReport, path: Path) -> None:
    """Scatter of real vs synthetic per-feature means and stds with the y=x line."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, which in zip(axes, ("mean", "std")):
        rx = [getattr(f, f"real_{which}") for f in report.per_feature]
        sy = [getattr(f, f"synth_{which}") for f in report.per_feature]
        ax.scatter(rx, sy, s=18)
        lo = min(min(rx), min(sy))
        hi = max(max(rx), max(sy))
        pad = 0.05 * (hi - lo if hi > lo else 1.0)
        ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "k--", linewidth=1)
        r = report.mean_correlation if which == "mean" else report.std_correlation
        ax.set_title(f"per-feature {which}s (r={r:.3f})" if r is not None else which)
        ax.set_xlabel("real")
        ax.set_ylabel("synthetic")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_fidelity_histograms(report: FidelityReport, path: Path, max_features: int = 6) -> None:
    feats = report.per_feature[:max_features]
    n = len(feats)
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 2.8 * rows), squeeze=False)
    for ax, f in zip(axes.ravel(), feats):
        centers = (f.bin_edges[:-1] + f.bin_edges[1:]) / 2
        width = (f.bin_edges[1] - f.bin_edges[0]) * 0.9
        ax.bar(centers, f.real_freq, width=width, alpha=0.6, label="real")
        ax.bar(centers, f.synth_freq, width=width, alpha=0.6, label="synthetic")
        ax.set_title(f.name, fontsize=9)
        ax.legend(fontsize=7)
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Sweeps and loss curves
# ---------------------------------------------------------------------------

def write_sweep_csv(rows: list[dict], minority_classes: list[str], path: Path) -> None:
    header = ["synthetic_count"] + [f"f1_{c}" for c in minority_classes] + ["macro_f1"]
    out = [
        [r["synthetic_count"]] + [r[f"f1_{c}"] for c in minority_classes] + [r["macro_f1"]]
        for r in rows
    ]
    write_csv(path, header, out)


def fig_sweep(rows: list[dict], minority_classes: list[str], path: Path) -> None:
    counts = [r["synthetic_count"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in minority_classes:
        ax.plot(counts, [r[f"f1_{c}"] for r in rows], marker="o", label=f"F1 {c}")
    ax.plot(counts, [r["macro_f1"] for r in rows], marker="s", label="macro F1")
    ax.set_xlabel("synthetic samples per minority class")
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_loss_curves(training_log: list[tuple[int, float, float]], path: Path) -> None:
    epochs = [e for e, _, _ in training_log]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [ld for _, ld, _ in training_log], label="discriminator")
    ax.plot(epochs, [lg for _, _, lg in training_log], label="generator")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
