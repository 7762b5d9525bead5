"""Classification metrics and synthetic-data fidelity diagnostics.

Per-class metrics are one-vs-rest: sensitivity TP/(TP+FN), specificity
TN/(TN+FP), G-mean sqrt(sensitivity * specificity), precision and F1. "Total"
sensitivity is the micro average (trace over total, i.e. overall accuracy);
macro averages are emitted alongside. Division-by-zero cases report the
metric as 0 and flag it as degenerate rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from synthbal.dataset import TabularDataset


class EvaluateError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    matrix: np.ndarray  # rows = true class, columns = predicted class
    classes: tuple[str, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(self.classes):
            raise EvaluateError(f"matrix shape {m.shape} does not match class count")
        if (m < 0).any():
            raise EvaluateError("confusion counts must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def row_normalized(self) -> np.ndarray:
        sums = self.matrix.sum(axis=1, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore"):
            out = np.where(sums > 0, self.matrix / sums, 0.0)
        return out


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fn: int
    fp: int
    tn: int
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    g_mean: float
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    classes: tuple[str, ...]
    per_class: dict[str, ClassMetrics]
    micro_sensitivity: float
    macro_sensitivity: float
    macro_specificity: float
    macro_g_mean: float
    macro_f1: float


def confusion(
    true_labels: np.ndarray, predicted_labels: np.ndarray, class_order: tuple[str, ...]
) -> ConfusionMatrix:
    """Entry (i, j) counts samples of true class i predicted as class j."""
    true_labels = np.asarray(true_labels, dtype=str)
    predicted_labels = np.asarray(predicted_labels, dtype=str)
    if len(true_labels) != len(predicted_labels):
        raise EvaluateError(
            f"length mismatch: {len(true_labels)} true vs {len(predicted_labels)} predicted"
        )
    index = {c: i for i, c in enumerate(class_order)}
    m = np.zeros((len(class_order), len(class_order)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index:
            raise EvaluateError(f"unknown true label '{t}'")
        if p not in index:
            raise EvaluateError(f"unknown predicted label '{p}'")
        m[index[t], index[p]] += 1
    return ConfusionMatrix(matrix=m, classes=tuple(class_order))


def _safe_div(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def class_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise EvaluateError("empty confusion matrix")
    per_class: dict[str, ClassMetrics] = {}
    total = cm.total
    for i, cls in enumerate(cm.classes):
        tp = int(cm.matrix[i, i])
        fn = int(cm.matrix[i].sum() - tp)
        fp = int(cm.matrix[:, i].sum() - tp)
        tn = total - tp - fn - fp
        flags: list[str] = []
        sensitivity = _safe_div(tp, tp + fn, "sensitivity", flags)
        specificity = _safe_div(tn, tn + fp, "specificity", flags)
        precision = _safe_div(tp, tp + fp, "precision", flags)
        f1 = _safe_div(
            2 * precision * sensitivity, precision + sensitivity, "f1", flags
        )
        per_class[cls] = ClassMetrics(
            tp=tp,
            fn=fn,
            fp=fp,
            tn=tn,
            sensitivity=sensitivity,
            specificity=specificity,
            precision=precision,
            f1=f1,
            g_mean=math.sqrt(sensitivity * specificity),
            degenerate=tuple(flags),
        )
    values = list(per_class.values())
    return MetricsReport(
        classes=cm.classes,
        per_class=per_class,
        micro_sensitivity=float(np.trace(cm.matrix)) / total,
        macro_sensitivity=float(np.mean([m.sensitivity for m in values])),
        macro_specificity=float(np.mean([m.specificity for m in values])),
        macro_g_mean=float(np.mean([m.g_mean for m in values])),
        macro_f1=float(np.mean([m.f1 for m in values])),
    )


# ---------------------------------------------------------------------------
# Fidelity diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureFidelity:
    name: str
    real_mean: float
    synth_mean: float
    real_std: float
    synth_std: float
    bin_edges: np.ndarray
    real_freq: np.ndarray
    synth_freq: np.ndarray
    range_extension: float


@dataclass(frozen=True)
class FidelityReport:
    mean_correlation: float | None
    std_correlation: float | None
    per_feature: tuple[FeatureFidelity, ...]
    degenerate_features: tuple[str, ...]

    @property
    def degenerate(self) -> bool:
        return self.mean_correlation is None


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Textbook two-pass Pearson correlation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float((da * da).sum()) * float((db * db).sum()))
    if denom == 0.0:
        raise EvaluateError("correlation undefined for a constant vector")
    return float((da * db).sum()) / denom


def fidelity(real: TabularDataset, synth: TabularDataset, bins: int = 30) -> FidelityReport:
    """Compare per-feature statistics of synthetic rows against real rows.

    Produces the Pearson correlation across features between the two mean
    vectors and the two std vectors, per-feature histograms over bins
    spanning the union of both ranges, and the fraction of synthetic values
    falling outside the real [min, max] per feature.
    """
    if real.feature_names != synth.feature_names:
        raise EvaluateError("feature schemas differ")
    if real.n_rows == 0 or synth.n_rows == 0:
        raise EvaluateError("both datasets must be non-empty")
    per_feature = []
    degenerate = []
    usable = []
    for j, name in enumerate(real.feature_names):
        rv = real.rows[:, j]
        sv = synth.rows[:, j]
        lo = min(rv.min(), sv.min())
        hi = max(rv.max(), sv.max())
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        real_freq = np.histogram(rv, bins=edges)[0] / len(rv)
        synth_freq = np.histogram(sv, bins=edges)[0] / len(sv)
        outside = (sv < rv.min()) | (sv > rv.max())
        feat = FeatureFidelity(
            name=name,
            real_mean=float(rv.mean()),
            synth_mean=float(sv.mean()),
            real_std=float(rv.std()),
            synth_std=float(sv.std()),
            bin_edges=edges,
            real_freq=real_freq,
            synth_freq=synth_freq,
            range_extension=float(outside.mean()),
        )
        per_feature.append(feat)
        if feat.real_std == 0.0 and feat.synth_std == 0.0:
            degenerate.append(name)
        else:
            usable.append(feat)
    if len(usable) >= 2:
        try:
            mean_corr = pearson(
                [f.real_mean for f in usable], [f.synth_mean for f in usable]
            )
            std_corr = pearson(
                [f.real_std for f in usable], [f.synth_std for f in usable]
            )
        except EvaluateError:
            mean_corr = std_corr = None
    else:
        mean_corr = std_corr = None
    return FidelityReport(
        mean_correlation=mean_corr,
        std_correlation=std_corr,
        per_feature=tuple(per_feature),
        degenerate_features=tuple(degenerate),
    )
