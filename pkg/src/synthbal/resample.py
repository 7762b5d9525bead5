"""Baseline rebalancers: SMOTE, random over-sampling, random under-sampling.

All strategies are pure functions of (dataset, plan). Over-samplers append
synthetic or duplicated rows after the untouched originals; the under-sampler
returns a sub-multiset of the original rows. Targets are per-class desired
counts; when omitted, over-samplers raise every non-majority class to the
majority count ("not majority") and the under-sampler reduces every class to
the minority count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from synthbal.dataset import TabularDataset, imbalance_ratios

STRATEGIES = ("smote", "ros", "rus", "ctgan")


class ResampleError(ValueError):
    pass


@dataclass(frozen=True)
class ResamplePlan:
    strategy: str
    targets: dict[str, int] | None = None
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ResampleError(
                f"unknown strategy '{self.strategy}', expected one of {STRATEGIES}"
            )
        if self.k_neighbors < 1:
            raise ResampleError(f"k_neighbors must be >= 1, got {self.k_neighbors}")


def not_majority_targets(ds: TabularDataset) -> dict[str, int]:
    """Raise every non-majority class to the majority count."""
    dist = imbalance_ratios(ds)
    majority_count = dist.counts[dist.majority_class]
    return {c: majority_count for c in ds.classes}


def min_count_targets(ds: TabularDataset) -> dict[str, int]:
    """Reduce every class to the smallest class count."""
    dist = imbalance_ratios(ds)
    floor = min(dist.counts.values())
    return {c: floor for c in ds.classes}


def _interpolate(xi: np.ndarray, x_nn: np.ndarray, lam: float) -> np.ndarray:
    return xi + lam * (x_nn - xi)


def _knn_within_class(rows: np.ndarray, k: int) -> np.ndarray:
    """Indices of each row's k nearest same-class neighbors (Euclidean, self excluded)."""
    d2 = ((rows[:, None, :] - rows[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _resolve_over_targets(ds: TabularDataset, plan: ResamplePlan) -> dict[str, int]:
    counts = imbalance_ratios(ds).counts
    targets = plan.targets if plan.targets is not None else not_majority_targets(ds)
    for cls, target in targets.items():
        if cls not in counts:
            raise ResampleError(f"unknown class '{cls}' in targets")
        if target < counts[cls]:
            raise ResampleError(
                f"target {target} for class '{cls}' is below its current count "
                f"{counts[cls]}; over-samplers only add rows"
            )
    return targets


def smote(ds: TabularDataset, plan: ResamplePlan) -> TabularDataset:
    """Append interpolated minority rows until each class meets its target.

    Each synthetic row is x_i + lam * (x_nn - x_i) with lam uniform in [0, 1]
    and x_nn one of x_i's k nearest same-class neighbors under Euclidean
    distance on the raw feature scale.
    """
    targets = _resolve_over_targets(ds, plan)
    counts = imbalance_ratios(ds).counts
    rng = np.random.default_rng(plan.seed)
    new_rows = []
    new_labels = []
    for cls in ds.classes:
        n_new = targets.get(cls, counts[cls]) - counts[cls]
        if n_new == 0:
            continue
        rows = ds.class_rows(cls)
        n_c = len(rows)
        if n_c < 2:
            raise ResampleError(
                f"class '{cls}' has {n_c} sample(s); SMOTE needs at least 2"
            )
        k = plan.k_neighbors
        if k >= n_c:
            k = n_c - 1
            warnings.warn(
                f"k_neighbors reduced to {k} for class '{cls}' (class size {n_c})",
                stacklevel=2,
            )
        nn_idx = _knn_within_class(rows, k)
        src = rng.integers(0, n_c, size=n_new)
        pick = rng.integers(0, k, size=n_new)
        lam = rng.random(n_new)
        neighbors = rows[nn_idx[src, pick]]
        new_rows.append(_interpolate(rows[src], neighbors, lam[:, None]))
        new_labels += [cls] * n_new
    if not new_rows:
        return ds
    return TabularDataset(
        ds.feature_names,
        np.vstack([ds.rows, *new_rows]),
        np.concatenate([ds.labels, np.asarray(new_labels)]),
    )


def ros(ds: TabularDataset, plan: ResamplePlan) -> TabularDataset:
    """Append uniform-with-replacement copies of existing same-class rows."""
    targets = _resolve_over_targets(ds, plan)
    counts = imbalance_ratios(ds).counts
    rng = np.random.default_rng(plan.seed)
    new_rows = []
    new_labels = []
    for cls in ds.classes:
        n_new = targets.get(cls, counts[cls]) - counts[cls]
        if n_new == 0:
            continue
        rows = ds.class_rows(cls)
        if len(rows) == 0:
            raise ResampleError(f"class '{cls}' is empty")
        picks = rng.integers(0, len(rows), size=n_new)
        new_rows.append(rows[picks])
        new_labels += [cls] * n_new
    if not new_rows:
        return ds
    return TabularDataset(
        ds.feature_names,
        np.vstack([ds.rows, *new_rows]),
        np.concatenate([ds.labels, np.asarray(new_labels)]),
    )


def rus(ds: TabularDataset, plan: ResamplePlan) -> TabularDataset:
    """Down-sample each class without replacement to its target count.

    Defaults to the minority count for every class; the result is a
    sub-multiset of the original rows, in original row order.
    """
    counts = imbalance_ratios(ds).counts
    targets = plan.targets if plan.targets is not None else min_count_targets(ds)
    rng = np.random.default_rng(plan.seed)
    keep = []
    for cls in ds.classes:
        target = targets.get(cls, counts[cls])
        if cls not in counts:
            raise ResampleError(f"unknown class '{cls}' in targets")
        if target > counts[cls]:
            raise ResampleError(
                f"target {target} for class '{cls}' exceeds its count {counts[cls]}"
            )
        idx = ds.class_index[cls]
        chosen = rng.choice(len(idx), size=target, replace=False)
        keep.append(idx[chosen])
    order = np.sort(np.concatenate(keep))
    return ds.subset(order)


def apply_plan(ds: TabularDataset, plan: ResamplePlan) -> TabularDataset:
    """Dispatch smote/ros/rus; the ctgan strategy is driven by the harness."""
    if plan.strategy == "smote":
        return smote(ds, plan)
    if plan.strategy == "ros":
        return ros(ds, plan)
    if plan.strategy == "rus":
        return rus(ds, plan)
    raise ResampleError(
        f"strategy '{plan.strategy}' is not handled by the resample layer"
    )
