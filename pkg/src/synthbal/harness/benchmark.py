"""Synthetic benchmark datasets with controllable class imbalance.

Each class draws every feature from its own 1-D Gaussian mixture. The bundled
``crop7`` preset mimics a seven-class cropland table: per-feature scale
factors spread over roughly a decade, moderately separated class means, and
two 20-row minority classes against a 2000-row majority (imbalance ratio
0.01).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synthbal.dataset import TabularDataset


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class ClassSpec:
    name: str
    count: int
    # Per feature: tuple of (weight, mean, std) mixture components.
    feature_mixtures: tuple[tuple[tuple[float, float, float], ...], ...]

    def __post_init__(self):
        if self.count < 1:
            raise BenchmarkError(f"class '{self.name}' count must be >= 1")
        for j, comps in enumerate(self.feature_mixtures):
            w = sum(c[0] for c in comps)
            if abs(w - 1.0) > 1e-9:
                raise BenchmarkError(
                    f"class '{self.name}' feature {j}: weights sum to {w}"
                )
            if any(c[2] <= 0 for c in comps):
                raise BenchmarkError(
                    f"class '{self.name}' feature {j}: stds must be positive"
                )


@dataclass(frozen=True)
class BenchmarkSpec:
    classes: tuple[ClassSpec, ...]
    n_features: int
    seed: int = 0

    def __post_init__(self):
        for spec in self.classes:
            if len(spec.feature_mixtures) != self.n_features:
                raise BenchmarkError(
                    f"class '{spec.name}' has {len(spec.feature_mixtures)} feature "
                    f"mixtures, expected {self.n_features}"
                )


def make_benchmark(spec: BenchmarkSpec) -> TabularDataset:
    """Sample every class's rows from its per-feature mixtures; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    blocks = []
    labels = []
    for cls in spec.classes:
        block = np.empty((cls.count, spec.n_features))
        for j, comps in enumerate(cls.feature_mixtures):
            weights = np.array([c[0] for c in comps])
            means = np.array([c[1] for c in comps])
            stds = np.array([c[2] for c in comps])
            pick = rng.choice(len(comps), size=cls.count, p=weights)
            block[:, j] = rng.normal(means[pick], stds[pick])
        blocks.append(block)
        labels += [cls.name] * cls.count
    names = tuple(f"x{j:02d}" for j in range(spec.n_features))
    return TabularDataset(names, np.vstack(blocks), np.asarray(labels))


# Table-4-style count pattern: two 2000-row classes, two 20-row minorities.
CROP7_COUNTS = {
    "Corn": 2000,
    "Peas": 20,
    "Canola": 1800,
    "Soybeans": 1750,
    "Oats": 1100,
    "Wheat": 2000,
    "Broadleaf": 20,
}

CROP7_FEATURES = 20
# Geometry knobs: per-feature scales span about a decade so that per-feature
# statistics vary strongly across features; class mean offsets are moderate so
# that sparse classes lose nearest-neighbor votes to dense ones.
_SCALE_RANGE = (0.4, 3.0)
_MEAN_SPREAD = 1.2
_STD_RANGE = (0.7, 1.3)


def crop7_spec(seed: int = 0) -> BenchmarkSpec:
    rng = np.random.default_rng(seed)
    scales = np.exp(
        rng.uniform(np.log(_SCALE_RANGE[0]), np.log(_SCALE_RANGE[1]), CROP7_FEATURES)
    )
    classes = []
    for name, count in CROP7_COUNTS.items():
        offsets = rng.normal(0.0, _MEAN_SPREAD, CROP7_FEATURES)
        widths = rng.uniform(*_STD_RANGE, CROP7_FEATURES)
        mixtures = tuple(
            ((1.0, float(scales[j] * offsets[j]), float(scales[j] * widths[j])),)
            for j in range(CROP7_FEATURES)
        )
        classes.append(ClassSpec(name=name, count=count, feature_mixtures=mixtures))
    return BenchmarkSpec(classes=tuple(classes), n_features=CROP7_FEATURES, seed=seed)


def make_crop7(seed: int = 0) -> TabularDataset:
    return make_benchmark(crop7_spec(seed))
