"""synthbal: rebalance imbalanced tabular datasets with synthetic samples.

A conditional tabular GAN (with per-feature Gaussian-mixture mode-specific
normalization), SMOTE/ROS/RUS baselines, from-scratch KNN / random-forest /
gradient-boosted classifiers, imbalance-aware metrics, and an experiment
harness that benchmarks the lot.
"""

from synthbal.dataset import (
    ClassDistribution,
    DatasetError,
    SplitSpec,
    TabularDataset,
    imbalance_ratios,
    kfold_indices,
    load_csv,
    save_csv,
    stratified_split,
)

__all__ = [
    "ClassDistribution",
    "DatasetError",
    "SplitSpec",
    "TabularDataset",
    "imbalance_ratios",
    "kfold_indices",
    "load_csv",
    "save_csv",
    "stratified_split",
]

__version__ = "0.1.0"
