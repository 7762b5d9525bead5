"""Random hyperparameter search scored by stratified k-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from synthbal.classify import predict_classifier, train_classifier
from synthbal.dataset import TabularDataset, stratified_kfold_indices
from synthbal.evaluate import class_metrics, confusion


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    """Per-hyperparameter sampling spec.

    A list value enumerates choices; a (lo, hi) tuple is an inclusive range,
    integer-valued when both ends are ints.
    """

    parameters: dict[str, list | tuple]
    n_candidates: int = 20
    k_folds: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise SearchError("n_candidates must be >= 1")
        if self.k_folds < 2:
            raise SearchError("k_folds must be >= 2")


@dataclass(frozen=True)
class SearchResult:
    best_config: dict
    best_score: float
    trials: tuple[tuple[dict, float], ...] = field(repr=False, default=())


def sample_config(space: SearchSpace, rng: np.random.Generator) -> dict:
    config = {}
    for name, spec in space.parameters.items():
        if isinstance(spec, tuple) and len(spec) == 2:
            lo, hi = spec
            if isinstance(lo, int) and isinstance(hi, int):
                config[name] = int(rng.integers(lo, hi + 1))
            else:
                config[name] = float(rng.uniform(lo, hi))
        elif isinstance(spec, (list,)):
            config[name] = spec[int(rng.integers(len(spec)))]
        else:
            raise SearchError(f"parameter '{name}': expected list or (lo, hi) tuple")
    return config


def cv_score(
    train: TabularDataset,
    classifier_kind: str,
    config: dict,
    folds: list[tuple[np.ndarray, np.ndarray]],
) -> float:
    """Mean validation micro-sensitivity over the given folds."""
    scores = []
    for train_idx, val_idx in folds:
        fit_ds = train.subset(train_idx)
        model = train_classifier(fit_ds, classifier_kind, config)
        preds = predict_classifier(model, train.rows[val_idx])
        cm = confusion(train.labels[val_idx], preds, train.classes)
        scores.append(class_metrics(cm).micro_sensitivity)
    return float(np.mean(scores))


def random_search(
    space: SearchSpace, train: TabularDataset, classifier_kind: str
) -> SearchResult:
    """Sample configs uniformly from the space, score each by k-fold CV,
    return the argmax (ties keep the first sampled)."""
    counts = {c: len(ix) for c, ix in train.class_index.items()}
    too_small = [c for c, n in counts.items() if n < space.k_folds]
    if too_small:
        raise SearchError(
            f"classes {too_small} have fewer than k_folds={space.k_folds} rows"
        )
    rng = np.random.default_rng(space.seed)
    # One shared fold assignment keeps candidate comparisons noise-free.
    folds = stratified_kfold_indices(train.labels, space.k_folds, space.seed)
    trials = []
    best = None
    for _ in range(space.n_candidates):
        config = sample_config(space, rng)
        score = cv_score(train, classifier_kind, config, folds)
        trials.append((config, score))
        if best is None or score > best[1]:
            best = (config, score)
    return SearchResult(best_config=best[0], best_score=best[1], trials=tuple(trials))
