import numpy as np
import pytest

from synthbal.dataset import TabularDataset, imbalance_ratios
from synthbal.resample import (
    ResampleError,
    ResamplePlan,
    _interpolate,
    min_count_targets,
    not_majority_targets,
    ros,
    rus,
    smote,
)


def make_ds(counts, n_features=3, seed=0, spread=1.0):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for i, (name, n) in enumerate(counts.items()):
        center = np.full(n_features, 5.0 * i)
        rows.append(rng.normal(center, spread, size=(n, n_features)))
        labels += [name] * n
    return TabularDataset(
        tuple(f"f{i}" for i in range(n_features)), np.vstack(rows), np.asarray(labels)
    )


# Brute-force helpers used as oracles.
def brute_knn(rows, i, k):
    d = np.sqrt(((rows - rows[i]) ** 2).sum(axis=1))
    d[i] = np.inf
    return np.argsort(d, kind="stable")[:k]


def point_segment_distance(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


class TestInterpolate:
    def test_midpoint(self):
        out = _interpolate(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 0.5)
        np.testing.assert_array_equal(out, [0.5, 0.5])

    def test_lambda_zero_returns_source_exactly(self):
        xi = np.array([1.25, -3.5])
        out = _interpolate(xi, np.array([9.0, 9.0]), 0.0)
        np.testing.assert_array_equal(out, xi)

    def test_lambda_one_returns_neighbor(self):
        nn = np.array([2.0, 4.0])
        np.testing.assert_array_equal(_interpolate(np.zeros(2), nn, 1.0), nn)


class TestSmote:
    def test_segment_membership_oracle_1000_points(self):
        ds = make_ds({"maj": 300, "min": 60}, n_features=5, seed=3)
        plan = ResamplePlan("smote", targets={"min": 1060}, k_neighbors=5, seed=7)
        out = smote(ds, plan)
        assert imbalance_ratios(out).counts == {"maj": 300, "min": 1060}
        # Originals untouched and in place.
        np.testing.assert_array_equal(out.rows[: ds.n_rows], ds.rows)
        synth = out.rows[ds.n_rows :]
        assert len(synth) == 1000
        minority = ds.class_rows("min")
        segments = []
        for i in range(len(minority)):
            for j in brute_knn(minority, i, 5):
                segments.append((minority[i], minority[j]))
        for p in synth:
            best = min(point_segment_distance(p, a, b) for a, b in segments)
            assert best <= 1e-9

    def test_default_targets_not_majority(self):
        ds = make_ds({"a": 50, "b": 20, "c": 10}, seed=1)
        out = smote(ds, ResamplePlan("smote", seed=2))
        assert imbalance_ratios(out).counts == {"a": 50, "b": 50, "c": 50}

    def test_contains_all_original_minority_rows(self):
        ds = make_ds({"maj": 40, "min": 8}, seed=5)
        out = smote(ds, ResamplePlan("smote", seed=5))
        orig = {tuple(r) for r in ds.class_rows("min")}
        got = {tuple(r) for r in out.class_rows("min")}
        assert orig <= got

    def test_single_sample_class_rejected(self):
        ds = make_ds({"maj": 10, "solo": 1}, seed=0)
        with pytest.raises(ResampleError, match="at least 2"):
            smote(ds, ResamplePlan("smote", targets={"solo": 5}))

    def test_k_reduced_with_warning(self):
        ds = make_ds({"maj": 30, "min": 3}, seed=0)
        with pytest.warns(UserWarning, match="k_neighbors reduced"):
            out = smote(ds, ResamplePlan("smote", targets={"min": 10}, k_neighbors=5))
        assert imbalance_ratios(out).counts["min"] == 10

    def test_target_below_count_rejected(self):
        ds = make_ds({"a": 10, "b": 5}, seed=0)
        with pytest.raises(ResampleError, match="below"):
            smote(ds, ResamplePlan("smote", targets={"a": 3}))


class TestRos:
    def test_forced_duplication_single_row(self):
        ds = TabularDataset(("x",), np.array([[1.5], [9.0]]), np.array(["a", "b"]))
        out = ros(ds, ResamplePlan("ros", targets={"a": 3}, seed=0))
        a_rows = out.class_rows("a")
        assert len(a_rows) == 3
        np.testing.assert_array_equal(a_rows, [[1.5]] * 3)

    def test_appended_rows_are_exact_copies(self):
        ds = make_ds({"maj": 50, "min": 7}, seed=9)
        out = ros(ds, ResamplePlan("ros", seed=9))
        originals = {tuple(r) for r in ds.class_rows("min")}
        for row in out.rows[ds.n_rows :]:
            assert tuple(row) in originals

    def test_counts_match_targets_counting_oracle(self):
        rng = np.random.default_rng(31)
        for trial in range(10):
            counts = {"a": int(rng.integers(20, 60)), "b": int(rng.integers(2, 15))}
            ds = make_ds(counts, seed=trial)
            targets = {
                "a": counts["a"] + int(rng.integers(0, 20)),
                "b": counts["b"] + int(rng.integers(0, 30)),
            }
            out = ros(ds, ResamplePlan("ros", targets=targets, seed=trial))
            got = {c: int(np.sum(out.labels == c)) for c in ("a", "b")}
            assert got == targets


class TestRus:
    def test_min_count_rule(self):
        ds = make_ds({"A": 100, "B": 10}, seed=0)
        out = rus(ds, ResamplePlan("rus", seed=0))
        assert imbalance_ratios(out).counts == {"A": 10, "B": 10}

    def test_result_is_subset(self):
        ds = make_ds({"A": 40, "B": 12}, seed=1)
        out = rus(ds, ResamplePlan("rus", seed=1))
        orig = {tuple(r) for r in ds.rows}
        assert all(tuple(r) in orig for r in out.rows)

    def test_twenty_seeds_same_counts_different_subsets(self):
        ds = make_ds({"A": 80, "B": 15}, seed=2)
        seen = set()
        for seed in range(20):
            out = rus(ds, ResamplePlan("rus", seed=seed))
            assert imbalance_ratios(out).counts == {"A": 15, "B": 15}
            seen.add(tuple(sorted(map(tuple, out.rows))))
        assert len(seen) > 1

    def test_target_exceeding_count_rejected(self):
        ds = make_ds({"A": 10, "B": 5}, seed=0)
        with pytest.raises(ResampleError, match="exceeds"):
            rus(ds, ResamplePlan("rus", targets={"B": 9}))


class TestPlanValidation:
    def test_unknown_strategy(self):
        with pytest.raises(ResampleError, match="unknown strategy"):
            ResamplePlan("bogus")

    def test_bad_k(self):
        with pytest.raises(ResampleError, match="k_neighbors"):
            ResamplePlan("smote", k_neighbors=0)

    def test_target_helpers(self):
        ds = make_ds({"a": 30, "b": 12, "c": 5}, seed=0)
        assert not_majority_targets(ds) == {"a": 30, "b": 30, "c": 30}
        assert min_count_targets(ds) == {"a": 5, "b": 5, "c": 5}


def test_post_resample_ratios_meet_plan_exactly():
    ds = make_ds({"a": 60, "b": 9, "c": 21}, seed=4)
    targets = {"a": 60, "b": 60, "c": 60}
    for fn in (smote, ros):
        out = fn(ds, ResamplePlan("smote" if fn is smote else "ros", targets=targets, seed=3))
        ratios = imbalance_ratios(out).imbalance_ratios
        assert all(r == 1.0 for r in ratios.values())


def test_duplicate_input_rows_are_legal():
    rows = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 4.0], [9.0, 9.0], [8.0, 8.0]])
    labels = np.array(["m", "m", "m", "M", "M"])
    ds = TabularDataset(("x", "y"), rows, labels)
    out = smote(ds, ResamplePlan("smote", targets={"m": 6}, k_neighbors=2, seed=0))
    assert imbalance_ratios(out).counts["m"] == 6
