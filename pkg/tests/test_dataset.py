import numpy as np
import pytest

from synthbal.dataset import (
    DatasetError,
    SplitSpec,
    TabularDataset,
    concat,
    imbalance_ratios,
    kfold_indices,
    load_csv,
    save_csv,
    stratified_kfold_indices,
    stratified_split,
)


def make_ds(counts: dict[str, int], n_features: int = 3, seed: int = 0) -> TabularDataset:
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for name, n in counts.items():
        rows.append(rng.normal(size=(n, n_features)))
        labels += [name] * n
    names = tuple(f"f{i}" for i in range(n_features))
    return TabularDataset(names, np.vstack(rows), np.asarray(labels))


class TestLoadCsv:
    def test_three_row_csv(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f1,f2,label\n1,2,A\n3,4,B\n5,6,A\n")
        ds = load_csv(p, "label")
        assert ds.n_rows == 3
        assert ds.n_features == 2
        assert ds.feature_names == ("f1", "f2")
        assert list(ds.labels) == ["A", "B", "A"]
        np.testing.assert_array_equal(ds.rows, [[1, 2], [3, 4], [5, 6]])

    def test_nan_cell_reports_row_and_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f1,f2,label\n1,2,A\n3,NaN,B\n")
        with pytest.raises(DatasetError, match=r"line 3.*'f2'"):
            load_csv(p, "label")

    def test_168_feature_csv(self, tmp_path):
        # Mirrors a fused two-sensor, two-date feature table: 2*(38+46) columns.
        names = [f"x{i}" for i in range(168)]
        p = tmp_path / "wide.csv"
        lines = [",".join(names + ["crop"])]
        for r in range(4):
            lines.append(",".join([str(r + i * 0.5) for i in range(168)] + ["Wheat"]))
        p.write_text("\n".join(lines) + "\n")
        ds = load_csv(p, "crop")
        assert ds.n_features == 168
        assert ds.n_rows == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="no such file"):
            load_csv(tmp_path / "nope.csv", "label")

    def test_duplicate_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,a,label\n1,2,A\n")
        with pytest.raises(DatasetError, match="duplicate"):
            load_csv(p, "label")

    def test_missing_label_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(DatasetError, match="no column named 'label'"):
            load_csv(p, "label")

    def test_empty_dataset(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,label\n")
        with pytest.raises(DatasetError, match="no data rows"):
            load_csv(p, "label")

    def test_unparseable_cell(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,label\nfoo,A\n")
        with pytest.raises(DatasetError, match=r"line 2, column 'a'"):
            load_csv(p, "label")

    def test_save_round_trip(self, tmp_path):
        ds = make_ds({"A": 5, "B": 3})
        p = tmp_path / "out.csv"
        save_csv(ds, p, label_column="crop")
        back = load_csv(p, "crop")
        np.testing.assert_array_equal(back.rows, ds.rows)
        assert list(back.labels) == list(ds.labels)
        assert back.feature_names == ds.feature_names


class TestInvariants:
    def test_rejects_nonfinite_rows(self):
        with pytest.raises(DatasetError, match="non-finite"):
            TabularDataset(("a",), np.array([[np.nan]]), np.array(["A"]))

    def test_rejects_duplicate_names(self):
        with pytest.raises(DatasetError, match="unique"):
            TabularDataset(("a", "a"), np.zeros((1, 2)), np.array(["A"]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(DatasetError, match="labels length"):
            TabularDataset(("a",), np.zeros((2, 1)), np.array(["A"]))

    def test_rows_are_read_only(self):
        ds = make_ds({"A": 2})
        with pytest.raises(ValueError):
            ds.rows[0, 0] = 99.0

    def test_counts_sum_to_n_rows(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            counts = {f"c{i}": int(rng.integers(1, 30)) for i in range(rng.integers(1, 6))}
            ds = make_ds(counts, seed=int(rng.integers(1 << 30)))
            dist = imbalance_ratios(ds)
            assert sum(dist.counts.values()) == ds.n_rows


class TestImbalanceRatios:
    def test_paper_shape(self):
        # Wheat majority; Peas and Broadleaf tiny.
        ds = make_ds({"Wheat": 1000, "Peas": 2, "Broadleaf": 2, "Canola": 889})
        dist = imbalance_ratios(ds)
        assert dist.majority_class == "Wheat"
        assert dist.imbalance_ratios["Wheat"] == 1.0
        assert dist.imbalance_ratios["Peas"] == 0.002
        assert dist.imbalance_ratios["Broadleaf"] == 0.002

    def test_single_class(self):
        ds = make_ds({"Only": 7})
        dist = imbalance_ratios(ds)
        assert dist.imbalance_ratios["Only"] == 1.0

    def test_direct_arithmetic(self):
        ds = make_ds({"A": 10, "B": 50})
        dist = imbalance_ratios(ds)
        assert dist.imbalance_ratios == {"A": 0.2, "B": 1.0}

    def test_tie_broken_lexicographically(self):
        ds = make_ds({"Zed": 5, "Abe": 5})
        assert imbalance_ratios(ds).majority_class == "Abe"

    def test_unique_majority_has_unique_unit_ratio(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            k = int(rng.integers(2, 6))
            counts = {}
            base = int(rng.integers(50, 100))
            counts["maj"] = base
            for i in range(k - 1):
                counts[f"c{i}"] = int(rng.integers(1, base))  # strictly below majority
            dist = imbalance_ratios(make_ds(counts, seed=int(rng.integers(1 << 30))))
            assert sum(1 for r in dist.imbalance_ratios.values() if r == 1.0) == 1


class TestStratifiedSplit:
    def test_proportions(self):
        ds = make_ds({"A": 100, "B": 100})
        train, test = stratified_split(ds, SplitSpec(0.1, seed=3))
        assert imbalance_ratios(train).counts == {"A": 10, "B": 10}
        assert imbalance_ratios(test).counts == {"A": 90, "B": 90}

    def test_determinism(self):
        ds = make_ds({"A": 50, "B": 20, "C": 9})
        a1, b1 = stratified_split(ds, SplitSpec(0.3, seed=42))
        a2, b2 = stratified_split(ds, SplitSpec(0.3, seed=42))
        np.testing.assert_array_equal(a1.rows, a2.rows)
        np.testing.assert_array_equal(b1.rows, b2.rows)

    def test_counting_oracle_2000_20(self):
        # Expected per-class train counts computed by the counting rule
        # round(0.1 * n_c): 0.1*2000 = 200, 0.1*20 = 2.
        ds = make_ds({"A": 2000, "B": 20})
        train, test = stratified_split(ds, SplitSpec(0.1, seed=0))
        assert imbalance_ratios(train).counts == {"A": 200, "B": 2}
        assert imbalance_ratios(test).counts == {"A": 1800, "B": 18}

    def test_partition_property(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            counts = {f"c{i}": int(rng.integers(2, 40)) for i in range(rng.integers(1, 5))}
            ds = make_ds(counts, seed=trial)
            train, test = stratified_split(ds, SplitSpec(0.25, seed=trial))
            combined = np.vstack([train.rows, test.rows])
            labels = np.concatenate([train.labels, test.labels])
            orig = sorted(map(tuple, np.column_stack([ds.rows, ds.labels.astype(object)])))
            got = sorted(map(tuple, np.column_stack([combined, labels.astype(object)])))
            assert orig == got

    def test_minority_clamped_to_one(self):
        ds = make_ds({"A": 100, "B": 2})
        train, _ = stratified_split(ds, SplitSpec(0.05, seed=0))
        assert imbalance_ratios(train).counts["B"] == 1

    def test_single_sample_class_rejected(self):
        ds = make_ds({"A": 5, "B": 1})
        with pytest.raises(DatasetError, match="class 'B'"):
            stratified_split(ds, SplitSpec(0.5))

    def test_unstratified_split_sizes(self):
        ds = make_ds({"A": 37, "B": 13})
        train, test = stratified_split(ds, SplitSpec(0.2, stratified=False, seed=1))
        assert train.n_rows == 10
        assert test.n_rows == 40

    def test_bad_fraction(self):
        with pytest.raises(DatasetError):
            SplitSpec(1.0)


class TestKfold:
    def test_even_division(self):
        folds = kfold_indices(9, 3, seed=0)
        assert [len(v) for _, v in folds] == [3, 3, 3]

    def test_remainder_distribution(self):
        folds = kfold_indices(10, 3, seed=0)
        assert sorted(len(v) for _, v in folds) == [3, 3, 4]

    def test_partition_oracle_100_random_cases(self):
        # Set-equality oracle: validation folds are disjoint and cover range(n).
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            k = int(rng.integers(2, n + 1))
            folds = kfold_indices(n, k, seed=int(rng.integers(1 << 30)))
            assert len(folds) == k
            all_val = np.concatenate([v for _, v in folds])
            assert len(all_val) == n
            assert set(all_val.tolist()) == set(range(n))
            sizes = [len(v) for _, v in folds]
            assert max(sizes) - min(sizes) <= 1
            for train, val in folds:
                assert set(train.tolist()) | set(val.tolist()) == set(range(n))
                assert not set(train.tolist()) & set(val.tolist())

    def test_k_larger_than_n(self):
        with pytest.raises(DatasetError):
            kfold_indices(3, 4, seed=0)

    def test_stratified_kfold_keeps_classes(self):
        ds = make_ds({"A": 30, "B": 9, "C": 6})
        folds = stratified_kfold_indices(ds.labels, 3, seed=1)
        for _, val in folds:
            labs = ds.labels[val]
            assert set(labs.tolist()) == {"A", "B", "C"}
        all_val = np.concatenate([v for _, v in folds])
        assert set(all_val.tolist()) == set(range(ds.n_rows))

    def test_stratified_kfold_class_too_small(self):
        ds = make_ds({"A": 10, "B": 2})
        with pytest.raises(DatasetError, match="class 'B'"):
            stratified_kfold_indices(ds.labels, 3, seed=0)


def test_concat_schema_check():
    a = make_ds({"A": 3})
    b = make_ds({"B": 2})
    c = concat(a, b)
    assert c.n_rows == 5
    other = TabularDataset(("x", "y", "z"), np.zeros((1, 3)), np.array(["A"]))
    with pytest.raises(DatasetError):
        concat(a, other)


def test_label_ids_first_appearance_order():
    ds = TabularDataset(("f",), np.zeros((4, 1)), np.array(["b", "a", "b", "c"]))
    assert ds.classes == ("b", "a", "c")
    np.testing.assert_array_equal(ds.label_ids(), [0, 1, 0, 2])
