import numpy as np
import pytest

from synthbal.ctgan import (
    ConditionalLayout,
    CtganError,
    TrainConfig,
    condition_cross_entropy,
    discriminator_loss,
    generate,
    generator_loss,
    load_model,
    sample_condition,
    save_loss_curve,
    save_model,
    train,
)
from synthbal.dataset import TabularDataset, concat, imbalance_ratios


def gaussian_ds(means, stds, counts, seed=0, names=None):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for cls, (mu, sd, n) in enumerate(zip(means, stds, counts)):
        rows.append(rng.normal(mu, sd, size=(n, len(mu))))
        labels += [f"c{cls}"] * n
    names = names or tuple(f"f{i}" for i in range(len(means[0])))
    return TabularDataset(names, np.vstack(rows), np.asarray(labels))


SMALL = dict(hidden_width=64, noise_dim=16, batch_size=50)


class TestLosses:
    def test_worked_example(self):
        assert discriminator_loss([0.8], [0.2]) == pytest.approx(-0.6, abs=1e-15)

    def test_equal_scores_cancel(self):
        v = np.random.default_rng(0).normal(size=20)
        assert discriminator_loss(v, v) == 0.0

    def test_two_element_arithmetic(self):
        assert discriminator_loss([1.0, 0.5], [0.2, 0.1]) == pytest.approx(-0.6, abs=1e-15)

    def test_direct_summation_oracle(self):
        # Oracle: accumulate (1/m) * sum(fake - real) one term at a time.
        rng = np.random.default_rng(123)
        for _ in range(1000):
            m = int(rng.integers(1, 40))
            real = rng.normal(size=m)
            fake = rng.normal(size=m)
            acc = 0.0
            for i in range(m):
                acc += fake[i] - real[i]
            assert abs(discriminator_loss(real, fake) - acc / m) <= 1e-12

    def test_generator_loss_substitution(self):
        assert generator_loss([0.5], 0.0) == pytest.approx(-0.5, abs=1e-15)

    def test_generator_loss_zero_critic(self):
        assert generator_loss([0.0, 0.0], 0.3) == pytest.approx(0.3, abs=1e-15)

    def test_generator_loss_oracle(self):
        rng = np.random.default_rng(321)
        for _ in range(1000):
            m = int(rng.integers(1, 40))
            fake = rng.normal(size=m)
            ce = float(rng.random())
            acc = 0.0
            for i in range(m):
                acc += fake[i]
            assert abs(generator_loss(fake, ce) - (-acc / m + ce)) <= 1e-12

    def test_perfect_condition_gives_zero_ce(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0]])
        ids = np.array([0, 1])
        assert condition_cross_entropy(probs, ids) == pytest.approx(0.0, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(CtganError, match="lengths differ"):
            discriminator_loss([1.0], [1.0, 2.0])

    def test_empty_inputs(self):
        with pytest.raises(CtganError, match="non-empty"):
            discriminator_loss([], [])
        with pytest.raises(CtganError, match="non-empty"):
            generator_loss([], 0.0)

    def test_negative_ce(self):
        with pytest.raises(CtganError, match=">= 0"):
            generator_loss([0.5], -0.1)


class TestSampleCondition:
    def test_single_class(self):
        layout = ConditionalLayout(("only",), np.array([1.0]))
        rng = np.random.default_rng(0)
        for _ in range(10):
            cid, vec = sample_condition(layout, rng)
            assert cid == 0
            np.testing.assert_array_equal(vec, [1.0])

    def test_uniform_frequencies_7_classes(self):
        layout = ConditionalLayout(
            tuple(f"c{i}" for i in range(7)), np.full(7, 1 / 7)
        )
        rng = np.random.default_rng(42)
        counts = np.zeros(7)
        for _ in range(70_000):
            cid, _ = sample_condition(layout, rng)
            counts[cid] += 1
        np.testing.assert_allclose(counts / 70_000, 1 / 7, atol=0.01)

    def test_one_hot_property(self):
        layout = ConditionalLayout(("a", "b", "c"), np.array([0.5, 0.3, 0.2]))
        rng = np.random.default_rng(1)
        for _ in range(50):
            cid, vec = sample_condition(layout, rng)
            assert vec.sum() == 1.0
            assert vec[cid] == 1.0


@pytest.fixture(scope="module")
def trained_single_class():
    # Single-class 2-feature Gaussian: mu = (3, -2), sigma = (1, 0.5).
    ds = gaussian_ds([(3.0, -2.0)], [(1.0, 0.5)], [500], seed=5)
    cfg = TrainConfig(epochs=300, seed=7, **SMALL)
    return ds, train(ds, cfg)


class TestTrain:
    def test_moment_oracle_on_generated_sample(self, trained_single_class):
        ds, model = trained_single_class
        synth = generate(model, "c0", 2000, seed=11)
        real_mean = ds.rows.mean(axis=0)
        real_std = ds.rows.std(axis=0)
        synth_mean = synth.rows.mean(axis=0)
        synth_std = synth.rows.std(axis=0)
        assert np.all(np.abs(synth_mean - real_mean) <= 0.3)
        assert np.all(np.abs(synth_std - real_std) <= 0.3)

    def test_losses_finite_across_epochs(self, trained_single_class):
        _, model = trained_single_class
        assert len(model.training_log) == 300
        for _, ld, lg in model.training_log:
            assert np.isfinite(ld) and np.isfinite(lg)

    def test_training_log_deterministic(self):
        ds = gaussian_ds([(0.0, 0.0), (4.0, 4.0)], [(1, 1), (1, 1)], [40, 40], seed=2)
        cfg = TrainConfig(epochs=3, seed=9, **SMALL)
        log1 = train(ds, cfg).training_log
        log2 = train(ds, cfg).training_log
        assert log1 == log2

    def test_insufficient_rows(self):
        ds = TabularDataset(("a",), np.array([[1.0]]), np.array(["A"]))
        with pytest.raises(CtganError, match="at least 2"):
            train(ds, TrainConfig(epochs=1, **SMALL))


class TestGenerate:
    def test_all_rows_labeled_with_requested_class(self, trained_single_class):
        _, model = trained_single_class
        synth = generate(model, "c0", 1000, seed=3)
        assert synth.n_rows == 1000
        assert set(synth.labels.tolist()) == {"c0"}

    def test_single_row_shape(self, trained_single_class):
        ds, model = trained_single_class
        synth = generate(model, "c0", 1, seed=4)
        assert synth.rows.shape == (1, ds.n_features)
        assert synth.feature_names == ds.feature_names

    def test_same_seed_identical(self, trained_single_class):
        _, model = trained_single_class
        a = generate(model, "c0", 20, seed=5)
        b = generate(model, "c0", 20, seed=5)
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_unknown_class(self, trained_single_class):
        _, model = trained_single_class
        with pytest.raises(CtganError, match="unknown class"):
            generate(model, "nope", 5)

    def test_generated_encoded_width_invariant(self, trained_single_class):
        from synthbal.ctgan import _generator_forward

        _, model = trained_single_class
        rng = np.random.default_rng(0)
        noise = rng.standard_normal((4, model.noise_dim))
        cond = model.layout.one_hot(np.zeros(4, dtype=np.int64))
        _, out = _generator_forward(model, noise, cond, rng)
        assert out.shape[1] == model.encoded_width + model.layout.condvec_width


@pytest.fixture(scope="module")
def trained_two_class():
    ds = gaussian_ds(
        [(0.0, 0.0), (8.0, 8.0)], [(1.0, 1.0), (1.0, 1.0)], [150, 150], seed=13
    )
    cfg = TrainConfig(epochs=300, seed=17, **SMALL)
    return ds, train(ds, cfg)


class TestConditionalFidelity:
    def test_one_nn_assigns_requested_class(self, trained_two_class):
        # 1-NN oracle on the real data, brute force.
        ds, model = trained_two_class
        for cls in ds.classes:
            synth = generate(model, cls, 200, seed=23)
            dists = ((synth.rows[:, None, :] - ds.rows[None, :, :]) ** 2).sum(axis=2)
            nearest = np.argmin(dists, axis=1)
            assigned = ds.labels[nearest]
            assert (assigned == cls).mean() >= 0.8

    def test_rebalancing_raises_minority_ir(self, trained_two_class):
        ds, model = trained_two_class
        skewed = ds.subset(
            np.concatenate([ds.class_index["c0"], ds.class_index["c1"][:10]])
        )
        before = imbalance_ratios(skewed).imbalance_ratios["c1"]
        synth = generate(model, "c1", 100, seed=29)
        after = imbalance_ratios(concat(skewed, synth)).imbalance_ratios["c1"]
        assert after > before


def test_checkpoint_round_trip(tmp_path, trained_single_class):
    _, model = trained_single_class
    p = tmp_path / "model.ckpt"
    save_model(model, p)
    back = load_model(p)
    a = generate(model, "c0", 10, seed=31)
    b = generate(back, "c0", 10, seed=31)
    np.testing.assert_array_equal(a.rows, b.rows)
    assert back.training_log == model.training_log


def test_loss_curve_csv(tmp_path, trained_single_class):
    _, model = trained_single_class
    p = tmp_path / "losses.csv"
    save_loss_curve(model, p)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss_discriminator,loss_generator"
    assert len(lines) == 301


def test_train_config_validation():
    with pytest.raises(CtganError):
        TrainConfig(epochs=0)
    with pytest.raises(CtganError):
        TrainConfig(batch_size=1)
    with pytest.raises(CtganError):
        TrainConfig(gumbel_tau=0.0)
