"""Loss, optimizer recurrence, and the training loop.

The loop's guarantees under test: bit-for-bit determinism from the seed,
best-checkpoint selection by validation accuracy, the evaluation
schedule, and that the whole composite (forward, loss, backward, update)
matches finite differences end to end.
"""

import numpy as np
import pytest

from tenreg.data_io import Dataset
from tenreg.decompositions import RankSpec, random_weight
from tenreg.trainer import (
    EvalRecord,
    TrainConfig,
    TrainLog,
    evaluate,
    init_layer,
    sgd_momentum_step,
    softmax_cross_entropy,
    train,
    with_test_accuracy,
)
from tenreg.trainer import _lr_at
from tenreg.trl import TrlLayer, backward_batch, forward_batch, grad_list, param_list, replace_params


def blob_dataset(n, rows=4, cols=3, classes=4, seed=0, noise=0.05):
    """Separable synthetic images: one base pattern per class plus noise.

    Patterns come from a fixed generator so different seeds draw fresh
    samples of the same classification problem.
    """
    base = np.random.default_rng(99).uniform(0.15, 0.85, (classes, rows, cols))
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, n)
    inputs = base[labels] + rng.uniform(-noise, noise, (n, rows, cols))
    inputs = np.clip(inputs, 0.0, 1.0)[..., None]
    return Dataset(inputs, labels)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        logits = np.zeros((3, 10))
        labels = np.array([0, 5, 9])
        loss, _ = softmax_cross_entropy(logits, labels)
        assert abs(loss - np.log(10)) < 1e-12

    def test_confident_correct_prediction(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 50.0
        loss, _ = softmax_cross_entropy(logits, np.array([2]))
        assert loss < 1e-12

    def test_large_logits_stable(self):
        logits = np.array([[1000.0, 1000.0 - np.log(3)]])
        loss, grad = softmax_cross_entropy(logits, np.array([0]))
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))

    def test_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((5, 7))
        _, grad = softmax_cross_entropy(logits, rng.integers(0, 7, 5))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((4, 5))
        labels = rng.integers(0, 5, 4)
        _, grad = softmax_cross_entropy(logits, labels)
        step = 1e-6
        for i in range(4):
            for j in range(5):
                bumped = logits.copy()
                bumped[i, j] += step
                up, _ = softmax_cross_entropy(bumped, labels)
                bumped[i, j] -= 2 * step
                down, _ = softmax_cross_entropy(bumped, labels)
                fd = (up - down) / (2 * step)
                assert abs(grad[i, j] - fd) < 1e-8

    def test_label_validation(self):
        logits = np.zeros((2, 3))
        with pytest.raises(ValueError):
            softmax_cross_entropy(logits, np.array([0]))
        with pytest.raises(ValueError):
            softmax_cross_entropy(logits, np.array([0, 3]))


class TestSgdMomentum:
    def test_recurrence_by_hand(self):
        p = (np.array([1.0]),)
        g = (np.array([2.0]),)
        v = (np.array([0.5]),)
        new_p, new_v = sgd_momentum_step(p, g, v, lr=0.1, momentum=0.9)
        # v' = 0.9 * 0.5 + 2 = 2.45 ; p' = 1 - 0.1 * 2.45 = 0.755
        assert new_v[0][0] == pytest.approx(2.45, abs=1e-15)
        assert new_p[0][0] == pytest.approx(0.755, abs=1e-15)

    def test_zero_momentum_is_plain_sgd(self):
        rng = np.random.default_rng(2)
        p = (rng.standard_normal(4),)
        g = (rng.standard_normal(4),)
        v = (np.zeros(4),)
        new_p, _ = sgd_momentum_step(p, g, v, lr=0.05, momentum=0.0)
        np.testing.assert_allclose(new_p[0], p[0] - 0.05 * g[0], rtol=1e-15)

    def test_inputs_not_mutated(self):
        p = (np.array([1.0, 2.0]),)
        g = (np.array([3.0, 4.0]),)
        v = (np.array([0.0, 0.0]),)
        sgd_momentum_step(p, g, v, lr=0.1, momentum=0.9)
        assert np.array_equal(p[0], [1.0, 2.0])
        assert np.array_equal(v[0], [0.0, 0.0])

    def test_alignment_checked(self):
        a = (np.zeros(2),)
        with pytest.raises(ValueError):
            sgd_momentum_step(a, a + (np.zeros(2),), a, 0.1, 0.9)
        with pytest.raises(ValueError):
            sgd_momentum_step(a, (np.zeros(3),), a, 0.1, 0.9)


class TestConfig:
    def test_defaults_valid(self):
        c = TrainConfig(format="cp", rank=4, max_steps=100)
        assert c.learning_rate == 0.01
        assert c.momentum == 0.9
        assert c.rank_spec() == RankSpec("cp", 4)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"momentum": 1.0},
            {"momentum": -0.1},
            {"batch_size": 0},
            {"max_steps": -1},
            {"eval_every": 0},
        ],
    )
    def test_invalid_values(self, kwargs):
        base = dict(format="cp", rank=4, max_steps=10)
        with pytest.raises(ValueError):
            TrainConfig(**{**base, **kwargs})

    def test_reserved_knobs_rejected(self):
        with pytest.raises(ValueError, match="dropout"):
            TrainConfig(format="cp", rank=4, max_steps=10, dropout=0.5)
        with pytest.raises(ValueError, match="weight decay"):
            TrainConfig(format="cp", rank=4, max_steps=10, weight_decay=1e-4)

    def test_lr_decay_schedule(self):
        c = TrainConfig(
            format="cp", rank=4, max_steps=10,
            learning_rate=0.1, lr_decay_steps=(100, 200),
        )
        assert _lr_at(c, 50) == pytest.approx(0.1)
        assert _lr_at(c, 100) == pytest.approx(0.01)
        assert _lr_at(c, 250) == pytest.approx(0.001)


class TestInitAndEvaluate:
    def test_init_deterministic(self):
        c = TrainConfig(format="tt", rank=(1, 2, 2, 2, 1), max_steps=1, seed=5)
        a, _ = init_layer(c, (4, 3, 1))
        b, _ = init_layer(c, (4, 3, 1))
        for x, y in zip(param_list(a), param_list(b)):
            assert np.array_equal(x, y)
        assert np.all(a.bias == c.init_bias)

    def test_evaluate_perfect_layer(self):
        d = blob_dataset(30, classes=3)
        # cheat layer: bias picks the right class given zero weight is
        # impossible, so instead train-free check uses a known-logit layer
        rng = np.random.default_rng(3)
        layer, _ = init_layer(
            TrainConfig(format="cp", rank=2, max_steps=1), (4, 3, 1), 3
        )
        logits = forward_batch(layer, d.inputs)
        loss, acc = evaluate(layer, d)
        ref_loss, _ = softmax_cross_entropy(logits, d.labels)
        assert loss == pytest.approx(ref_loss, rel=1e-12)
        ref_acc = float(np.mean(np.argmax(logits, axis=1) == d.labels))
        assert acc == pytest.approx(ref_acc)

    def test_evaluate_tie_breaks_low(self):
        # all-zero weight and bias: every logit row ties, argmax gives 0
        from tenreg.decompositions import zero_weight

        d = blob_dataset(20, classes=4)
        layer = TrlLayer(
            zero_weight(RankSpec("cp", 1), (4, 3, 1, 4)), np.zeros(4)
        )
        _, acc = evaluate(layer, d)
        assert acc == pytest.approx(float(np.mean(d.labels == 0)))

    def test_evaluate_empty_raises(self):
        layer = TrlLayer(
            random_weight(RankSpec("cp", 1), (2, 2, 1, 4), np.random.default_rng(0)),
            np.zeros(4),
        )
        with pytest.raises(ValueError):
            evaluate(layer, blob_dataset(10).subset([]))


class TestTrainLoop:
    CONFIG = dict(format="cp", rank=3, batch_size=16, eval_every=20, seed=0)

    def test_zero_steps_returns_initial_layer(self):
        c = TrainConfig(max_steps=0, **self.CONFIG)
        tr, va = blob_dataset(40), blob_dataset(12, seed=1)
        layer, log = train(c, tr, va)
        ref, _ = init_layer(c, (4, 3, 1))
        for a, b in zip(param_list(layer), param_list(ref)):
            assert np.array_equal(a, b)
        assert log.records == ()
        assert log.best_step == 0

    def test_deterministic_runs(self):
        c = TrainConfig(max_steps=60, **self.CONFIG)
        tr, va = blob_dataset(40), blob_dataset(12, seed=1)
        l1, g1 = train(c, tr, va)
        l2, g2 = train(c, tr, va)
        for a, b in zip(param_list(l1), param_list(l2)):
            assert np.array_equal(a, b)
        assert g1.records == g2.records
        assert g1.best_step == g2.best_step

    def test_learns_separable_data(self):
        c = TrainConfig(max_steps=800, learning_rate=0.05, **self.CONFIG)
        tr, va = blob_dataset(80), blob_dataset(24, seed=1)
        _, log = train(c, tr, va)
        assert log.records[-1].train_loss < log.records[0].train_loss
        assert log.best_val_accuracy >= 0.9

    def test_eval_schedule(self):
        c = TrainConfig(max_steps=50, **self.CONFIG)
        tr, va = blob_dataset(40), blob_dataset(12, seed=1)
        _, log = train(c, tr, va)
        assert [r.step for r in log.records] == [20, 40, 50]

    def test_best_checkpoint_is_returned(self):
        c = TrainConfig(max_steps=100, learning_rate=0.05, **self.CONFIG)
        tr, va = blob_dataset(60), blob_dataset(20, seed=1)
        layer, log = train(c, tr, va)
        accs = [r.val_accuracy for r in log.records]
        assert log.best_val_accuracy == max(accs)
        # earliest step wins ties
        assert log.best_step == log.records[int(np.argmax(accs))].step
        _, acc = evaluate(layer, va)
        assert acc == pytest.approx(log.best_val_accuracy)

    def test_early_stopping_cuts_schedule(self):
        kw = dict(self.CONFIG, eval_every=5)
        base = TrainConfig(max_steps=200, **kw)
        patient = TrainConfig(max_steps=200, early_stop_patience=2, **kw)
        tr, va = blob_dataset(40), blob_dataset(12, seed=1)
        _, full = train(base, tr, va)
        _, cut = train(patient, tr, va)
        assert len(cut.records) <= len(full.records)

    def test_empty_sets_rejected(self):
        c = TrainConfig(max_steps=10, **self.CONFIG)
        d = blob_dataset(10)
        with pytest.raises(ValueError):
            train(c, d.subset([]), d)
        with pytest.raises(ValueError):
            train(c, d, d.subset([]))

    def test_composite_gradient_matches_finite_differences(self):
        """Forward + loss + backward over a 4-sample batch vs numeric."""
        rng = np.random.default_rng(7)
        layer = TrlLayer(
            random_weight(RankSpec("tucker", (2, 2, 1, 3)), (4, 3, 1, 3), rng, 0.4),
            rng.standard_normal(3),
        )
        xs = rng.uniform(0, 1, (4, 4, 3, 1))
        ys = np.array([0, 2, 1, 2])

        def total_loss(params):
            probed = replace_params(layer, params)
            loss, _ = softmax_cross_entropy(forward_batch(probed, xs), ys)
            return loss

        _, upstream = softmax_cross_entropy(forward_batch(layer, xs), ys)
        grads = grad_list(backward_batch(layer, xs, upstream))
        params = [p.copy() for p in param_list(layer)]
        step = 1e-6
        for anum, a in enumerate(params):
            for idx in np.ndindex(*a.shape):
                orig = a[idx]
                a[idx] = orig + step
                up = total_loss(params)
                a[idx] = orig - step
                down = total_loss(params)
                a[idx] = orig
                fd = (up - down) / (2 * step)
                assert abs(grads[anum][idx] - fd) < 1e-6


class TestTrainLog:
    def _log(self):
        return TrainLog(
            records=(
                EvalRecord(10, 1.5, 1.6, 0.3),
                EvalRecord(20, 1.1, 1.2, 0.55),
            ),
            best_step=20,
            best_val_accuracy=0.55,
            seconds=2.5,
        )

    def test_csv_layout(self):
        text = self._log().to_csv_text()
        lines = text.strip().split("\n")
        assert lines[0] == "step,train_loss,val_loss,val_acc"
        assert lines[1].startswith("10,1.5")
        assert len(lines) == 3

    def test_to_dict(self):
        d = self._log().to_dict()
        assert d["best_step"] == 20
        assert d["test_accuracy"] is None
        assert len(d["records"]) == 2

    def test_with_test_accuracy(self):
        log = with_test_accuracy(self._log(), 0.5)
        assert log.test_accuracy == 0.5
        assert log.best_step == 20
