"""Training loop behavior: patience rule, determinism, learning progress."""

import numpy as np
import pytest

import histoseq.training as training_module
from histoseq.bilstm import init_model
from histoseq.errors import ValidationError
from histoseq.synthetic import make_synthetic_dataset
from histoseq.training import TrainConfig, classify, train, validation_metrics


def tiny_dataset(seed=0, classes=2, per_class=8):
    return make_synthetic_dataset(
        class_count=classes, per_class=per_class, dim=6, m_range=(3, 6), seed=seed
    )


class TestPatienceRule:
    def run_with_trace(self, trace, patience, max_epochs=30, monkeypatch=None):
        data = tiny_dataset()
        model = init_model(6, 3, 2, seed=1)
        config = TrainConfig(
            optimizer="adam",
            learning_rate=1e-3,
            max_epochs=max_epochs,
            patience=patience,
            dropout_rate=0.0,
            seed=7,
        )
        losses = iter(trace)
        snapshots = []

        def fake_metrics(model_arg, dataset):
            snapshots.append(model_arg.snapshot())
            return next(losses), 0.5

        monkeypatch.setattr(training_module, "validation_metrics", fake_metrics)
        model, history = train(model, data, data[:2], config)
        return model, history, snapshots

    def test_crafted_trace_stops_after_epoch_seven(self, monkeypatch):
        trace = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95]
        model, history, snapshots = self.run_with_trace(trace, 5, monkeypatch=monkeypatch)
        assert len(history.epochs) == 7
        assert history.stop_reason == "patience"
        assert history.best_epoch == 2
        # Returned parameters are the epoch-2 snapshot, not the final ones.
        for name, tensor in model.named_parameters():
            assert np.array_equal(tensor, snapshots[1][name])

    def test_equal_loss_counts_against_patience(self, monkeypatch):
        trace = [1.0, 1.0, 1.0]
        _, history, _ = self.run_with_trace(trace, 2, monkeypatch=monkeypatch)
        assert len(history.epochs) == 3
        assert history.stop_reason == "patience"
        assert history.best_epoch == 1

    def test_improvement_resets_counter(self, monkeypatch):
        trace = [1.0, 1.1, 1.1, 0.5, 1.2, 1.3, 1.4]
        _, history, _ = self.run_with_trace(trace, 3, monkeypatch=monkeypatch)
        assert len(history.epochs) == 7
        assert history.best_epoch == 4

    def test_no_patience_runs_all_epochs(self, monkeypatch):
        trace = [1.0] + [2.0] * 9
        _, history, _ = self.run_with_trace(
            trace, patience=None, max_epochs=10, monkeypatch=monkeypatch
        )
        assert len(history.epochs) == 10
        assert history.stop_reason == "max_epochs"
        assert history.best_epoch == 1


class TestTraining:
    def test_loss_decreases_on_separable_data(self):
        data = make_synthetic_dataset(
            class_count=2, per_class=10, dim=8, m_range=(4, 8), seed=3
        )
        model = init_model(8, 4, 2, seed=2)
        config = TrainConfig(
            optimizer="adam",
            learning_rate=1e-3,
            max_epochs=5,
            patience=None,
            dropout_rate=0.0,
            seed=5,
        )
        _, history = train(model, data, data[:4], config)
        losses = [e.train_loss for e in history.epochs]
        assert len(losses) == 5
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_identical_seeds_identical_history(self):
        data = tiny_dataset(seed=9)
        config = TrainConfig(
            optimizer="rmsprop",
            learning_rate=1e-3,
            max_epochs=4,
            patience=None,
            dropout_rate=0.5,
            seed=11,
        )
        runs = []
        for _ in range(2):
            model = init_model(6, 3, 2, seed=13)
            _, history = train(model, data, data[:3], config)
            runs.append(history)
        for a, b in zip(runs[0].epochs, runs[1].epochs):
            assert a.train_loss == b.train_loss
            assert a.val_loss == b.val_loss
            assert a.val_accuracy == b.val_accuracy

    def test_empty_training_set_rejected(self):
        model = init_model(6, 3, 2, seed=1)
        with pytest.raises(ValidationError):
            train(model, [], tiny_dataset()[:2], TrainConfig())

    def test_dimension_mismatch_rejected(self):
        model = init_model(5, 3, 2, seed=1)
        with pytest.raises(ValidationError):
            train(model, tiny_dataset(), [], TrainConfig())

    def test_config_problems_reported_together(self):
        config = TrainConfig(learning_rate=-1.0, max_epochs=0, dropout_rate=1.5)
        with pytest.raises(ValidationError) as err:
            config.validate()
        message = str(err.value)
        assert "learning_rate" in message
        assert "max_epochs" in message
        assert "dropout_rate" in message

    def test_classify_and_metrics_consistent(self):
        data = tiny_dataset(seed=21)
        model = init_model(6, 3, 2, seed=3)
        loss, acc = validation_metrics(model, data)
        manual = np.mean([classify(model, seq) == seq.label for seq in data])
        assert acc == pytest.approx(manual)
        assert np.isfinite(loss)

    def test_gradient_clipping_flag(self):
        data = tiny_dataset(seed=27)
        config = TrainConfig(
            optimizer="sgdm",
            learning_rate=0.1,
            max_epochs=2,
            patience=None,
            dropout_rate=0.0,
            seed=1,
            clip_norm=0.5,
        )
        model = init_model(6, 3, 2, seed=5)
        _, history = train(model, data, data[:2], config)
        assert all(np.isfinite(e.train_loss) for e in history.epochs)
