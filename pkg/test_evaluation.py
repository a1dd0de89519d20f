"""切分協定、指標、訓練迴圈與報表"""
import json

import numpy as np
import pytest

from data import augment as augmentation
from evaluation.acceptance import CHANCE_LEVEL, check_ablation, check_within_subject, enforce
from evaluation.experiments import PreparedData, build_report, loso_tasks, prepare_data, within_subject_tasks
from evaluation.metrics import aggregate_runs, confusion_and_f1, summarize
from evaluation.probe import band_power_features, linear_probe
from evaluation.protocols import SplitPlan, loso_folds, stratified_split
from evaluation.report import render_ablation, render_report
from evaluation.training import evaluate_model, train_model
from exceptions import AcceptanceError, DataError, ProtocolError
from models import build
from nn.tensor import RngStream
from schemas.config import ArchitectureSection, AugmentConfig, EsnSection, ModelConfig, RunConfig, TrainSection
from schemas.report import ParameterBudget, RunReport


class TestStratifiedSplit:
    def test_seventy_thirty(self):
        plan = stratified_split(np.repeat([0, 1, 2], 100), 0.3, seed=0)
        assert len(plan.train) == 210
        assert len(plan.eval) == 90
        assert np.bincount(np.repeat([0, 1, 2], 100)[plan.eval]).tolist() == [30, 30, 30]

    def test_small_class_rounding(self):
        labels = np.repeat([0, 1, 2], 7)
        plan = stratified_split(labels, 0.3, seed=1)
        assert np.bincount(labels[plan.train]).tolist() == [5, 5, 5]
        assert np.bincount(labels[plan.eval]).tolist() == [2, 2, 2]

    def test_same_seed_same_split(self):
        labels = np.repeat([0, 1, 2], 20)
        a, b = stratified_split(labels, seed=3), stratified_split(labels, seed=3)
        np.testing.assert_array_equal(a.eval, b.eval)
        assert not np.array_equal(a.eval, stratified_split(labels, seed=4).eval)

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        for seed in range(50):
            labels = rng.integers(0, 3, size=int(rng.integers(12, 60)))
            if np.bincount(labels, minlength=3).min() < 2:
                continue
            plan = stratified_split(labels, 0.3, seed)
            assert np.intersect1d(plan.train, plan.eval).size == 0
            np.testing.assert_array_equal(np.sort(np.concatenate([plan.train, plan.eval])), np.arange(labels.size))
            for c in range(3):
                assert np.any(labels[plan.train] == c) and np.any(labels[plan.eval] == c)

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            stratified_split([0, 0, 1, 2, 2], 0.3)

    def test_overlap_is_rejected(self):
        with pytest.raises(ProtocolError):
            SplitPlan(np.array([0, 1]), np.array([1, 2]), 'stratified-holdout')


class TestLoso:
    def test_one_fold_per_subject(self):
        subjects = ['A', 'A', 'B', 'C', 'B', 'C']
        folds = loso_folds(subjects)
        assert [f.held_out for f in folds] == ['A', 'B', 'C']
        np.testing.assert_array_equal(folds[1].eval, [2, 4])
        np.testing.assert_array_equal(folds[1].train, [0, 1, 3, 5])

    def test_single_subject(self):
        with pytest.raises(ProtocolError):
            loso_folds(['A', 'A', 'A'])

    def test_held_out_subject_never_reaches_training(self):
        n = 36
        subjects = np.array(['S0', 'S1', 'S2'] * 12, dtype=object)
        labels = np.tile(np.repeat([0, 1, 2], 3), 4)
        data = PreparedData(np.arange(n, dtype=np.float64).reshape(n, 1, 1), labels, subjects)
        config = RunConfig(train=TrainSection(seeds=[0, 1]))
        tasks = loso_tasks(config, data)
        assert len(tasks) == 6
        for task in tasks:
            held = set(np.flatnonzero(subjects == task.subject))
            seen = set(task.X_train.ravel().astype(int)) | set(task.X_monitor.ravel().astype(int))
            assert seen.isdisjoint(held)
            assert set(task.X_eval.ravel().astype(int)) == held
            assert len(task.X_monitor) > 0

    def test_within_subject_tasks_stay_inside_subject(self):
        n = 36
        subjects = np.array(['S0', 'S1'] * 18, dtype=object)
        labels = np.tile([0, 0, 1, 1, 2, 2], 6)
        data = PreparedData(np.arange(n, dtype=np.float64).reshape(n, 1, 1), labels, subjects)
        tasks = within_subject_tasks(RunConfig(train=TrainSection(seeds=[7])), data)
        assert [t.subject for t in tasks] == ['S0', 'S1']
        for task in tasks:
            members = set(np.flatnonzero(subjects == task.subject))
            assert set(task.X_train.ravel().astype(int)) | set(task.X_eval.ravel().astype(int)) == members
            np.testing.assert_array_equal(task.X_monitor, task.X_eval)


def fixture_pairs(confusion):
    labels, predictions = [], []
    for i, row in enumerate(confusion):
        for j, count in enumerate(row):
            labels += [i] * count
            predictions += [j] * count
    return predictions, labels


class TestMetrics:
    def test_confusion_fixture(self):
        predictions, labels = fixture_pairs([[5, 1, 0], [2, 3, 1], [0, 0, 8]])
        metrics = confusion_and_f1(predictions, labels)
        assert metrics.confusion == [[5, 1, 0], [2, 3, 1], [0, 0, 8]]
        assert metrics.accuracy == pytest.approx(0.8)
        assert metrics.f1[0] == pytest.approx(50 / 65)
        assert metrics.support == [6, 6, 8]
        assert metrics.predicted_distribution == [7, 4, 9]
        assert metrics.precision == pytest.approx([5 / 7, 3 / 4, 8 / 9])
        assert metrics.recall == pytest.approx([5 / 6, 3 / 6, 1.0])
        assert metrics.macro_f1 == pytest.approx(np.mean(metrics.f1))

    def test_absent_class_scores_zero(self):
        metrics = confusion_and_f1([0, 0, 1], [0, 0, 1])
        assert metrics.f1 == [1.0, 1.0, 0.0]
        assert metrics.precision == [1.0, 1.0, 0.0]
        assert metrics.confusion[2] == [0, 0, 0]

    def test_empty_input(self):
        metrics = confusion_and_f1([], [])
        assert metrics.accuracy == 0.0
        assert metrics.confusion == [[0] * 3] * 3

    def test_against_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            n = int(rng.integers(1, 40))
            labels = rng.integers(0, 3, size=n)
            predictions = rng.integers(0, 3, size=n)
            metrics = confusion_and_f1(predictions, labels)
            for c in range(3):
                tp = sum(1 for p, y in zip(predictions, labels) if p == c and y == c)
                fp = sum(1 for p, y in zip(predictions, labels) if p == c and y != c)
                fn = sum(1 for p, y in zip(predictions, labels) if p != c and y == c)
                precision = tp / (tp + fp) if tp + fp else 0.0
                recall = tp / (tp + fn) if tp + fn else 0.0
                f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
                assert metrics.f1[c] == pytest.approx(f1, abs=1e-12)
            assert metrics.accuracy == pytest.approx(np.mean(predictions == labels))

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(DataError):
            confusion_and_f1([0, 1], [0])

    def test_aggregate_mean_and_sample_std(self):
        summary = summarize([0.8, 0.9], [[0.5, 0.6, 0.7], [0.7, 0.6, 0.9]])
        assert summary.accuracy_mean == pytest.approx(0.85)
        assert summary.accuracy_std == pytest.approx(0.0707107, abs=1e-6)
        assert summary.f1_std[1] == 0.0

    def test_single_and_identical_runs_have_zero_std(self):
        assert summarize([0.7], [[0.1, 0.2, 0.3]]).accuracy_std == 0.0
        metrics = confusion_and_f1([0, 1, 2], [0, 1, 1])
        summary = aggregate_runs([metrics, metrics, metrics])
        assert summary.accuracy_std == 0.0
        assert summary.accuracy_mean == metrics.accuracy


def micro_model(seed=0):
    config = ModelConfig(
        model=ArchitectureSection(channels=4, samples=20, filters=2, kernel_size=3),
        esn=EsnSection(size=8, density=0.5),
    )
    return build(config, seed)


def separable_data(n=24, seed=0):
    rng = RngStream(seed)
    y = np.tile([0, 1, 2], n // 3)
    t = np.arange(20)
    X = rng.spawn('noise').normal((n, 4, 20), std=0.1)
    for i, label in enumerate(y):
        X[i, label % 4] += np.sin(2 * np.pi * (label + 1) * t / 20)
    return X, y


class TestTraining:
    def test_evaluation_never_augments(self, monkeypatch):
        calls = []
        original = augmentation.augment_array

        def counting(x, config, rng):
            calls.append(1)
            return original(x, config, rng)

        monkeypatch.setattr(augmentation, 'augment_array', counting)
        model = micro_model()
        X, y = separable_data()
        evaluate_model(model, X, y)
        assert calls == []

        train = TrainSection(max_epochs=2, patience=5, batch_size=8)
        train_model(model, X, y, X[:6], y[:6], train, AugmentConfig(max_shift_samples=2), RngStream(0))
        assert len(calls) == 2 * len(X)

    def test_reservoir_fixed_and_best_epoch_restored(self, tmp_path):
        model = micro_model(1)
        W_before = model.esn.reservoir.W.value.copy()
        W_in_before = model.esn.reservoir.W_in.value.copy()
        X, y = separable_data(30, seed=1)
        train = TrainSection(max_epochs=6, patience=2, batch_size=10, learning_rate=0.01)
        log_file = tmp_path / 'run.jsonl'
        result = train_model(model, X[:21], y[:21], X[21:], y[21:], train, None, RngStream(1), log_file)

        assert model.esn.reservoir.W.value.tobytes() == W_before.tobytes()
        assert not np.array_equal(model.esn.reservoir.W_in.value, W_in_before)
        assert 1 <= result.best_epoch <= result.epochs_trained <= 6
        _, accuracy, _ = evaluate_model(model, X[21:], y[21:])
        assert accuracy == result.best_val_accuracy
        assert result.best_val_accuracy == max(h.val_accuracy for h in result.history)
        lines = log_file.read_text(encoding='utf-8').splitlines()
        assert len(lines) == result.epochs_trained
        assert json.loads(lines[0])['epoch'] == 1
        assert result.echo_state_divergence is not None

    def test_training_is_deterministic(self):
        X, y = separable_data(18, seed=2)
        train = TrainSection(max_epochs=2, batch_size=6)
        weights = []
        for _ in range(2):
            model = micro_model(3)
            train_model(model, X, y, X, y, train, AugmentConfig(max_shift_samples=2), RngStream(5))
            weights.append(b''.join(p.value.tobytes() for p in model.parameters()))
        assert weights[0] == weights[1]


def fake_run(subject, seed, predictions, labels):
    metrics = confusion_and_f1(predictions, labels)
    return RunReport(**metrics.model_dump(), subject=subject, seed=seed, variant='full',
                     n_train=10, n_eval=len(labels))


def fake_report(variant='full'):
    runs = [
        fake_run('S0', 0, [0, 1, 2, 2], [0, 1, 2, 1]),
        fake_run('S0', 1, [0, 1, 2, 1], [0, 1, 2, 1]),
        fake_run('S1', 0, [0, 0, 2, 1], [0, 1, 2, 1]),
        fake_run('S1', 1, [1, 0, 2, 1], [0, 1, 2, 1]),
    ]
    config = RunConfig().with_variant(variant)
    budget = ParameterBudget(total=5119, by_stage={'head': 303}, ratio_to_reference=0.11)
    return build_report('within-subject', config, runs, budget, {'laser': {'backside': 4, 'frontside': 4, 'pumping': 4}})


class TestReport:
    def test_build_report_summaries(self):
        report = fake_report()
        assert [s.subject for s in report.subjects] == ['S0', 'S1']
        assert report.subjects[0].summary.accuracy_mean == pytest.approx(0.875)
        assert report.macro.accuracy_mean == pytest.approx((0.875 + 0.625) / 2)
        assert report.seed_summary.n == 2
        assert report.seeds == [0, 1]

    def test_render_report_rows(self):
        text = render_report(fake_report())
        lines = text.splitlines()
        assert any(line.startswith('S0') and '87.5' in line for line in lines)
        assert any(line.startswith('S1') and '62.5' in line for line in lines)
        assert any(line.startswith('平均') for line in lines)
        assert 'seed 0' in text and 'seed 1' in text
        assert '5,119' in text

    def test_render_ablation(self):
        text = render_ablation(fake_report('full'), fake_report('conv-only'))
        assert 'conv-only' in text
        assert '+0.0' in text


class TestAcceptance:
    def test_within_subject_threshold(self):
        (check,) = check_within_subject(fake_report())
        assert not check.passed
        assert '0.7500' in check.detail
        assert check_within_subject(fake_report(), threshold=0.75)[0].passed

    def test_ablation_both_variants_above_chance(self):
        checks = check_ablation(fake_report('full'), fake_report('conv-only'))
        assert [c.name for c in checks] == ['full_above_chance', 'conv-only_above_chance', 'ablation_report_complete']
        assert all(c.passed for c in checks)
        assert CHANCE_LEVEL == pytest.approx(1 / 3)

    def test_ablation_margin_not_met(self):
        checks = check_ablation(fake_report('full'), fake_report('conv-only'), margin=0.5)
        assert [c.passed for c in checks] == [False, False, True]

    def test_swapped_variants_fail(self):
        checks = check_ablation(fake_report('conv-only'), fake_report('full'))
        assert not checks[0].passed and not checks[1].passed

    def test_missing_subject_is_incomplete(self):
        conv_only = fake_report('conv-only')
        conv_only = conv_only.model_copy(update={'subjects': conv_only.subjects[:1]})
        complete = check_ablation(fake_report('full'), conv_only)[-1]
        assert not complete.passed
        assert 'S1' in complete.detail

    def test_missing_seed_run_is_incomplete(self):
        full = fake_report('full')
        s0 = full.subjects[0].model_copy(update={'runs': full.subjects[0].runs[:1]})
        full = full.model_copy(update={'subjects': [s0] + full.subjects[1:]})
        complete = check_ablation(full, fake_report('conv-only'))[-1]
        assert not complete.passed
        assert 'S0' in complete.detail

    def test_enforce_raises_with_failed_names(self):
        checks = check_within_subject(fake_report()) + check_ablation(fake_report('full'), fake_report('conv-only'))
        with pytest.raises(AcceptanceError, match='within_subject_accuracy') as info:
            enforce(checks)
        assert 'full_above_chance' not in str(info.value)
        assert info.value.exit_code == 6
        enforce(checks[1:])


def test_band_power_classifier_separates_band_limited_classes():
    rng = RngStream(0)
    fs, t = 500, np.arange(250) / 500
    freqs = (8.0, 14.0, 22.0)
    y = np.repeat([0, 1, 2], 40)
    X = rng.spawn('noise').normal((120, 2, 250), std=0.3)
    phases = rng.spawn('phase').uniform((120,), 0, 2 * np.pi)
    for i, label in enumerate(y):
        X[i] += np.sin(2 * np.pi * freqs[label] * t + phases[i])
    assert band_power_features(X, fs).shape == (120, 10)
    result = linear_probe(X, y, seed=0)
    assert result.passed
    assert result.n_eval == 36


def test_synthetic_dataset_is_linearly_separable():
    config = RunConfig(data={'synth': {'n_per_class': 40, 'subjects': 1, 'channels': 8}},
                       model={'channels': 8})
    data = prepare_data(config)
    assert data.X.shape == (120, 8, 250)
    assert linear_probe(data.X, data.y, seed=0, subject='S0').passed
