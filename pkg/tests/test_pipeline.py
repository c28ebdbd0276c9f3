import numpy as np
import pytest

from spihits.detector import (
    BoxAnnotation,
    DetectorConfig,
    build_model,
    decide,
    forward_detect,
    save_checkpoint,
)
from spihits.metrics import SelectionSet
from spihits.optim import OptimizerConfig
from spihits.pipeline import (
    MissingCheckpointError,
    SplitCounts,
    TrainConfig,
    TrainingExample,
    classify_batch,
    detect_saturation,
    evaluate_selection,
    select_with_checkpoint,
    split_dataset,
    stable_select,
    train,
    validate_family,
)
from spihits.store import ManifestEntry, Store

TINY = DetectorConfig(input_size=32, stages=3, channels=(4, 4, 8))  # S=4


def fake_entries(n_single, n_negative):
    entries = []
    for i in range(n_single + n_negative):
        label = "single" if i < n_single else "non_single"
        entries.append(ManifestEntry(id=f"id{i:06d}", file="x", n_bytes=0,
                                     label=label))
    return entries


def toy_examples(n=40, seed=0, size=32):
    """Positives carry a bright center block; negatives are dark noise."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        img = (0.05 * rng.random((3, size, size))).astype(np.float32)
        truth = None
        if i % 3 == 0:
            img[:, 12:20, 12:20] = 1.0
            truth = BoxAnnotation(0.5, 0.5, 0.25, 0.25)
        out.append(TrainingExample(id=f"t{i:04d}", image=img, truth=truth))
    return out


def toy_config(**kw):
    base = dict(
        iterations=200,
        batch_size=8,
        checkpoint_every=50,
        detector=TINY,
        optimizer=OptimizerConfig(learning_rate=2e-3, momentum=0.9),
        seed=1,
    )
    base.update(kw)
    return TrainConfig(**base)


class TestSplitDataset:
    def test_test_set_is_universe_minus_training(self):
        # 18,213-pattern universe minus 240 training ids -> 17,973 test ids
        entries = fake_entries(1393, 18213 - 1393)
        counts = SplitCounts(train_singles=72, train_negatives=168)
        split = split_dataset(entries, counts, seed=3)
        assert len(split.train) == 240
        assert len(split.validation) == 0
        assert len(split.test) == 17973

    def test_disjoint_and_within_universe(self):
        entries = fake_entries(50, 200)
        counts = SplitCounts(10, 40, 5, 20)
        split = split_dataset(entries, counts, seed=0)
        train, val, test = map(set, (split.train, split.validation, split.test))
        assert not train & val and not train & test and not val & test
        universe = {e.id for e in entries}
        assert train | val | test <= universe

    def test_deterministic(self):
        entries = fake_entries(30, 100)
        counts = SplitCounts(5, 20, 5, 20)
        a = split_dataset(entries, counts, seed=9)
        b = split_dataset(entries, counts, seed=9)
        assert a.train == b.train and a.validation == b.validation

    def test_insufficient_positives(self):
        entries = fake_entries(3, 100)
        with pytest.raises(ValueError, match="singles"):
            split_dataset(entries, SplitCounts(10, 10), seed=0)

    def test_class_counts_respected(self):
        entries = fake_entries(50, 200)
        split = split_dataset(entries, SplitCounts(12, 34, 7, 21), seed=2)
        labels = {e.id: e.label for e in entries}
        assert sum(labels[i] == "single" for i in split.train) == 12
        assert sum(labels[i] == "single" for i in split.validation) == 7


class TestTrainConfig:
    def test_cadence_must_divide(self):
        with pytest.raises(ValueError):
            TrainConfig(iterations=250, checkpoint_every=100, detector=TINY)

    def test_default_schedule_drop(self):
        cfg = TrainConfig(iterations=1000, checkpoint_every=100, detector=TINY)
        assert cfg.optimizer.lr_at(0) == pytest.approx(3e-3)
        assert cfg.optimizer.lr_at(600) == pytest.approx(3e-4)

    def test_family_tag(self):
        cfg = toy_config()
        assert cfg.family == "cnn32-jet-linear"


class TestTrain:
    def test_checkpoint_cadence(self, tmp_path):
        store = Store(tmp_path)
        cfg = toy_config(iterations=250, checkpoint_every=50)
        result = train(cfg, toy_examples(24), store)
        assert result.checkpoint_iterations == [50, 100, 150, 200, 250]
        assert len(result.loss_curve) == 250
        assert store.read_family_manifest(cfg.family)["checkpoint_every"] == 50

    def test_loss_decreases_on_toy_data(self, tmp_path):
        store = Store(tmp_path)
        cfg = toy_config(iterations=200)
        result = train(cfg, toy_examples(40), store)
        losses = [v for _, v in result.loss_curve]
        assert np.mean(losses[-30:]) < np.mean(losses[:30])

    def test_batch_larger_than_set_rejected(self, tmp_path):
        store = Store(tmp_path)
        cfg = toy_config(batch_size=64)
        with pytest.raises(ValueError, match="batch_size"):
            train(cfg, toy_examples(10), store)

    def test_resume_from_last_checkpoint(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(24)
        train(toy_config(iterations=100, checkpoint_every=50), examples, store)
        result = train(toy_config(iterations=200, checkpoint_every=50),
                       examples, store)
        assert result.checkpoint_iterations == [50, 100, 150, 200]
        assert [it for it, _ in result.loss_curve] == list(range(1, 201))

    def test_deterministic_bitwise(self, tmp_path):
        curves = []
        blobs = []
        for run in ("a", "b"):
            store = Store(tmp_path / run)
            cfg = toy_config(iterations=100, checkpoint_every=50)
            result = train(cfg, toy_examples(24), store, resume=False)
            curves.append(result.loss_curve)
            blobs.append(
                store.checkpoint_path(cfg.family, 100).read_bytes()
            )
        assert curves[0] == curves[1]
        assert blobs[0] == blobs[1]


class TestClassify:
    def test_classify_batch_equals_decide(self, tmp_path):
        model = build_model(TINY, seed=4)
        rng = np.random.default_rng(0)
        images = rng.random((12, 3, 32, 32)).astype(np.float32)
        hits = classify_batch(model, images, threshold=0.5, batch=5)
        for i in range(12):
            want, _ = decide(forward_detect(model, images[i]), 0.5)
            assert hits[i] == want

    def test_threshold_nesting_of_selections(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(20)
        model = build_model(TINY, seed=5)
        save_checkpoint(model, _ckpt(store, "fam", 100))
        lo = select_with_checkpoint(store, "fam", 100, examples, 0.24)
        hi = select_with_checkpoint(store, "fam", 100, examples, 0.5)
        assert hi.ids <= lo.ids

    def test_missing_checkpoint_lists_available(self, tmp_path):
        store = Store(tmp_path)
        save_checkpoint(build_model(TINY, seed=0), _ckpt(store, "fam", 100))
        with pytest.raises(MissingCheckpointError, match=r"\[100\]"):
            select_with_checkpoint(store, "fam", 300, toy_examples(4), 0.24)


def _ckpt(store, family, iteration):
    path = store.checkpoint_path(family, iteration)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def biased_model(bias):
    model = build_model(TINY, seed=6)
    model.layers[-1].weights[...] = 0.0
    model.layers[-1].bias[...] = 0.0
    model.layers[-1].bias[4] = bias
    return model


class TestValidateFamily:
    def test_perfect_classifier_f1_one(self, tmp_path):
        store = Store(tmp_path)
        examples = [e for e in toy_examples(30) if e.truth is not None]
        save_checkpoint(biased_model(+10.0), _ckpt(store, "fam", 100))
        results = validate_family(store, "fam", examples, threshold=0.24)
        assert results[0][1].f1 == pytest.approx(1.0)

    def test_all_negative_checkpoint(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(30)
        save_checkpoint(biased_model(-10.0), _ckpt(store, "fam", 100))
        results = validate_family(store, "fam", examples, threshold=0.24)
        rep = results[0][1]
        assert rep.recall == 0.0
        assert rep.f1 is None
        assert "0.0" in store.read_curve_csv("fam", "f1").splitlines()[1]

    def test_curve_csv_shape(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(16)
        for it in (100, 200):
            save_checkpoint(biased_model(-1.0), _ckpt(store, "fam", it))
        validate_family(store, "fam", examples, threshold=0.24)
        lines = store.read_curve_csv("fam", "f1").splitlines()
        assert lines[0] == "iteration,f1"
        assert len(lines) == 3


class TestDetectSaturation:
    def test_flat_curve_first_eligible(self):
        curve = [(100 * (i + 1), 0.8) for i in range(30)]
        assert detect_saturation(curve, window=10) == 1000

    def test_rising_curve_never_saturates(self):
        curve = [(100 * (i + 1), 0.01 * i) for i in range(30)]
        assert detect_saturation(curve, window=10, slope_tol=0.002) is None

    def test_flat_after_knee(self):
        values = [min(0.08 * i, 0.8) for i in range(40)]  # knee at i=10
        curve = [(100 * (i + 1), v) for i, v in enumerate(values)]
        got = detect_saturation(curve, window=10, slope_tol=0.002)
        knee_iter = 100 * 11
        assert got is not None
        assert abs(got - (knee_iter + 10 * 100)) <= 10 * 100  # within one window

    def test_short_curve_rejected(self):
        with pytest.raises(ValueError):
            detect_saturation([(100, 0.5)] * 5, window=10)

    def test_none_values_treated_as_zero(self):
        curve = [(100 * (i + 1), None) for i in range(20)]
        assert detect_saturation(curve, window=10) == 1000


class TestStableSelect:
    def _family(self, store, examples):
        cfg = toy_config(iterations=250, checkpoint_every=50)
        train(cfg, examples, store)
        return cfg.family

    def test_final_is_subset_of_each(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(30)
        family = self._family(store, examples)
        stable = stable_select(store, family, 50, examples, threshold=0.24)
        assert stable.iterations == [50, 100, 150, 200, 250]
        for sel in stable.per_checkpoint:
            assert stable.final.ids <= sel.ids
        assert len(stable.final.ids) <= min(stable.counts)
        assert stable.counts_std >= 0.0

    def test_missing_checkpoint_error(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(12)
        family = self._family(store, examples)
        with pytest.raises(MissingCheckpointError, match="available"):
            stable_select(store, family, 150, examples, threshold=0.24)

    def test_intersection_semantics(self, tmp_path):
        sets = [{"1", "2", "3"}, {"2", "3", "4"}, {"2", "3"}, {"2", "3", "5"},
                {"2", "3"}]
        assert set.intersection(*sets) == {"2", "3"}

    def test_monotone_in_checkpoint_count(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(30)
        family = self._family(store, examples)
        four = stable_select(store, family, 50, examples, 0.24,
                             n_checkpoints=4)
        five = stable_select(store, family, 50, examples, 0.24,
                             n_checkpoints=5)
        assert five.final.ids <= four.final.ids

    def test_threshold_shrinks_stable_selection(self, tmp_path):
        store = Store(tmp_path)
        examples = toy_examples(30)
        family = self._family(store, examples)
        lo = stable_select(store, family, 50, examples, 0.24)
        hi = stable_select(store, family, 50, examples, 0.5)
        assert hi.final.ids <= lo.final.ids
        for s_hi, s_lo in zip(hi.per_checkpoint, lo.per_checkpoint):
            assert s_hi.ids <= s_lo.ids


class TestEvaluateSelection:
    def test_identical_selection(self):
        ids = {f"p{i}" for i in range(20)}
        sel = SelectionSet("model", 0.24, ids)
        ref = SelectionSet("manual", None, ids)
        universe = ids | {f"n{i}" for i in range(30)}
        rep = evaluate_selection(sel, ref, universe)
        assert rep.metrics.accuracy == 1.0
        assert rep.iou == 1.0

    def test_report_arithmetic_on_large_selections(self):
        p = SelectionSet("cnn", 0.24, {f"p{i}" for i in range(1379)})
        r = SelectionSet("manual", None,
                         {f"p{i}" for i in range(792)}
                         | {f"r{i}" for i in range(404)})
        universe = {f"p{i}" for i in range(1379)} | r.ids | {
            f"x{i}" for i in range(16000)
        }
        rep = evaluate_selection(p, r, universe)
        assert rep.intersection == 792
        assert round(100 * rep.iou) == 44

    def test_disjoint_zero_precision(self):
        sel = SelectionSet("model", 0.24, {"a", "b"})
        ref = SelectionSet("manual", None, {"c", "d"})
        rep = evaluate_selection(sel, ref, {"a", "b", "c", "d", "e"})
        assert rep.metrics.precision == 0.0
        assert rep.iou == 0.0
