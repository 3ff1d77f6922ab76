"""Metrics, strata, confusion matrices, and the benchmark harness."""
import numpy as np
import pytest

from triagekit.evalmetrics import (
    LENGTH_STRATA,
    bench_inference,
    compute_metrics,
    confusion_matrix,
    macro_f1,
    stratified_f1,
    stratum_for,
)

ED, ID, OA, EIP, PN = range(5)


class TestComputeMetrics:
    def test_perfect_predictions(self):
        preds = [ED, ID, OA, EIP, PN]
        rep = compute_metrics(preds, preds)
        assert rep.accuracy == 1.0
        assert rep.macro_f1 == 1.0

    def test_hand_computed_two_class_case(self):
        # preds [A,A,B], gold [A,B,B]: class A P=0.5 R=1 F1=2/3; class B P=1 R=0.5 F1=2/3
        rep = compute_metrics([ED, ED, ID], [ED, ID, ID])
        assert rep.macro_f1 == pytest.approx(2 / 3)
        assert rep.accuracy == pytest.approx(2 / 3)
        assert rep.per_class["ED"].precision == pytest.approx(0.5)
        assert rep.per_class["ID"].recall == pytest.approx(0.5)

    def test_absent_class_excluded_from_macro(self):
        rep = compute_metrics([ED, ED], [ED, ED])
        # only ED observed; macro over the single active class
        assert rep.macro_f1 == 1.0
        assert rep.per_class["OA"].support == 0

    def test_zero_convention(self):
        # OA predicted but never gold: precision 0; support-0 recall 0
        rep = compute_metrics([OA, OA], [ED, ED])
        assert rep.per_class["OA"].precision == 0.0
        assert rep.per_class["ED"].recall == 0.0
        assert rep.macro_f1 == 0.0

    def test_label_permutation_invariance(self, rng):
        preds = rng.integers(0, 5, size=200)
        gold = rng.integers(0, 5, size=200)
        perm = rng.permutation(5)
        assert macro_f1([perm[p] for p in preds], [perm[g] for g in gold]) == (
            pytest.approx(macro_f1(preds, gold))
        )

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([], [])


class TestConfusion:
    def test_diagonal_for_perfect(self):
        cm = confusion_matrix([ED, OA, PN], [ED, OA, PN])
        assert np.trace(cm) == 3
        assert cm.sum() == 3

    def test_single_off_diagonal(self):
        cm = confusion_matrix([OA], [ED])
        assert cm[ED, OA] == 1
        assert cm.sum() == 1

    def test_row_sums_equal_support(self, rng):
        preds = rng.integers(0, 5, size=100)
        gold = rng.integers(0, 5, size=100)
        cm = confusion_matrix(preds, gold)
        rep = compute_metrics(preds, gold)
        for name, cls in rep.per_class.items():
            row = cm[["ED", "ID", "OA", "EIP", "PN"].index(name)]
            assert row.sum() == cls.support

    def test_accuracy_equals_trace_over_total(self, rng):
        preds = rng.integers(0, 5, size=77)
        gold = rng.integers(0, 5, size=77)
        cm = confusion_matrix(preds, gold)
        rep = compute_metrics(preds, gold)
        assert rep.accuracy == pytest.approx(np.trace(cm) / 77)


class TestStrata:
    def test_bounds(self):
        assert stratum_for(100).name == "short"
        assert stratum_for(128).name == "short"
        assert stratum_for(129).name == "medium"
        assert stratum_for(512).name == "medium"
        assert stratum_for(513).name == "long"
        assert stratum_for(4096).name == "long"
        assert stratum_for(4097).name == "extra_long"

    def test_strata_partition_positive_integers(self):
        for n in [1, 127, 128, 129, 511, 512, 513, 4095, 4096, 4097, 100000]:
            matches = [s for s in LENGTH_STRATA if s.contains(n)]
            assert len(matches) == 1

    def test_only_populated_strata_reported(self):
        out = stratified_f1([ED, ED], [ED, ED], [100, 90])
        assert set(out) == {"short"}

    def test_single_stratum_equals_global(self, rng):
        preds = rng.integers(0, 5, size=60)
        gold = rng.integers(0, 5, size=60)
        lengths = [200] * 60
        out = stratified_f1(preds, gold, lengths)
        assert out["medium"]["f1"] == pytest.approx(macro_f1(preds, gold))
        assert out["medium"]["count"] == 60

    def test_nonpositive_length_rejected(self):
        with pytest.raises(ValueError):
            stratified_f1([ED], [ED], [0])


class TestBench:
    def test_fake_timer_deterministic(self):
        ticks = iter(range(100))
        result = bench_inference(
            lambda inst: None, ["a", "b"], strategy="s",
            repetitions=3, timer=lambda: float(next(ticks)),
        )
        assert result.sd_seconds == 0.0
        assert result.mean_seconds == 1.0
        assert result.per_instance_mean == 0.5

    def test_sd_over_three_repetitions(self):
        times = iter([0.0, 1.0, 10.0, 13.0, 20.0, 21.0])
        result = bench_inference(
            lambda inst: None, ["x"], repetitions=3, timer=lambda: next(times),
        )
        assert result.repetitions == 3
        assert result.total_seconds == [1.0, 3.0, 1.0]
        assert result.sd_seconds == pytest.approx(np.std([1, 3, 1], ddof=1))

    def test_empty_instances_rejected(self):
        with pytest.raises(ValueError):
            bench_inference(lambda inst: None, [], repetitions=1)

    def test_warmup_not_timed(self):
        calls = []
        ticks = iter(np.arange(0.0, 50.0))

        def infer(inst):
            calls.append(inst)

        bench_inference(infer, ["a"], repetitions=1, timer=lambda: next(ticks))
        assert calls[0] == "a" and len(calls) == 2  # warm-up + one timed pass
