"""Curve bookkeeping, plateau detection, split drift, and resplitting."""

from __future__ import annotations

import math
import random

import pytest

from annoloop.errors import LoopError
from annoloop.monitor import (
    RESPLIT_WARNING,
    IterationRecord,
    LabelDistribution,
    SplitStatus,
    check_representativeness,
    detect_plateau,
    divergence,
    label_distribution,
    record_iteration,
    resplit,
)

from conftest import class_set, span_set
from annoloop.model import Span


def rec(iteration: int, size: int, value: float, metric: str = "f1_macro") -> IterationRecord:
    return IterationRecord(iteration, size, metric, value)


def curve_of(*values: float) -> list[IterationRecord]:
    return [rec(i + 1, (i + 1) * 100, v) for i, v in enumerate(values)]


class TestRecordIteration:
    def test_appends_in_order(self):
        curve = record_iteration([], rec(1, 100, 0.5))
        curve = record_iteration(curve, rec(2, 200, 0.6))
        assert [r.iteration for r in curve] == [1, 2]

    def test_first_must_be_one(self):
        with pytest.raises(LoopError) as exc:
            record_iteration([], rec(2, 100, 0.5))
        assert exc.value.code == "bad-iteration"

    def test_iterations_consecutive(self):
        curve = record_iteration([], rec(1, 100, 0.5))
        with pytest.raises(LoopError) as exc:
            record_iteration(curve, rec(3, 200, 0.6))
        assert exc.value.code == "bad-iteration"

    def test_sizes_strictly_increase(self):
        curve = record_iteration([], rec(1, 100, 0.5))
        with pytest.raises(LoopError) as exc:
            record_iteration(curve, rec(2, 100, 0.6))
        assert exc.value.code == "non-monotone-size"

    def test_metric_name_constant(self):
        curve = record_iteration([], rec(1, 100, 0.5))
        with pytest.raises(LoopError) as exc:
            record_iteration(curve, rec(2, 200, 0.6, metric="accuracy"))
        assert exc.value.code == "metric-mismatch"


class TestDetectPlateau:
    def test_flat_tail_fires(self):
        curve = curve_of(0.50, 0.62, 0.71, 0.74, 0.745, 0.748)
        status = detect_plateau(curve, epsilon=0.01, window=2)
        assert status.plateaued
        assert status.at_iteration == 5

    def test_late_jump_blocks(self):
        curve = curve_of(0.50, 0.62, 0.71, 0.74, 0.745, 0.80)
        assert not detect_plateau(curve, epsilon=0.01, window=2).plateaued

    def test_window_one_checks_last_step_only(self):
        curve = curve_of(0.1, 0.5, 0.501)
        status = detect_plateau(curve, epsilon=0.01, window=1)
        assert status.plateaued
        assert status.at_iteration == 3

    def test_drop_counts_as_no_improvement(self):
        curve = curve_of(0.5, 0.6, 0.55, 0.551)
        assert detect_plateau(curve, epsilon=0.01, window=2).plateaued

    def test_improvement_equal_to_epsilon_blocks(self):
        curve = curve_of(0.5, 0.6, 0.61)
        assert not detect_plateau(curve, epsilon=0.01, window=1).plateaued

    def test_monotone_in_epsilon(self):
        rng = random.Random(31)
        checked = 0
        for _ in range(100):
            curve = curve_of(*(rng.uniform(0, 1) for _ in range(rng.randint(4, 10))))
            eps_small = rng.uniform(0.001, 0.2)
            eps_large = eps_small + rng.uniform(0.001, 0.5)
            window = rng.randint(1, 3)
            if detect_plateau(curve, eps_small, window).plateaued:
                assert detect_plateau(curve, eps_large, window).plateaued
                checked += 1
        assert checked > 10

    def test_curve_too_short(self):
        with pytest.raises(LoopError) as exc:
            detect_plateau(curve_of(0.5, 0.6), epsilon=0.01, window=2)
        assert exc.value.code == "curve-too-short"

    def test_bad_parameters(self):
        curve = curve_of(0.5, 0.6, 0.7)
        with pytest.raises(LoopError):
            detect_plateau(curve, epsilon=0.0, window=2)
        with pytest.raises(LoopError):
            detect_plateau(curve, epsilon=0.01, window=0)


class TestLabelDistribution:
    def test_class_counts(self, class_schema):
        dist = label_distribution(class_set("ana", ["POS", "POS", "NEG", "NEU"]), class_schema)
        assert dist.frequencies == {"NEG": 0.25, "NEU": 0.25, "POS": 0.5}

    def test_span_counts_spans_not_docs(self, span_schema):
        sets = span_set(
            "ana",
            {"d1": [Span(0, 2, "SKILL"), Span(3, 5, "SKILL"), Span(6, 8, "ORG")], "d2": []},
        )
        dist = label_distribution(sets, span_schema)
        assert dist.frequencies == {"ORG": pytest.approx(1 / 3), "SKILL": pytest.approx(2 / 3)}

    def test_multiple_sets_pool(self, class_schema):
        sets = [class_set("ana", ["POS"]), class_set("ben", ["NEG"], ids=["d900"])]
        dist = label_distribution(sets, class_schema)
        assert dist.frequencies == {"NEG": 0.5, "POS": 0.5}

    def test_regression_task_rejected(self, score_schema):
        with pytest.raises(LoopError) as exc:
            label_distribution(class_set("ana", ["POS"]), score_schema)
        assert exc.value.code == "wrong-kind"

    def test_no_labels_rejected(self, span_schema):
        with pytest.raises(LoopError) as exc:
            label_distribution(span_set("ana", {"d1": []}), span_schema)
        assert exc.value.code == "empty-input"

    def test_distribution_must_sum_to_one(self):
        with pytest.raises(LoopError):
            LabelDistribution({"A": 0.5, "B": 0.4})


class TestDivergence:
    def d(self, **freq):
        return LabelDistribution(freq)

    def test_fixture(self):
        assert divergence(self.d(A=0.5, B=0.5), self.d(A=0.8, B=0.2)) == pytest.approx(0.3)

    def test_identical_is_zero(self):
        assert divergence(self.d(A=0.3, B=0.7), self.d(A=0.3, B=0.7)) == 0.0

    def test_disjoint_support_is_one(self):
        assert divergence(self.d(A=1.0), self.d(B=1.0)) == pytest.approx(1.0)

    def test_metric_properties(self):
        rng = random.Random(17)

        def random_dist():
            weights = [rng.uniform(0.01, 1) for _ in range(4)]
            total = sum(weights)
            return LabelDistribution({c: w / total for c, w in zip("ABCD", weights)})

        for _ in range(100):
            p, q, r = random_dist(), random_dist(), random_dist()
            assert divergence(p, q) == pytest.approx(divergence(q, p))
            assert 0.0 <= divergence(p, q) <= 1.0
            assert divergence(p, r) <= divergence(p, q) + divergence(q, r) + 1e-12


class TestRepresentativeness:
    def test_strictly_above_threshold_flags(self):
        # 0.5 is exact in floats, so the boundary comparison is meaningful.
        p = LabelDistribution({"A": 1.0})
        q = LabelDistribution({"A": 0.5, "B": 0.5})
        assert check_representativeness(p, q, threshold=0.25).status is SplitStatus.CONSIDER_RESPLIT
        assert check_representativeness(p, q, threshold=0.5).status is SplitStatus.OK

    def test_divergence_reported(self):
        p = LabelDistribution({"A": 1.0})
        q = LabelDistribution({"A": 1.0})
        report = check_representativeness(p, q, threshold=0.1)
        assert report.divergence == 0.0
        assert report.status is SplitStatus.OK

    def test_bad_threshold(self):
        p = LabelDistribution({"A": 1.0})
        with pytest.raises(LoopError) as exc:
            check_representativeness(p, p, threshold=0.0)
        assert exc.value.code == "bad-threshold"


class TestResplit:
    def pool(self, sizes: dict[str, int]):
        labels = {}
        for cls, count in sizes.items():
            for i in range(count):
                labels[f"{cls}{i:03d}"] = cls
        return sorted(labels), labels

    def test_partitions_pool(self):
        ids, labels = self.pool({"A": 30, "B": 20})
        result = resplit(ids, 0.2, seed=1, stratified=True, labels=labels)
        assert sorted(result.train_ids + result.test_ids) == ids
        assert not set(result.train_ids) & set(result.test_ids)

    def test_stratified_within_one_of_proportion(self):
        rng = random.Random(23)
        for _ in range(50):
            sizes = {c: rng.randint(2, 40) for c in "ABC"}
            ids, labels = self.pool(sizes)
            fraction = rng.choice((0.1, 0.2, 0.25, 0.3, 0.5))
            result = resplit(ids, fraction, seed=rng.randint(0, 999), stratified=True, labels=labels)
            assert len(result.test_ids) == round(fraction * len(ids))
            for cls, count in sizes.items():
                in_test = sum(1 for d in result.test_ids if labels[d] == cls)
                assert abs(in_test - fraction * count) <= 1.0

    def test_unstratified_sizes(self):
        ids, _ = self.pool({"A": 10})
        result = resplit(ids, 0.3, seed=0, stratified=False)
        assert len(result.test_ids) == 3
        assert len(result.train_ids) == 7

    def test_deterministic(self):
        ids, labels = self.pool({"A": 12, "B": 8})
        a = resplit(ids, 0.25, seed=7, stratified=True, labels=labels)
        b = resplit(ids, 0.25, seed=7, stratified=True, labels=labels)
        assert a == b

    def test_seed_matters(self):
        ids, labels = self.pool({"A": 40, "B": 40})
        a = resplit(ids, 0.25, seed=1, stratified=True, labels=labels)
        b = resplit(ids, 0.25, seed=2, stratified=True, labels=labels)
        assert a.test_ids != b.test_ids

    def test_warning_always_attached(self):
        ids, labels = self.pool({"A": 10})
        for stratified in (False, True):
            result = resplit(ids, 0.2, seed=0, stratified=stratified, labels=labels)
            assert result.warning == RESPLIT_WARNING

    def test_degenerate_fraction_rejected(self):
        ids, _ = self.pool({"A": 10})
        with pytest.raises(LoopError) as exc:
            resplit(ids, 0.01, seed=0, stratified=False)
        assert exc.value.code == "bad-split"
        with pytest.raises(LoopError):
            resplit(ids, 1.5, seed=0, stratified=False)

    def test_missing_labels_rejected(self):
        ids, labels = self.pool({"A": 6})
        del labels[ids[0]]
        with pytest.raises(LoopError) as exc:
            resplit(ids, 0.5, seed=0, stratified=True, labels=labels)
        assert exc.value.code == "missing-labels"

    def test_declared_class_with_no_docs_rejected(self):
        ids, labels = self.pool({"A": 6})
        with pytest.raises(LoopError) as exc:
            resplit(ids, 0.5, seed=0, stratified=True, labels=labels, classes=("A", "B"))
        assert exc.value.code == "empty-class"
