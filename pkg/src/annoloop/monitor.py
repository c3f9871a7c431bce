"""Learning-curve bookkeeping, plateau detection, and split monitoring.

The curve is an append-only list of per-iteration records. Plateau rule:
the last `window` per-step improvements are each below epsilon. Train and
test label distributions are compared by total variation distance; a
resplit is an explicit operation that always carries the warning that
earlier evaluations are no longer comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import LoopError
from .model import AnnotationSet, ClassPayload, LabelSchema, SpansPayload, TaskKind

RESPLIT_WARNING = (
    "resplit invalidates earlier results: all previous model evaluations were "
    "measured against the old test set and need to be repeated"
)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cumulative_train_size: int
    metric_name: str
    metric_value: float
    agreement_value: float | None = None
    notes: str | None = None

    def __post_init__(self):
        if self.iteration < 1:
            raise LoopError("bad-record", f"iteration must be >= 1, got {self.iteration}")
        if self.cumulative_train_size < 0:
            raise LoopError("bad-record", "cumulative_train_size must be >= 0")
        if not self.metric_name:
            raise LoopError("bad-record", "metric_name must be non-empty")


def record_iteration(curve: Sequence[IterationRecord], rec: IterationRecord) -> list[IterationRecord]:
    """Append one record; iterations are consecutive from 1 and sizes grow."""
    if not curve:
        if rec.iteration != 1:
            raise LoopError("bad-iteration", f"first record must be iteration 1, got {rec.iteration}")
        return [rec]
    last = curve[-1]
    if rec.iteration != last.iteration + 1:
        raise LoopError("bad-iteration", f"expected iteration {last.iteration + 1}, got {rec.iteration}")
    if rec.cumulative_train_size <= last.cumulative_train_size:
        raise LoopError(
            "non-monotone-size",
            f"cumulative size {rec.cumulative_train_size} does not exceed {last.cumulative_train_size}",
        )
    if rec.metric_name != last.metric_name:
        raise LoopError("metric-mismatch", f"curve tracks {last.metric_name!r}, got {rec.metric_name!r}")
    return list(curve) + [rec]


@dataclass(frozen=True)
class PlateauStatus:
    plateaued: bool
    at_iteration: int | None


def detect_plateau(curve: Sequence[IterationRecord], epsilon: float, window: int) -> PlateauStatus:
    """Plateaued when each of the last `window` improvements is < epsilon.

    `at_iteration` is the first iteration of that qualifying window.
    """
    if epsilon <= 0:
        raise LoopError("bad-epsilon", "epsilon must be > 0")
    if window < 1:
        raise LoopError("bad-window", "window must be >= 1")
    if len(curve) < window + 1:
        raise LoopError("curve-too-short", f"need at least {window + 1} records, have {len(curve)}")
    values = [r.metric_value for r in curve]
    for i in range(len(values) - window, len(values)):
        if values[i] - values[i - 1] >= epsilon:
            return PlateauStatus(False, None)
    return PlateauStatus(True, curve[len(curve) - window].iteration)


@dataclass(frozen=True)
class LabelDistribution:
    frequencies: Mapping[str, float]

    def __post_init__(self):
        if not self.frequencies:
            raise LoopError("bad-distribution", "distribution must not be empty")
        if any(f < 0 for f in self.frequencies.values()):
            raise LoopError("bad-distribution", "frequencies must be >= 0")
        total = sum(self.frequencies.values())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise LoopError("bad-distribution", f"frequencies sum to {total}, not 1")


def label_distribution(
    sets: AnnotationSet | Sequence[AnnotationSet], schema: LabelSchema
) -> LabelDistribution:
    """Relative class frequencies; span tasks count spans per label."""
    if isinstance(sets, AnnotationSet):
        sets = [sets]
    counts: dict[str, int] = {}
    for aset in sets:
        for ann in aset.annotations.values():
            payload = ann.payload
            if schema.task_kind is TaskKind.DOC_CLASS:
                if not isinstance(payload, ClassPayload):
                    raise LoopError("wrong-kind", f"non-class payload on {ann.doc_id!r}")
                counts[payload.value] = counts.get(payload.value, 0) + 1
            elif schema.task_kind is TaskKind.SPAN_LABEL:
                if not isinstance(payload, SpansPayload):
                    raise LoopError("wrong-kind", f"non-spans payload on {ann.doc_id!r}")
                for span in payload.spans:
                    counts[span.label] = counts.get(span.label, 0) + 1
            else:
                raise LoopError("wrong-kind", "label_distribution applies to class and span tasks only")
    total = sum(counts.values())
    if total == 0:
        raise LoopError("empty-input", "no labeled items to count")
    return LabelDistribution({label: c / total for label, c in sorted(counts.items())})


def divergence(p: LabelDistribution, q: LabelDistribution) -> float:
    """Total variation distance: half the L1 gap, in [0, 1]."""
    labels = set(p.frequencies) | set(q.frequencies)
    return 0.5 * sum(abs(p.frequencies.get(l, 0.0) - q.frequencies.get(l, 0.0)) for l in labels)


class SplitStatus(str, Enum):
    OK = "ok"
    CONSIDER_RESPLIT = "consider_resplit"


@dataclass(frozen=True)
class RepresentativenessReport:
    status: SplitStatus
    divergence: float


def check_representativeness(
    train_dist: LabelDistribution, test_dist: LabelDistribution, threshold: float
) -> RepresentativenessReport:
    if not 0 < threshold <= 1:
        raise LoopError("bad-threshold", f"threshold must be in (0, 1], got {threshold}")
    value = divergence(train_dist, test_dist)
    status = SplitStatus.CONSIDER_RESPLIT if value > threshold else SplitStatus.OK
    return RepresentativenessReport(status, value)


@dataclass(frozen=True)
class SplitResult:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    warning: str


def resplit(
    doc_ids: Sequence[str],
    test_fraction: float,
    seed: int,
    stratified: bool,
    labels: Mapping[str, str] | None = None,
    classes: Sequence[str] | None = None,
) -> SplitResult:
    """Split a labeled pool into train and test ids.

    Stratified mode uses largest-remainder allocation so each class lands
    in the test set within one document of its pool proportion. The result
    always carries the evaluation-invalidation warning.
    """
    import random

    pool = sorted(doc_ids)
    if len(pool) != len(set(pool)):
        raise LoopError("bad-record", "duplicate doc ids in pool")
    n = len(pool)
    if n < 2:
        raise LoopError("empty-input", "pool must have at least two documents")
    if not 0 < test_fraction < 1:
        raise LoopError("bad-split", f"test fraction must be in (0, 1), got {test_fraction}")
    target = round(test_fraction * n)
    if target == 0 or target == n:
        raise LoopError("bad-split", f"fraction {test_fraction} leaves an empty split for {n} documents")

    rng = random.Random(seed)
    if not stratified:
        shuffled = list(pool)
        rng.shuffle(shuffled)
        test = sorted(shuffled[:target])
        train = sorted(shuffled[target:])
        return SplitResult(tuple(train), tuple(test), RESPLIT_WARNING)

    if labels is None:
        raise LoopError("missing-labels", "stratified resplit needs a label per document")
    unlabeled = [d for d in pool if d not in labels]
    if unlabeled:
        raise LoopError("missing-labels", f"no label for {unlabeled[:5]}")
    by_class: dict[str, list[str]] = {}
    for doc_id in pool:
        by_class.setdefault(labels[doc_id], []).append(doc_id)
    if classes is not None:
        empty = sorted(set(classes) - set(by_class))
        if empty:
            raise LoopError("empty-class", f"classes with no documents: {empty}")

    # Largest-remainder allocation of `target` test slots across classes.
    ideals = {label: test_fraction * len(members) for label, members in by_class.items()}
    alloc = {label: math.floor(v) for label, v in ideals.items()}
    remainder = target - sum(alloc.values())
    order = sorted(by_class, key=lambda l: (alloc[l] - ideals[l], l))
    for label in order[:remainder]:
        alloc[label] += 1

    test: list[str] = []
    train: list[str] = []
    for label in sorted(by_class):
        members = list(by_class[label])
        rng.shuffle(members)
        take = min(alloc[label], len(members))
        test.extend(members[:take])
        train.extend(members[take:])
    return SplitResult(tuple(sorted(train)), tuple(sorted(test)), RESPLIT_WARNING)
