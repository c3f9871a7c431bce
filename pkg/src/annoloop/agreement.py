"""Inter-annotator agreement: Cohen's kappa, Fleiss' kappa, pairwise span F1.

Kappa metrics correct for chance agreement; a degenerate instance where
expected agreement is 1 raises instead of returning a sentinel, so
monitoring curves never silently absorb meaningless values.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Hashable, Mapping, Sequence

from .errors import LoopError
from .model import (
    AnnotationSet,
    ClassPayload,
    LabelSchema,
    Span,
    SpansPayload,
    TaskKind,
)


class AgreementMetric(str, Enum):
    COHEN_KAPPA = "cohen_kappa"
    FLEISS_KAPPA = "fleiss_kappa"
    PAIRWISE_F1 = "pairwise_f1"


@dataclass(frozen=True)
class AgreementReport:
    metric: AgreementMetric
    value: float
    n_items: int
    observed_agreement: float | None = None
    expected_agreement: float | None = None
    per_class: Mapping[str, float] | None = None


def class_values(aset: AnnotationSet, doc_ids: Sequence[str]) -> list[str]:
    values = []
    for doc_id in doc_ids:
        payload = aset.annotations[doc_id].payload
        if not isinstance(payload, ClassPayload):
            raise LoopError("wrong-kind", f"annotator {aset.annotator!r} has a non-class payload on {doc_id!r}")
        values.append(payload.value)
    return values


def span_sets(aset: AnnotationSet, doc_ids: Sequence[str]) -> dict[str, frozenset[Span]]:
    by_doc = {}
    for doc_id in doc_ids:
        payload = aset.annotations[doc_id].payload
        if not isinstance(payload, SpansPayload):
            raise LoopError("wrong-kind", f"annotator {aset.annotator!r} has a non-spans payload on {doc_id!r}")
        by_doc[doc_id] = frozenset(payload.spans)
    return by_doc


def shared_doc_ids(*sets: AnnotationSet) -> list[str]:
    first = set(sets[0].doc_ids)
    for aset in sets[1:]:
        if set(aset.doc_ids) != first:
            missing = sorted(first - set(aset.doc_ids))
            extra = sorted(set(aset.doc_ids) - first)
            raise LoopError(
                "coverage-mismatch",
                f"annotator {aset.annotator!r} missing {missing}, extra {extra}",
            )
    if not first:
        raise LoopError("empty-input", "agreement needs at least one item")
    return sorted(first)


def _cohen(values_a: Sequence[Hashable], values_b: Sequence[Hashable]) -> tuple[float, float]:
    """Observed and expected agreement for two raters."""
    n = len(values_a)
    observed = sum(1 for x, y in zip(values_a, values_b) if x == y) / n
    labels = set(values_a) | set(values_b)
    expected = sum((values_a.count(l) / n) * (values_b.count(l) / n) for l in labels)
    return observed, expected


def cohen_kappa(set_a: AnnotationSet, set_b: AnnotationSet, schema: LabelSchema) -> AgreementReport:
    if schema.task_kind is not TaskKind.DOC_CLASS:
        raise LoopError("wrong-kind", "cohen_kappa applies to doc_class tasks only")
    doc_ids = shared_doc_ids(set_a, set_b)
    values_a = class_values(set_a, doc_ids)
    values_b = class_values(set_b, doc_ids)

    observed, expected = _cohen(values_a, values_b)
    if expected == 1.0:
        raise LoopError("kappa-undefined", "kappa undefined (degenerate marginals)")
    value = (observed - expected) / (1.0 - expected)

    per_class: dict[str, float] = {}
    for label in sorted(set(values_a) | set(values_b)):
        collapsed_a = [v == label for v in values_a]
        collapsed_b = [v == label for v in values_b]
        o, e = _cohen(collapsed_a, collapsed_b)
        if e < 1.0:
            per_class[label] = (o - e) / (1.0 - e)

    return AgreementReport(
        AgreementMetric.COHEN_KAPPA,
        value,
        len(doc_ids),
        observed_agreement=observed,
        expected_agreement=expected,
        per_class=per_class,
    )


def _fleiss(rows: Sequence[Sequence[Hashable]]) -> tuple[float, float]:
    """Mean per-item agreement and pooled expected agreement."""
    n = len(rows)
    r = len(rows[0])
    categories: dict[Hashable, int] = {}
    p_bar = 0.0
    for row in rows:
        counts: dict[Hashable, int] = {}
        for v in row:
            counts[v] = counts.get(v, 0) + 1
            categories[v] = categories.get(v, 0) + 1
        p_bar += (sum(c * c for c in counts.values()) - r) / (r * (r - 1))
    p_bar /= n
    p_e = sum((c / (n * r)) ** 2 for c in categories.values())
    return p_bar, p_e


def fleiss_kappa(sets: Sequence[AnnotationSet], schema: LabelSchema) -> AgreementReport:
    if schema.task_kind is not TaskKind.DOC_CLASS:
        raise LoopError("wrong-kind", "fleiss_kappa applies to doc_class tasks only")
    if len(sets) < 2:
        raise LoopError("too-few-raters", "fleiss_kappa needs at least two annotation sets")
    doc_ids = shared_doc_ids(*sets)
    columns = [class_values(s, doc_ids) for s in sets]
    rows = [tuple(col[i] for col in columns) for i in range(len(doc_ids))]

    p_bar, p_e = _fleiss(rows)
    if p_e == 1.0:
        raise LoopError("kappa-undefined", "kappa undefined (single pooled category)")
    value = (p_bar - p_e) / (1.0 - p_e)

    per_class: dict[str, float] = {}
    for label in sorted({v for row in rows for v in row}):
        o, e = _fleiss([[v == label for v in row] for row in rows])
        if e < 1.0:
            per_class[label] = (o - e) / (1.0 - e)

    return AgreementReport(
        AgreementMetric.FLEISS_KAPPA,
        value,
        len(doc_ids),
        observed_agreement=p_bar,
        expected_agreement=p_e,
        per_class=per_class,
    )


@dataclass(frozen=True)
class F1Stats:
    """Exact-match counts for span scoring, overall and per label."""

    matched: int
    n_gold: int
    n_pred: int
    per_label: Mapping[str, tuple[int, int, int]]

    def precision(self) -> float:
        return self.matched / self.n_pred if self.n_pred else 0.0

    def recall(self) -> float:
        return self.matched / self.n_gold if self.n_gold else 0.0


def f1_value(matched: int, n_gold: int, n_pred: int) -> float:
    # Integer form of 2PR/(P+R): one correctly-rounded division, so
    # identities like micro-F1 == accuracy hold bit for bit.
    if n_gold + n_pred == 0:
        return 0.0
    return 2 * matched / (n_gold + n_pred)


def span_f1_stats(
    gold_by_doc: Mapping[str, frozenset[Span]],
    pred_by_doc: Mapping[str, frozenset[Span]],
) -> F1Stats:
    """Count exact (start, end, label) matches per document.

    Shared by inter-annotator F1 and model evaluation so the two report
    identical values on identical inputs.
    """
    matched = n_gold = n_pred = 0
    per_label: dict[str, list[int]] = {}
    for doc_id, gold in gold_by_doc.items():
        pred = pred_by_doc[doc_id]
        hits = gold & pred
        matched += len(hits)
        n_gold += len(gold)
        n_pred += len(pred)
        for span in gold:
            per_label.setdefault(span.label, [0, 0, 0])[1] += 1
        for span in pred:
            per_label.setdefault(span.label, [0, 0, 0])[2] += 1
        for span in hits:
            per_label[span.label][0] += 1
    return F1Stats(matched, n_gold, n_pred, {l: tuple(c) for l, c in per_label.items()})


def pairwise_f1(gold: AnnotationSet, pred: AnnotationSet, schema: LabelSchema) -> AgreementReport:
    if schema.task_kind is not TaskKind.SPAN_LABEL:
        raise LoopError("wrong-kind", "pairwise_f1 applies to span_label tasks only")
    doc_ids = shared_doc_ids(gold, pred)
    stats = span_f1_stats(span_sets(gold, doc_ids), span_sets(pred, doc_ids))
    if stats.n_gold == 0 and stats.n_pred == 0:
        raise LoopError("f1-undefined", "both sides have zero spans")
    per_class = {
        label: f1_value(m, g, p) for label, (m, g, p) in sorted(stats.per_label.items())
    }
    return AgreementReport(
        AgreementMetric.PAIRWISE_F1,
        f1_value(stats.matched, stats.n_gold, stats.n_pred),
        len(doc_ids),
        per_class=per_class,
    )


def report_to_dict(report: AgreementReport) -> dict[str, Any]:
    record: dict[str, Any] = {
        "metric": report.metric.value,
        "value": report.value,
        "n_items": report.n_items,
    }
    if report.observed_agreement is not None:
        record["observed_agreement"] = report.observed_agreement
    if report.expected_agreement is not None:
        record["expected_agreement"] = report.expected_agreement
    if report.per_class is not None:
        record["per_class"] = dict(sorted(report.per_class.items()))
    return record
