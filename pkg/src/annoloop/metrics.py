"""Model-evaluation metrics against annotated gold data.

Classification: accuracy and precision/recall/F1 with micro, macro, and
per-class aggregation. Span tasks: entity-level F1 with the same exact
matching rule the agreement module uses. Regression: Pearson, Spearman
(average ranks on ties), and RMSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

from .agreement import class_values, f1_value, shared_doc_ids, span_f1_stats, span_sets
from .errors import LoopError
from .model import AnnotationSet, LabelSchema, TaskKind


class Aggregation(str, Enum):
    PER_CLASS = "per_class"
    MICRO = "micro"
    MACRO = "macro"


@dataclass(frozen=True)
class EvalReport:
    """One metric value plus optional per-class breakdown.

    `support` is the number of compared items (documents or score pairs).
    Classes whose precision or recall has a zero denominator are excluded
    from macro averages and listed in `undefined_classes`.
    """

    metric: str
    value: float
    support: int
    precision: float | None = None
    recall: float | None = None
    per_class: Mapping[str, float] | None = None
    undefined_classes: tuple[str, ...] = ()


def _check_doc_class(schema: LabelSchema, op: str) -> None:
    if schema.task_kind is not TaskKind.DOC_CLASS:
        raise LoopError("wrong-kind", f"{op} applies to doc_class tasks only")


def accuracy(gold: AnnotationSet, pred: AnnotationSet, schema: LabelSchema) -> EvalReport:
    _check_doc_class(schema, "accuracy")
    doc_ids = shared_doc_ids(gold, pred)
    g = class_values(gold, doc_ids)
    p = class_values(pred, doc_ids)
    hits = sum(1 for x, y in zip(g, p) if x == y)
    return EvalReport("accuracy", hits / len(doc_ids), len(doc_ids))


def precision_recall_f1(
    gold: AnnotationSet,
    pred: AnnotationSet,
    schema: LabelSchema,
    aggregation: Aggregation = Aggregation.MACRO,
) -> EvalReport:
    _check_doc_class(schema, "precision_recall_f1")
    doc_ids = shared_doc_ids(gold, pred)
    g = class_values(gold, doc_ids)
    p = class_values(pred, doc_ids)
    labels = sorted(set(g) | set(p))

    counts = {label: [0, 0, 0] for label in labels}  # TP, FP, FN
    for x, y in zip(g, p):
        if x == y:
            counts[x][0] += 1
        else:
            counts[y][1] += 1
            counts[x][2] += 1

    per_class: dict[str, float] = {}
    undefined: list[str] = []
    precisions: list[float] = []
    recalls: list[float] = []
    for label in labels:
        tp, fp, fn = counts[label]
        if tp + fp == 0 or tp + fn == 0:
            undefined.append(label)
            continue
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        per_class[label] = f1_value(tp, tp + fn, tp + fp)
        precisions.append(precision)
        recalls.append(recall)

    aggregation = Aggregation(aggregation)
    if aggregation is Aggregation.MICRO:
        tp = sum(c[0] for c in counts.values())
        fp = sum(c[1] for c in counts.values())
        fn = sum(c[2] for c in counts.values())
        return EvalReport(
            "f1_micro",
            f1_value(tp, tp + fn, tp + fp),
            len(doc_ids),
            precision=tp / (tp + fp) if tp + fp else 0.0,
            recall=tp / (tp + fn) if tp + fn else 0.0,
            per_class=per_class,
            undefined_classes=tuple(undefined),
        )

    if not per_class:
        raise LoopError("f1-undefined", "every class has a zero denominator")
    macro_f1 = sum(per_class.values()) / len(per_class)
    name = "f1_macro" if aggregation is Aggregation.MACRO else "f1_per_class"
    return EvalReport(
        name,
        macro_f1,
        len(doc_ids),
        precision=sum(precisions) / len(precisions),
        recall=sum(recalls) / len(recalls),
        per_class=per_class,
        undefined_classes=tuple(undefined),
    )


def entity_f1(gold: AnnotationSet, pred: AnnotationSet, schema: LabelSchema) -> EvalReport:
    if schema.task_kind is not TaskKind.SPAN_LABEL:
        raise LoopError("wrong-kind", "entity_f1 applies to span_label tasks only")
    doc_ids = shared_doc_ids(gold, pred)
    stats = span_f1_stats(span_sets(gold, doc_ids), span_sets(pred, doc_ids))
    if stats.n_gold == 0 and stats.n_pred == 0:
        raise LoopError("f1-undefined", "both sides have zero spans")
    per_class = {label: f1_value(m, g, p) for label, (m, g, p) in sorted(stats.per_label.items())}
    return EvalReport(
        "entity_f1",
        f1_value(stats.matched, stats.n_gold, stats.n_pred),
        len(doc_ids),
        precision=stats.precision(),
        recall=stats.recall(),
        per_class=per_class,
    )


def _check_vectors(gold: Sequence[float], pred: Sequence[float], minimum: int) -> None:
    if len(gold) != len(pred):
        raise LoopError("length-mismatch", f"gold has {len(gold)} scores, predictions {len(pred)}")
    if len(gold) < minimum:
        raise LoopError("too-few-items", f"need at least {minimum} score pairs")


def _pearson_value(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0.0 or vy == 0.0:
        raise LoopError("correlation-undefined", "zero variance on one side")
    return cov / math.sqrt(vx * vy)


def pearson(gold_scores: Sequence[float], pred_scores: Sequence[float]) -> EvalReport:
    _check_vectors(gold_scores, pred_scores, 2)
    return EvalReport("pearson", _pearson_value(gold_scores, pred_scores), len(gold_scores))


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their rank positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(gold_scores: Sequence[float], pred_scores: Sequence[float]) -> EvalReport:
    _check_vectors(gold_scores, pred_scores, 2)
    value = _pearson_value(average_ranks(gold_scores), average_ranks(pred_scores))
    return EvalReport("spearman", value, len(gold_scores))


def rmse(gold_scores: Sequence[float], pred_scores: Sequence[float]) -> EvalReport:
    _check_vectors(gold_scores, pred_scores, 1)
    mse = sum((g - p) ** 2 for g, p in zip(gold_scores, pred_scores)) / len(gold_scores)
    return EvalReport("rmse", math.sqrt(mse), len(gold_scores))


def eval_report_to_dict(report: EvalReport) -> dict[str, Any]:
    record: dict[str, Any] = {
        "metric": report.metric,
        "value": report.value,
        "support": report.support,
    }
    if report.precision is not None:
        record["precision"] = report.precision
    if report.recall is not None:
        record["recall"] = report.recall
    if report.per_class is not None:
        record["per_class"] = dict(sorted(report.per_class.items()))
    if report.undefined_classes:
        record["undefined_classes"] = list(report.undefined_classes)
    return record
