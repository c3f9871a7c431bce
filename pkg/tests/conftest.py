"""Shared builders for tests: schemas, corpora, annotation sets."""

from __future__ import annotations

import random

import pytest

from annoloop.model import (
    Annotation,
    AnnotationSet,
    ClassPayload,
    Document,
    LabelSchema,
    Provenance,
    ScorePayload,
    Span,
    TaskKind,
    spans_payload,
)


@pytest.fixture
def class_schema():
    return LabelSchema(TaskKind.DOC_CLASS, classes=("POS", "NEG", "NEU"))


@pytest.fixture
def binary_schema():
    return LabelSchema(TaskKind.DOC_CLASS, classes=("P", "N"))


@pytest.fixture
def span_schema():
    return LabelSchema(TaskKind.SPAN_LABEL, classes=("SKILL", "ORG"))


@pytest.fixture
def score_schema():
    return LabelSchema(TaskKind.PAIR_REGRESS, range_lo=0.0, range_hi=5.0)


def doc_ids(n: int) -> list[str]:
    return [f"d{i:03d}" for i in range(n)]


def make_docs(n: int, text_len: int = 80) -> dict[str, Document]:
    return {d: Document(d, "x" * text_len) for d in doc_ids(n)}


def class_set(annotator: str, values, ids=None) -> AnnotationSet:
    ids = list(ids) if ids is not None else doc_ids(len(values))
    return AnnotationSet.of(
        annotator,
        [Annotation(d, annotator, Provenance.HUMAN, ClassPayload(v)) for d, v in zip(ids, values)],
    )


def span_set(annotator: str, spans_by_doc: dict[str, list[Span]]) -> AnnotationSet:
    return AnnotationSet.of(
        annotator,
        [
            Annotation(d, annotator, Provenance.HUMAN, spans_payload(spans))
            for d, spans in spans_by_doc.items()
        ],
    )


def score_set(annotator: str, values, ids=None) -> AnnotationSet:
    ids = list(ids) if ids is not None else doc_ids(len(values))
    return AnnotationSet.of(
        annotator,
        [Annotation(d, annotator, Provenance.HUMAN, ScorePayload(v)) for d, v in zip(ids, values)],
    )


def random_spans(rng: random.Random, text_len: int, max_spans: int, labels) -> list[Span]:
    """Non-overlapping spans with random labels (touching allowed)."""
    k = rng.randint(0, max_spans)
    if k == 0:
        return []
    points = sorted(rng.sample(range(text_len + 1), 2 * k))
    spans = [Span(points[2 * i], points[2 * i + 1], rng.choice(labels)) for i in range(k)]
    # Occasionally make neighbours touch so end == start cases get exercised.
    for i in range(1, len(spans)):
        if rng.random() < 0.25:
            spans[i] = Span(spans[i - 1].end, spans[i].end, spans[i].label)
    return spans
