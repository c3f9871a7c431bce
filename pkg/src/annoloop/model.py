"""Domain types, schema validation, and wire-format (de)serialization.

All types are immutable values; validation is pure and reports violations as
data rather than raising, so callers can surface every problem at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import LoopError

# Annotator ids used by the toolkit itself; a project roster may not use them.
RESERVED_ANNOTATORS = ("weak", "model", "consensus")


class TaskKind(str, Enum):
    DOC_CLASS = "doc_class"
    SPAN_LABEL = "span_label"
    PAIR_REGRESS = "pair_regress"


class Provenance(str, Enum):
    HUMAN = "human"
    MODEL = "model"
    WEAK = "weak"
    RESOLVED = "resolved"


@dataclass(frozen=True)
class LabelSchema:
    """Task definition: what counts as a valid label payload.

    Classification tasks (doc_class, span_label) carry an ordered class list;
    regression tasks (pair_regress) carry a closed numeric range.
    """

    task_kind: TaskKind
    classes: tuple[str, ...] = ()
    range_lo: float | None = None
    range_hi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.task_kind is TaskKind.PAIR_REGRESS:
            if self.classes:
                raise LoopError("bad-schema", "pair_regress schema takes no classes")
            if self.range_lo is None or self.range_hi is None:
                raise LoopError("bad-schema", "pair_regress schema requires range_lo and range_hi")
            if not self.range_lo < self.range_hi:
                raise LoopError("bad-schema", f"range_lo must be < range_hi, got [{self.range_lo}, {self.range_hi}]")
        else:
            if self.range_lo is not None or self.range_hi is not None:
                raise LoopError("bad-schema", f"{self.task_kind.value} schema takes no numeric range")
            if not self.classes:
                raise LoopError("bad-schema", "classification schema requires at least one class")
            if any(not c for c in self.classes):
                raise LoopError("bad-schema", "class names must be non-empty")
            if len(set(self.classes)) != len(self.classes):
                raise LoopError("bad-schema", "class names must be distinct")


@dataclass(frozen=True)
class Document:
    """One annotation unit. pair_regress documents carry both texts."""

    id: str
    text: str
    text_b: str | None = None
    meta: Mapping[str, Any] | None = None


@dataclass(frozen=True, order=True)
class Span:
    """Labeled character range, start inclusive, end exclusive."""

    start: int
    end: int
    label: str


@dataclass(frozen=True)
class ClassPayload:
    value: str


@dataclass(frozen=True)
class SpansPayload:
    spans: tuple[Span, ...]


@dataclass(frozen=True)
class ScorePayload:
    value: float


Payload = ClassPayload | SpansPayload | ScorePayload


def spans_payload(spans: Iterable[Span]) -> SpansPayload:
    """Build a span payload in canonical (sorted) order."""
    return SpansPayload(tuple(sorted(spans)))


@dataclass(frozen=True)
class Annotation:
    """One annotator's payload for one document, with provenance."""

    doc_id: str
    annotator: str
    provenance: Provenance
    payload: Payload


@dataclass(frozen=True)
class AnnotationSet:
    """One annotator's annotations, at most one per document."""

    annotator: str
    annotations: Mapping[str, Annotation] = field(default_factory=dict)

    def __post_init__(self):
        for doc_id, ann in self.annotations.items():
            if ann.doc_id != doc_id:
                raise LoopError("bad-annotation-set", f"annotation keyed {doc_id!r} carries doc_id {ann.doc_id!r}")
            if ann.annotator != self.annotator:
                raise LoopError(
                    "bad-annotation-set",
                    f"annotation for {doc_id!r} by {ann.annotator!r} in set of {self.annotator!r}",
                )

    @classmethod
    def of(cls, annotator: str, annotations: Iterable[Annotation]) -> AnnotationSet:
        """Build a set from loose annotations; duplicate doc_ids are rejected."""
        by_doc: dict[str, Annotation] = {}
        for ann in annotations:
            if ann.doc_id in by_doc:
                raise LoopError("bad-annotation-set", f"duplicate annotation for doc {ann.doc_id!r}")
            by_doc[ann.doc_id] = ann
        return cls(annotator, {k: by_doc[k] for k in sorted(by_doc)})

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.annotations))


@dataclass(frozen=True)
class ProjectManifest:
    """Project-wide configuration shared by every command."""

    schema: LabelSchema
    annotators: tuple[str, ...]
    batch_size: int = 25
    seed: int = 0
    plateau_epsilon: float = 0.01
    plateau_window: int = 2
    divergence_threshold: float = 0.1
    score_tolerance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "annotators", tuple(self.annotators))
        if not self.annotators:
            raise LoopError("bad-manifest", "at least one annotator required")
        if len(set(self.annotators)) != len(self.annotators):
            raise LoopError("bad-manifest", "annotator ids must be distinct")
        for a in self.annotators:
            if not a:
                raise LoopError("bad-manifest", "annotator ids must be non-empty")
            if a in RESERVED_ANNOTATORS:
                raise LoopError("bad-manifest", f"annotator id {a!r} is reserved")
        if self.batch_size < 1:
            raise LoopError("bad-manifest", "batch_size must be >= 1")
        if not self.plateau_epsilon > 0:
            raise LoopError("bad-manifest", "plateau_epsilon must be > 0")
        if self.plateau_window < 1:
            raise LoopError("bad-manifest", "plateau_window must be >= 1")
        if not 0 < self.divergence_threshold <= 1:
            raise LoopError("bad-manifest", "divergence_threshold must be in (0, 1]")
        if self.score_tolerance < 0:
            raise LoopError("bad-manifest", "score_tolerance must be >= 0")


# -- validation ----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    field: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [f"{v.field}: {v.message}" for v in self.violations]


def validate_document(doc: Document, schema: LabelSchema) -> ValidationReport:
    """Check a document against its schema; violations are data, not failures."""
    out: list[Violation] = []
    if not doc.id:
        out.append(Violation("id", "empty id"))
    if not doc.text:
        out.append(Violation("text", "empty text"))
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        if doc.text_b is None:
            out.append(Violation("text_b", "missing text_b for pair task"))
        elif not doc.text_b:
            out.append(Violation("text_b", "empty text_b"))
    elif doc.text_b is not None:
        out.append(Violation("text_b", "text_b only applies to pair tasks"))
    return ValidationReport(tuple(out))


def validate_annotation(ann: Annotation, doc: Document, schema: LabelSchema) -> ValidationReport:
    """Check an annotation payload against its document and schema.

    The annotation must reference `doc`; a mismatched doc_id is referential
    breakage and raises rather than reporting.
    """
    if ann.doc_id != doc.id:
        raise LoopError("unknown-doc", f"annotation references {ann.doc_id!r}, not document {doc.id!r}")
    out: list[Violation] = []
    if not ann.annotator:
        out.append(Violation("annotator", "empty annotator"))

    kind = schema.task_kind
    if kind is TaskKind.DOC_CLASS:
        if not isinstance(ann.payload, ClassPayload):
            out.append(Violation("payload", f"doc_class task requires a class payload, got {_payload_kind(ann.payload)}"))
        elif ann.payload.value not in schema.classes:
            out.append(Violation("payload.value", f"unknown class {ann.payload.value!r}"))
    elif kind is TaskKind.SPAN_LABEL:
        if not isinstance(ann.payload, SpansPayload):
            out.append(Violation("payload", f"span_label task requires a spans payload, got {_payload_kind(ann.payload)}"))
        else:
            out.extend(_check_spans(ann.payload.spans, doc, schema))
    else:
        if not isinstance(ann.payload, ScorePayload):
            out.append(Violation("payload", f"pair_regress task requires a score payload, got {_payload_kind(ann.payload)}"))
        else:
            lo, hi = schema.range_lo, schema.range_hi
            if not lo <= ann.payload.value <= hi:  # type: ignore[operator]
                out.append(Violation("payload.value", f"score {ann.payload.value} out of range [{lo}, {hi}]"))
    return ValidationReport(tuple(out))


def _payload_kind(payload: Payload) -> str:
    if isinstance(payload, ClassPayload):
        return "class"
    if isinstance(payload, SpansPayload):
        return "spans"
    return "score"


def _check_spans(spans: tuple[Span, ...], doc: Document, schema: LabelSchema) -> list[Violation]:
    out: list[Violation] = []
    n = len(doc.text)
    for i, sp in enumerate(spans):
        where = f"payload.spans[{i}]"
        if sp.start >= sp.end:
            out.append(Violation(where, f"start {sp.start} >= end {sp.end}"))
        if sp.start < 0 or sp.end > n:
            out.append(Violation(where, f"span ({sp.start}, {sp.end}) outside text of length {n}"))
        if sp.label not in schema.classes:
            out.append(Violation(where, f"unknown label {sp.label!r}"))
    if list(spans) != sorted(spans, key=lambda s: (s.start, s.end)):
        out.append(Violation("payload.spans", "spans not sorted by start"))
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            out.append(
                Violation("payload.spans", f"overlapping spans ({prev.start}, {prev.end}) and ({cur.start}, {cur.end})")
            )
    return out


# -- wire formats ----------------------------------------------------------
#
# One record per JSONL line, UTF-8, unknown fields rejected:
#   document    {"id", "text"[, "text_b"][, "meta"]}
#   annotation  {"doc_id", "annotator", "provenance", "payload"}
#   payload     {"kind": "class", "value": c}
#               {"kind": "spans", "spans": [{"start", "end", "label"}, ...]}
#               {"kind": "score", "value": x}


def _require(record: Mapping[str, Any], allowed: dict[str, bool], what: str) -> None:
    unknown = sorted(set(record) - set(allowed))
    if unknown:
        raise LoopError("bad-record", f"{what}: unknown fields {unknown}")
    missing = sorted(k for k, required in allowed.items() if required and k not in record)
    if missing:
        raise LoopError("bad-record", f"{what}: missing fields {missing}")


def _str_field(record: Mapping[str, Any], key: str, what: str) -> str:
    value = record[key]
    if not isinstance(value, str):
        raise LoopError("bad-record", f"{what}: field {key!r} must be a string")
    return value


def _num_field(record: Mapping[str, Any], key: str, what: str) -> float:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise LoopError("bad-record", f"{what}: field {key!r} must be a number")
    return float(value)


def _int_field(record: Mapping[str, Any], key: str, what: str) -> int:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise LoopError("bad-record", f"{what}: field {key!r} must be an integer")
    return value


def document_to_dict(doc: Document) -> dict[str, Any]:
    out: dict[str, Any] = {"id": doc.id, "text": doc.text}
    if doc.text_b is not None:
        out["text_b"] = doc.text_b
    if doc.meta is not None:
        out["meta"] = dict(doc.meta)
    return out


def document_from_dict(record: Mapping[str, Any]) -> Document:
    _require(record, {"id": True, "text": True, "text_b": False, "meta": False}, "document")
    text_b = None
    if "text_b" in record:
        text_b = _str_field(record, "text_b", "document")
    meta = None
    if "meta" in record:
        if not isinstance(record["meta"], dict):
            raise LoopError("bad-record", "document: field 'meta' must be an object")
        meta = dict(record["meta"])
    return Document(
        id=_str_field(record, "id", "document"),
        text=_str_field(record, "text", "document"),
        text_b=text_b,
        meta=meta,
    )


def span_to_dict(span: Span) -> dict[str, Any]:
    return {"start": span.start, "end": span.end, "label": span.label}


def span_from_dict(record: Mapping[str, Any]) -> Span:
    _require(record, {"start": True, "end": True, "label": True}, "span")
    return Span(
        start=_int_field(record, "start", "span"),
        end=_int_field(record, "end", "span"),
        label=_str_field(record, "label", "span"),
    )


def payload_to_dict(payload: Payload) -> dict[str, Any]:
    if isinstance(payload, ClassPayload):
        return {"kind": "class", "value": payload.value}
    if isinstance(payload, SpansPayload):
        return {"kind": "spans", "spans": [span_to_dict(s) for s in payload.spans]}
    return {"kind": "score", "value": payload.value}


def payload_from_dict(record: Mapping[str, Any]) -> Payload:
    if not isinstance(record, Mapping) or "kind" not in record:
        raise LoopError("bad-record", "payload: missing 'kind'")
    kind = record["kind"]
    if kind == "class":
        _require(record, {"kind": True, "value": True}, "class payload")
        return ClassPayload(_str_field(record, "value", "class payload"))
    if kind == "spans":
        _require(record, {"kind": True, "spans": True}, "spans payload")
        raw = record["spans"]
        if not isinstance(raw, list):
            raise LoopError("bad-record", "spans payload: field 'spans' must be a list")
        return spans_payload(span_from_dict(s) for s in raw)
    if kind == "score":
        _require(record, {"kind": True, "value": True}, "score payload")
        return ScorePayload(_num_field(record, "value", "score payload"))
    raise LoopError("bad-record", f"payload: unknown kind {kind!r}")


def annotation_to_dict(ann: Annotation) -> dict[str, Any]:
    return {
        "doc_id": ann.doc_id,
        "annotator": ann.annotator,
        "provenance": ann.provenance.value,
        "payload": payload_to_dict(ann.payload),
    }


def annotation_from_dict(record: Mapping[str, Any]) -> Annotation:
    _require(record, {"doc_id": True, "annotator": True, "provenance": True, "payload": True}, "annotation")
    prov_raw = _str_field(record, "provenance", "annotation")
    try:
        provenance = Provenance(prov_raw)
    except ValueError:
        raise LoopError("bad-record", f"annotation: unknown provenance {prov_raw!r}") from None
    return Annotation(
        doc_id=_str_field(record, "doc_id", "annotation"),
        annotator=_str_field(record, "annotator", "annotation"),
        provenance=provenance,
        payload=payload_from_dict(record["payload"]),
    )


def schema_to_dict(schema: LabelSchema) -> dict[str, Any]:
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        return {"task_kind": schema.task_kind.value, "range_lo": schema.range_lo, "range_hi": schema.range_hi}
    return {"task_kind": schema.task_kind.value, "classes": list(schema.classes)}


def schema_from_dict(record: Mapping[str, Any]) -> LabelSchema:
    if not isinstance(record, Mapping) or "task_kind" not in record:
        raise LoopError("bad-record", "schema: missing 'task_kind'")
    kind_raw = record["task_kind"]
    try:
        kind = TaskKind(kind_raw)
    except ValueError:
        raise LoopError("bad-record", f"schema: unknown task_kind {kind_raw!r}") from None
    if kind is TaskKind.PAIR_REGRESS:
        _require(record, {"task_kind": True, "range_lo": True, "range_hi": True}, "schema")
        return LabelSchema(
            kind,
            range_lo=_num_field(record, "range_lo", "schema"),
            range_hi=_num_field(record, "range_hi", "schema"),
        )
    _require(record, {"task_kind": True, "classes": True}, "schema")
    raw = record["classes"]
    if not isinstance(raw, list) or not all(isinstance(c, str) for c in raw):
        raise LoopError("bad-record", "schema: field 'classes' must be a list of strings")
    return LabelSchema(kind, classes=tuple(raw))


def manifest_to_dict(manifest: ProjectManifest) -> dict[str, Any]:
    return {
        "schema": schema_to_dict(manifest.schema),
        "annotators": list(manifest.annotators),
        "batch_size": manifest.batch_size,
        "seed": manifest.seed,
        "plateau_epsilon": manifest.plateau_epsilon,
        "plateau_window": manifest.plateau_window,
        "divergence_threshold": manifest.divergence_threshold,
        "score_tolerance": manifest.score_tolerance,
    }


def manifest_from_dict(record: Mapping[str, Any]) -> ProjectManifest:
    _require(
        record,
        {
            "schema": True,
            "annotators": True,
            "batch_size": True,
            "seed": True,
            "plateau_epsilon": True,
            "plateau_window": True,
            "divergence_threshold": True,
            "score_tolerance": True,
        },
        "manifest",
    )
    raw = record["annotators"]
    if not isinstance(raw, list) or not all(isinstance(a, str) for a in raw):
        raise LoopError("bad-record", "manifest: field 'annotators' must be a list of strings")
    return ProjectManifest(
        schema=schema_from_dict(record["schema"]),
        annotators=tuple(raw),
        batch_size=_int_field(record, "batch_size", "manifest"),
        seed=_int_field(record, "seed", "manifest"),
        plateau_epsilon=_num_field(record, "plateau_epsilon", "manifest"),
        plateau_window=_int_field(record, "plateau_window", "manifest"),
        divergence_threshold=_num_field(record, "divergence_threshold", "manifest"),
        score_tolerance=_num_field(record, "score_tolerance", "manifest"),
    )
