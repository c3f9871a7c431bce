"""Deterministic class-system adjustments and guideline scaffolding.

drop removes a class's occurrences (documents stay, as unlabeled for doc
tasks), incorporate folds one class into an existing one, merge relabels
several classes to one target. Every transform reports exact counts so
before/after corpus totals reconcile.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping, Sequence

from .errors import LoopError
from .model import (
    AnnotationSet,
    ClassPayload,
    LabelSchema,
    SpansPayload,
    TaskKind,
    spans_payload,
)


class AdjustKind(str, Enum):
    DROP = "drop"
    INCORPORATE = "incorporate"
    MERGE = "merge"


@dataclass(frozen=True)
class ClassAdjustment:
    op: AdjustKind
    sources: tuple[str, ...]
    target: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(set(self.sources)) != len(self.sources):
            raise LoopError("bad-adjustment", "sources must be pairwise distinct")
        if self.op is AdjustKind.MERGE:
            if len(self.sources) < 2:
                raise LoopError("bad-adjustment", "merge needs at least two sources")
            if not self.target:
                raise LoopError("bad-adjustment", "merge needs a target class")
        else:
            if len(self.sources) != 1:
                raise LoopError("bad-adjustment", f"{self.op.value} takes exactly one source")
            if self.op is AdjustKind.DROP and self.target is not None:
                raise LoopError("bad-adjustment", "drop takes no target")
            if self.op is AdjustKind.INCORPORATE:
                if not self.target:
                    raise LoopError("bad-adjustment", "incorporate needs a target class")
                if self.target == self.sources[0]:
                    raise LoopError("bad-adjustment", "cannot incorporate a class into itself")


@dataclass(frozen=True)
class ChangeLog:
    """Exact bookkeeping for one adjustment over one corpus."""

    adjustment: ClassAdjustment
    touched_annotations: int
    removed_annotations: int
    removed_spans: int
    relabeled_annotations: int
    relabeled_spans: int


@dataclass(frozen=True)
class AdjustmentResult:
    schema: LabelSchema
    sets: tuple[AnnotationSet, ...]
    log: ChangeLog


def _adjusted_schema(schema: LabelSchema, adj: ClassAdjustment) -> LabelSchema:
    assert schema.classes is not None
    unknown = sorted(set(adj.sources) - set(schema.classes))
    if unknown:
        raise LoopError("unknown-class", f"adjustment references unknown classes {unknown}")
    if adj.op is AdjustKind.INCORPORATE and adj.target not in schema.classes:
        raise LoopError("unknown-class", f"incorporate target {adj.target!r} not in schema")

    if adj.op is AdjustKind.DROP:
        classes = tuple(c for c in schema.classes if c != adj.sources[0])
    else:
        assert adj.target is not None
        removed = set(adj.sources) - {adj.target}
        classes = []
        inserted = False
        for c in schema.classes:
            if c in removed:
                if not inserted and adj.target not in schema.classes:
                    classes.append(adj.target)
                    inserted = True
                continue
            classes.append(c)
        classes = tuple(classes)
    if not classes:
        raise LoopError("bad-adjustment", "adjustment would leave the schema without classes")
    return replace(schema, classes=classes)


def apply_adjustment(
    sets: Sequence[AnnotationSet], schema: LabelSchema, adj: ClassAdjustment
) -> AdjustmentResult:
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        raise LoopError("wrong-kind", "class adjustments apply to class and span tasks only")
    new_schema = _adjusted_schema(schema, adj)
    sources = set(adj.sources)

    touched = removed_ann = removed_spans = relabeled_ann = relabeled_spans = 0
    new_sets = []
    for aset in sets:
        kept = []
        for ann in aset.annotations.values():
            payload = ann.payload
            if schema.task_kind is TaskKind.DOC_CLASS:
                assert isinstance(payload, ClassPayload)
                if payload.value not in sources:
                    kept.append(ann)
                    continue
                touched += 1
                if adj.op is AdjustKind.DROP:
                    removed_ann += 1
                    continue
                if payload.value != adj.target:
                    relabeled_ann += 1
                assert adj.target is not None
                kept.append(replace(ann, payload=ClassPayload(adj.target)))
            else:
                assert isinstance(payload, SpansPayload)
                hit = [s for s in payload.spans if s.label in sources]
                if not hit:
                    kept.append(ann)
                    continue
                touched += 1
                if adj.op is AdjustKind.DROP:
                    removed_spans += len(hit)
                    rest = [s for s in payload.spans if s.label not in sources]
                    kept.append(replace(ann, payload=spans_payload(rest)))
                    continue
                assert adj.target is not None
                relabeled_spans += sum(1 for s in hit if s.label != adj.target)
                spans = [
                    replace(s, label=adj.target) if s.label in sources else s for s in payload.spans
                ]
                kept.append(replace(ann, payload=spans_payload(spans)))
        new_sets.append(AnnotationSet.of(aset.annotator, kept))

    log = ChangeLog(adj, touched, removed_ann, removed_spans, relabeled_ann, relabeled_spans)
    return AdjustmentResult(new_schema, tuple(new_sets), log)


def replay_adjustments(
    sets: Sequence[AnnotationSet], schema: LabelSchema, history: Sequence[ClassAdjustment]
) -> tuple[LabelSchema, tuple[AnnotationSet, ...], list[ChangeLog]]:
    """Apply a recorded adjustment sequence from scratch."""
    current = tuple(sets)
    logs = []
    for step, adj in enumerate(history, start=1):
        try:
            result = apply_adjustment(current, schema, adj)
        except LoopError as err:
            raise LoopError(err.code, f"history step {step}: {err.message}") from None
        schema, current = result.schema, result.sets
        logs.append(result.log)
    return schema, current, logs


def adjustment_to_dict(adj: ClassAdjustment) -> dict[str, Any]:
    record: dict[str, Any] = {"op": adj.op.value, "sources": list(adj.sources)}
    if adj.target is not None:
        record["target"] = adj.target
    return record


def adjustment_from_dict(record: Mapping[str, Any]) -> ClassAdjustment:
    allowed = {"op", "sources", "target"}
    unknown = sorted(set(record) - allowed)
    if unknown:
        raise LoopError("bad-record", f"adjustment: unknown fields {unknown}")
    try:
        op = AdjustKind(record.get("op"))
    except ValueError:
        raise LoopError("bad-record", f"adjustment: unknown op {record.get('op')!r}") from None
    sources = record.get("sources")
    if not isinstance(sources, list) or not all(isinstance(s, str) for s in sources):
        raise LoopError("bad-record", "adjustment: sources must be a list of strings")
    target = record.get("target")
    if target is not None and not isinstance(target, str):
        raise LoopError("bad-record", "adjustment: target must be a string")
    return ClassAdjustment(op, tuple(sources), target)


_TASK_STATEMENTS = {
    TaskKind.DOC_CLASS: "Assign exactly one label to every document; never leave a document unlabeled or give it several labels.",
    TaskKind.SPAN_LABEL: "Mark every text span that matches a label description; spans must not overlap each other.",
    TaskKind.PAIR_REGRESS: "Assign exactly one score to every text pair.",
}


def scaffold_guidelines(
    schema: LabelSchema, task_description: str = "", examples: Sequence[str] | None = None
) -> str:
    """Markdown guideline skeleton: task, labels, examples, ambiguous cases."""
    lines = ["# Annotation Guidelines", ""]

    lines.append("## 1. Task Description")
    lines.append("")
    lines.append(task_description.strip() or "TODO: describe what is being annotated and why.")
    statement = _TASK_STATEMENTS[schema.task_kind]
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        statement += f" Scores lie in [{schema.range_lo:g}, {schema.range_hi:g}]."
    lines.append("")
    lines.append(statement)
    lines.append("")

    lines.append("## 2. Label Descriptions")
    lines.append("")
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        lines.append(f"- Score range [{schema.range_lo:g}, {schema.range_hi:g}]: TODO describe what the endpoints mean and give anchor points.")
    else:
        for cls in schema.classes:
            lines.append(f"- **{cls}**: TODO describe when this label applies and when it does not.")
    lines.append("")

    lines.append("## 3. Annotation Examples")
    lines.append("")
    if examples:
        for i, example in enumerate(examples, start=1):
            lines.append(f"{i}. {example}")
    else:
        lines.append("TODO: add at least one worked example per label, including a borderline case.")
    lines.append("")

    lines.append("## 4. Ambiguous Cases")
    lines.append("")
    lines.append("TODO: record decisions for recurring hard cases here, one bullet per decision, and keep this section growing as annotation proceeds.")
    if schema.task_kind is TaskKind.SPAN_LABEL:
        lines.append("- Entity boundaries: TODO state whether articles, modifiers, and trailing punctuation belong inside the span.")
    if schema.task_kind is TaskKind.DOC_CLASS:
        lines.append("- Mixed or unclear documents: TODO state which label wins when several seem to apply (remember: exactly one label).")
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        lines.append("- Scores between anchor points: TODO state how to interpolate.")
    lines.append("")
    return "\n".join(lines)
