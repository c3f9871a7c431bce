"""Pairwise annotation merging, typed conflicts, and resolution application.

Disagreements are classified so humans resolve one region at a time:

* label_mismatch - class or score payloads differ (doc and pair tasks)
* span_label     - same character boundaries, different label
* span_boundary  - overlapping span groups whose boundaries differ
* span_presence  - a span with no overlapping counterpart on the other side

Span conflicts are grouped by connected components of overlapping spans
across both sides, so each conflict covers one disputed text region.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import LoopError
from .model import (
    Annotation,
    AnnotationSet,
    ClassPayload,
    Document,
    LabelSchema,
    Payload,
    Provenance,
    ScorePayload,
    Span,
    SpansPayload,
    TaskKind,
    payload_from_dict,
    payload_to_dict,
    spans_payload,
    validate_annotation,
)

RESOLVED_BY = "consensus"

CHOICE_A = "a"
CHOICE_B = "b"
CHOICE_NONE = "none"


class ConflictKind(str, Enum):
    LABEL_MISMATCH = "label_mismatch"
    SPAN_BOUNDARY = "span_boundary"
    SPAN_LABEL = "span_label"
    SPAN_PRESENCE = "span_presence"


@dataclass(frozen=True)
class Conflict:
    """One disagreement awaiting a human decision; sides may be empty
    only for span_presence."""

    conflict_id: str
    doc_id: str
    kind: ConflictKind
    side_a: Payload | None
    side_b: Payload | None

    def __post_init__(self):
        if self.side_a is None and self.side_b is None:
            raise LoopError("bad-conflict", "conflict with both sides empty")
        if self.side_a == self.side_b:
            raise LoopError("bad-conflict", "conflict sides must differ")


@dataclass(frozen=True)
class MergedDocument:
    doc_id: str
    agreed: tuple[Payload, ...]
    conflicts: tuple[Conflict, ...]


@dataclass(frozen=True)
class Resolution:
    """Decision for one conflict: take side a or b, drop the region
    ("none"), or substitute a custom fragment."""

    conflict_id: str
    choice: str | Payload

    def __post_init__(self):
        if isinstance(self.choice, str) and self.choice not in (CHOICE_A, CHOICE_B, CHOICE_NONE):
            raise LoopError("bad-resolution", f"unknown choice {self.choice!r}")


def _fragment_key(payload: Payload | None) -> str:
    if payload is None:
        return "null"
    return json.dumps(payload_to_dict(payload), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def conflict_id_for(doc_id: str, kind: ConflictKind, side_a: Payload | None, side_b: Payload | None) -> str:
    """Stable id: content hash, invariant under swapping the two sides."""
    sides = sorted([_fragment_key(side_a), _fragment_key(side_b)])
    blob = json.dumps([doc_id, kind.value, sides], separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _conflict(doc_id: str, kind: ConflictKind, side_a: Payload | None, side_b: Payload | None) -> Conflict:
    return Conflict(conflict_id_for(doc_id, kind, side_a, side_b), doc_id, kind, side_a, side_b)


def _overlaps(x: Span, y: Span) -> bool:
    return x.start < y.end and y.start < x.end


def merge_pair(
    a: Annotation,
    b: Annotation,
    doc: Document,
    schema: LabelSchema,
    score_tolerance: float = 0.0,
) -> MergedDocument:
    """Merge two annotations of one document into agreed fragments plus conflicts."""
    if a.doc_id != doc.id or b.doc_id != doc.id:
        raise LoopError("doc-mismatch", f"annotations reference {a.doc_id!r}/{b.doc_id!r}, not {doc.id!r}")
    if a.annotator == b.annotator:
        raise LoopError("same-annotator", f"both sides annotated by {a.annotator!r}")
    for side, ann in (("a", a), ("b", b)):
        report = validate_annotation(ann, doc, schema)
        if not report.ok:
            raise LoopError("invalid-annotation", f"side {side}: " + "; ".join(report.messages()))

    if schema.task_kind is TaskKind.DOC_CLASS:
        pa, pb = a.payload, b.payload
        assert isinstance(pa, ClassPayload) and isinstance(pb, ClassPayload)
        if pa.value == pb.value:
            return MergedDocument(doc.id, (pa,), ())
        return MergedDocument(doc.id, (), (_conflict(doc.id, ConflictKind.LABEL_MISMATCH, pa, pb),))

    if schema.task_kind is TaskKind.PAIR_REGRESS:
        sa, sb = a.payload, b.payload
        assert isinstance(sa, ScorePayload) and isinstance(sb, ScorePayload)
        if abs(sa.value - sb.value) <= score_tolerance:
            # Midpoint keeps the merge symmetric; exact equality is the default.
            return MergedDocument(doc.id, (ScorePayload((sa.value + sb.value) / 2.0),), ())
        return MergedDocument(doc.id, (), (_conflict(doc.id, ConflictKind.LABEL_MISMATCH, sa, sb),))

    assert isinstance(a.payload, SpansPayload) and isinstance(b.payload, SpansPayload)
    return _merge_spans(doc.id, a.payload.spans, b.payload.spans)


def _merge_spans(doc_id: str, spans_a: Sequence[Span], spans_b: Sequence[Span]) -> MergedDocument:
    rest_a = list(spans_a)
    rest_b = list(spans_b)

    agreed: list[Payload] = []
    exact_b = set(rest_b)
    for sp in list(rest_a):
        if sp in exact_b:
            agreed.append(SpansPayload((sp,)))
            rest_a.remove(sp)
            rest_b.remove(sp)

    conflicts: list[Conflict] = []
    bounds_b = {(sp.start, sp.end): sp for sp in rest_b}
    for sp in list(rest_a):
        other = bounds_b.get((sp.start, sp.end))
        if other is not None:
            conflicts.append(
                _conflict(doc_id, ConflictKind.SPAN_LABEL, SpansPayload((sp,)), SpansPayload((other,)))
            )
            rest_a.remove(sp)
            rest_b.remove(other)

    # Connected components of overlap between the remaining sides. Spans
    # within one side never overlap, so edges only cross sides.
    nodes: list[tuple[str, Span]] = [("a", sp) for sp in rest_a] + [("b", sp) for sp in rest_b]
    parent = list(range(len(nodes)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        parent[find(i)] = find(j)

    for i, (side_i, sp_i) in enumerate(nodes):
        for j in range(i + 1, len(nodes)):
            side_j, sp_j = nodes[j]
            if side_i != side_j and _overlaps(sp_i, sp_j):
                union(i, j)

    components: dict[int, list[tuple[str, Span]]] = {}
    for i, node in enumerate(nodes):
        components.setdefault(find(i), []).append(node)

    for component in sorted(components.values(), key=lambda c: min(sp.start for _, sp in c)):
        group_a = tuple(sorted(sp for side, sp in component if side == "a"))
        group_b = tuple(sorted(sp for side, sp in component if side == "b"))
        if group_a and group_b:
            conflicts.append(
                _conflict(doc_id, ConflictKind.SPAN_BOUNDARY, SpansPayload(group_a), SpansPayload(group_b))
            )
        elif group_a:
            conflicts.append(_conflict(doc_id, ConflictKind.SPAN_PRESENCE, SpansPayload(group_a), None))
        else:
            conflicts.append(_conflict(doc_id, ConflictKind.SPAN_PRESENCE, None, SpansPayload(group_b)))

    agreed.sort(key=_fragment_key)
    conflicts.sort(key=lambda c: _fragment_key(c.side_a or c.side_b))
    return MergedDocument(doc_id, tuple(agreed), tuple(conflicts))


def merge_part(
    set_a: AnnotationSet,
    set_b: AnnotationSet,
    docs: Sequence[Document],
    schema: LabelSchema,
    score_tolerance: float = 0.0,
) -> list[MergedDocument]:
    """Merge two annotation sets that must both cover exactly `docs`."""
    part_ids = {d.id for d in docs}
    problems = []
    for name, aset in (("a", set_a), ("b", set_b)):
        have = set(aset.annotations)
        missing = sorted(part_ids - have)
        extra = sorted(have - part_ids)
        if missing:
            problems.append(f"side {name} missing {missing}")
        if extra:
            problems.append(f"side {name} covers extra {extra}")
    if problems:
        raise LoopError("coverage-mismatch", "; ".join(problems))
    return [
        merge_pair(set_a.annotations[d.id], set_b.annotations[d.id], d, schema, score_tolerance) for d in docs
    ]


def _spans_of(payload: Payload | None, conflict: Conflict) -> tuple[Span, ...]:
    if payload is None:
        return ()
    if not isinstance(payload, SpansPayload):
        raise LoopError(
            "bad-resolution",
            f"conflict {conflict.conflict_id} needs a spans fragment, got {payload_to_dict(payload)['kind']}",
        )
    return payload.spans


def apply_resolutions(
    merged: Sequence[MergedDocument],
    resolutions: Iterable[Resolution],
    schema: LabelSchema,
    docs: Mapping[str, Document],
    annotator: str = RESOLVED_BY,
) -> AnnotationSet:
    """Combine agreed fragments with resolved choices into a final set.

    Every conflict must be resolved; the output validates under the schema
    or the offending resolution is reported.
    """
    by_id: dict[str, Conflict] = {}
    for md in merged:
        for conflict in md.conflicts:
            by_id[conflict.conflict_id] = conflict

    chosen: dict[str, str | Payload] = {}
    for res in resolutions:
        if res.conflict_id not in by_id:
            raise LoopError("unknown-conflict", f"resolution for unknown conflict {res.conflict_id!r}")
        chosen[res.conflict_id] = res.choice  # last write wins

    unresolved = sorted(cid for cid in by_id if cid not in chosen)
    if unresolved:
        raise LoopError("unresolved-conflicts", "unresolved conflicts: " + ", ".join(unresolved))

    annotations: list[Annotation] = []
    for md in merged:
        doc = docs.get(md.doc_id)
        if doc is None:
            raise LoopError("unknown-doc", f"merged document {md.doc_id!r} not in document store")
        fragments: list[Payload] = list(md.agreed)
        for conflict in md.conflicts:
            choice = chosen[conflict.conflict_id]
            if choice == CHOICE_A:
                picked = conflict.side_a
            elif choice == CHOICE_B:
                picked = conflict.side_b
            elif choice == CHOICE_NONE:
                picked = None
            else:
                picked = _checked_custom(conflict, choice, schema)
            if picked is not None:
                fragments.append(picked)

        payload = _combine_fragments(md.doc_id, fragments, schema)
        if payload is None:
            continue  # class/score region dropped entirely
        ann = Annotation(md.doc_id, annotator, Provenance.RESOLVED, payload)
        report = validate_annotation(ann, doc, schema)
        if not report.ok:
            raise LoopError("invalid-resolution", f"doc {md.doc_id}: " + "; ".join(report.messages()))
        annotations.append(ann)
    return AnnotationSet.of(annotator, annotations)


def _checked_custom(conflict: Conflict, fragment: str | Payload, schema: LabelSchema) -> Payload:
    assert not isinstance(fragment, str)
    if schema.task_kind is TaskKind.SPAN_LABEL:
        if not isinstance(fragment, SpansPayload):
            raise LoopError("bad-resolution", f"conflict {conflict.conflict_id} needs a spans fragment")
    elif schema.task_kind is TaskKind.DOC_CLASS:
        if not isinstance(fragment, ClassPayload):
            raise LoopError("bad-resolution", f"conflict {conflict.conflict_id} needs a class fragment")
    elif not isinstance(fragment, ScorePayload):
        raise LoopError("bad-resolution", f"conflict {conflict.conflict_id} needs a score fragment")
    return fragment


def _combine_fragments(doc_id: str, fragments: Sequence[Payload], schema: LabelSchema) -> Payload | None:
    if schema.task_kind is TaskKind.SPAN_LABEL:
        spans: list[Span] = []
        for frag in fragments:
            assert isinstance(frag, SpansPayload)
            spans.extend(frag.spans)
        ordered = sorted(spans)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.start < prev.end:
                raise LoopError(
                    "overlapping-resolution",
                    f"doc {doc_id}: resolved spans ({prev.start}, {prev.end}) and ({cur.start}, {cur.end}) overlap",
                )
        return spans_payload(ordered)
    if not fragments:
        return None
    if len(fragments) > 1:
        raise LoopError("invalid-resolution", f"doc {doc_id}: multiple class/score fragments after resolution")
    return fragments[0]


# -- wire formats (shared by the store, the HTTP API, and resolution files) --


def conflict_to_dict(conflict: Conflict) -> dict[str, Any]:
    return {
        "conflict_id": conflict.conflict_id,
        "doc_id": conflict.doc_id,
        "kind": conflict.kind.value,
        "side_a": payload_to_dict(conflict.side_a) if conflict.side_a is not None else None,
        "side_b": payload_to_dict(conflict.side_b) if conflict.side_b is not None else None,
    }


def conflict_from_dict(record: Mapping[str, Any]) -> Conflict:
    keys = {"conflict_id": True, "doc_id": True, "kind": True, "side_a": True, "side_b": True}
    unknown = sorted(set(record) - set(keys))
    if unknown or set(keys) - set(record):
        raise LoopError("bad-record", f"conflict: fields must be {sorted(keys)}")
    try:
        kind = ConflictKind(record["kind"])
    except ValueError:
        raise LoopError("bad-record", f"conflict: unknown kind {record['kind']!r}") from None
    side_a = payload_from_dict(record["side_a"]) if record["side_a"] is not None else None
    side_b = payload_from_dict(record["side_b"]) if record["side_b"] is not None else None
    return Conflict(str(record["conflict_id"]), str(record["doc_id"]), kind, side_a, side_b)


def merged_doc_to_dict(md: MergedDocument) -> dict[str, Any]:
    return {
        "doc_id": md.doc_id,
        "agreed": [payload_to_dict(p) for p in md.agreed],
        "conflicts": [conflict_to_dict(c) for c in md.conflicts],
    }


def merged_doc_from_dict(record: Mapping[str, Any]) -> MergedDocument:
    keys = {"doc_id", "agreed", "conflicts"}
    if set(record) != keys:
        raise LoopError("bad-record", f"merged document: fields must be {sorted(keys)}")
    return MergedDocument(
        str(record["doc_id"]),
        tuple(payload_from_dict(p) for p in record["agreed"]),
        tuple(conflict_from_dict(c) for c in record["conflicts"]),
    )


def resolution_to_dict(res: Resolution) -> dict[str, Any]:
    choice: Any = res.choice if isinstance(res.choice, str) else {"custom": payload_to_dict(res.choice)}
    return {"conflict_id": res.conflict_id, "choice": choice}


def resolution_from_dict(record: Mapping[str, Any]) -> Resolution:
    if set(record) != {"conflict_id", "choice"}:
        raise LoopError("bad-record", "resolution: fields must be ['choice', 'conflict_id']")
    raw = record["choice"]
    if isinstance(raw, str):
        if raw not in (CHOICE_A, CHOICE_B, CHOICE_NONE):
            raise LoopError("bad-record", f"resolution: unknown choice {raw!r}")
        return Resolution(str(record["conflict_id"]), raw)
    if isinstance(raw, Mapping) and set(raw) == {"custom"}:
        return Resolution(str(record["conflict_id"]), payload_from_dict(raw["custom"]))
    raise LoopError("bad-record", "resolution: choice must be 'a', 'b', 'none', or {'custom': fragment}")
