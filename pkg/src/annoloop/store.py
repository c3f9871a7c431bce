"""On-disk project store: layout, file formats, locking, atomic writes.

Layout under the project root:

    manifest.json                  project config, frozen test ids, adjustment history
    docs.jsonl                     document pool, one JSON record per line
    plans/iter-N.json              batch plan per iteration (dense 1..N)
    plans/selection.json           doc ids picked for the next batch
    annotations/iter-N/<who>.jsonl imported human annotations
    annotations/pre/<who>.jsonl    weak/model pre-annotations
    annotations/resolved/iter-N.jsonl  consensus set after conflict resolution
    merges/iter-N.json             merged documents with conflicts
    resolutions/iter-N.json        resolution decisions
    curve.csv                      learning-curve records

Every write goes to a temp file and is renamed into place, so a killed
command never leaves a half-written store. Mutating commands take the
lock file; readers do not.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import LoopError
from .merge import (
    MergedDocument,
    Resolution,
    merged_doc_from_dict,
    merged_doc_to_dict,
    resolution_from_dict,
    resolution_to_dict,
)
from .model import (
    Annotation,
    AnnotationSet,
    Document,
    ProjectManifest,
    annotation_from_dict,
    annotation_to_dict,
    document_from_dict,
    document_to_dict,
    manifest_from_dict,
    manifest_to_dict,
)
from .monitor import IterationRecord
from .partition import Assignment, BatchPlan, Part, PlanMode, Role
from .schema_ops import ClassAdjustment, adjustment_from_dict, adjustment_to_dict

_SAFE_NAME = re.compile(r"[A-Za-z0-9_.-]+$")

PRE_ANNOTATORS = ("weak", "model")


def _dump_line(record: Mapping[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def _dump_doc(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def atomic_write_text(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def read_jsonl(path: Path) -> list[tuple[int, Any]]:
    """Parse a JSONL file into (line_number, record) pairs."""
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append((lineno, json.loads(line)))
            except json.JSONDecodeError as err:
                raise LoopError("bad-record", f"{path.name}:{lineno}: invalid JSON ({err.msg})") from None
    return out


def write_jsonl(path: Path, records: Sequence[Mapping[str, Any]]) -> None:
    atomic_write_text(path, "".join(_dump_line(r) + "\n" for r in records))


# -- plan wire format ------------------------------------------------------


def plan_to_dict(plan: BatchPlan) -> dict[str, Any]:
    return {
        "iteration": plan.iteration,
        "mode": plan.mode.value,
        "roster": list(plan.roster),
        "assignments": [
            {
                "part": {"index": a.part.index, "doc_ids": list(a.part.doc_ids)},
                "annotators": list(a.annotators),
                "role": a.role.value,
            }
            for a in plan.assignments
        ],
    }


def plan_from_dict(record: Mapping[str, Any]) -> BatchPlan:
    if set(record) != {"iteration", "mode", "roster", "assignments"}:
        raise LoopError("bad-record", "plan: fields must be ['assignments', 'iteration', 'mode', 'roster']")
    try:
        mode = PlanMode(record["mode"])
    except ValueError:
        raise LoopError("bad-record", f"plan: unknown mode {record['mode']!r}") from None
    assignments = []
    for a in record["assignments"]:
        if set(a) != {"part", "annotators", "role"}:
            raise LoopError("bad-record", "plan assignment: fields must be ['annotators', 'part', 'role']")
        part = a["part"]
        if set(part) != {"index", "doc_ids"}:
            raise LoopError("bad-record", "plan part: fields must be ['doc_ids', 'index']")
        try:
            role = Role(a["role"])
        except ValueError:
            raise LoopError("bad-record", f"plan: unknown role {a['role']!r}") from None
        assignments.append(
            Assignment(
                Part(int(part["index"]), tuple(str(d) for d in part["doc_ids"])),
                tuple(str(x) for x in a["annotators"]),
                role,
            )
        )
    return BatchPlan(
        int(record["iteration"]), mode, tuple(str(a) for a in record["roster"]), tuple(assignments)
    )


# -- store state -----------------------------------------------------------


@dataclass(frozen=True)
class StoreState:
    """Everything in manifest.json: config plus frozen test ids and history."""

    manifest: ProjectManifest
    test_doc_ids: tuple[str, ...] = ()
    adjustments: tuple[ClassAdjustment, ...] = ()


def _state_to_dict(state: StoreState) -> dict[str, Any]:
    return {
        "manifest": manifest_to_dict(state.manifest),
        "test_doc_ids": list(state.test_doc_ids),
        "adjustments": [adjustment_to_dict(a) for a in state.adjustments],
    }


def _state_from_dict(record: Mapping[str, Any]) -> StoreState:
    if set(record) != {"manifest", "test_doc_ids", "adjustments"}:
        raise LoopError("bad-record", "manifest.json: fields must be ['adjustments', 'manifest', 'test_doc_ids']")
    return StoreState(
        manifest_from_dict(record["manifest"]),
        tuple(str(d) for d in record["test_doc_ids"]),
        tuple(adjustment_from_dict(a) for a in record["adjustments"]),
    )


_ITER_FILE = re.compile(r"iter-(\d+)\.json(l)?$")

CURVE_HEADER = ["iteration", "size", "metric", "value", "agreement"]


class ProjectStore:
    """Paths plus typed read/write access; no in-memory caching."""

    def __init__(self, root: Path):
        self.root = Path(root)

    # paths
    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def docs_path(self) -> Path:
        return self.root / "docs.jsonl"

    @property
    def curve_path(self) -> Path:
        return self.root / "curve.csv"

    def plan_path(self, iteration: int) -> Path:
        return self.root / "plans" / f"iter-{iteration}.json"

    @property
    def selection_path(self) -> Path:
        return self.root / "plans" / "selection.json"

    def annotation_path(self, iteration: int, annotator: str) -> Path:
        return self.root / "annotations" / f"iter-{iteration}" / f"{self._safe(annotator)}.jsonl"

    def pre_annotation_path(self, annotator: str) -> Path:
        return self.root / "annotations" / "pre" / f"{self._safe(annotator)}.jsonl"

    def resolved_path(self, iteration: int) -> Path:
        return self.root / "annotations" / "resolved" / f"iter-{iteration}.jsonl"

    def merges_path(self, iteration: int) -> Path:
        return self.root / "merges" / f"iter-{iteration}.json"

    def resolutions_path(self, iteration: int) -> Path:
        return self.root / "resolutions" / f"iter-{iteration}.json"

    @staticmethod
    def _safe(name: str) -> str:
        if not _SAFE_NAME.match(name):
            raise LoopError("bad-annotator", f"annotator id {name!r} is not filesystem-safe")
        return name

    # lifecycle
    @classmethod
    def create(cls, root: Path, manifest: ProjectManifest) -> "ProjectStore":
        root = Path(root)
        if root.exists() and any(root.iterdir()):
            raise LoopError("dir-not-empty", f"{root} is not empty")
        store = cls(root)
        for sub in ("plans", "annotations/pre", "annotations/resolved", "merges", "resolutions"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        store.write_state(StoreState(manifest))
        atomic_write_text(store.docs_path, "")
        return store

    @classmethod
    def open(cls, root: Path) -> "ProjectStore":
        store = cls(Path(root))
        if not store.manifest_path.is_file():
            raise LoopError("no-store", f"no project at {root} (manifest.json missing)")
        return store

    @contextmanager
    def lock(self) -> Iterator[None]:
        """Single-writer lock; stale locks from dead processes are reclaimed."""
        path = self.root / ".lock"
        for _ in range(2):
            try:
                fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                break
            except FileExistsError:
                try:
                    pid = int(path.read_text().strip() or "0")
                except (OSError, ValueError):
                    pid = 0
                if pid and _alive(pid):
                    raise LoopError("store-locked", f"store locked by running process {pid}") from None
                path.unlink(missing_ok=True)
        else:
            raise LoopError("store-locked", "could not acquire store lock")
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            path.unlink(missing_ok=True)

    # state
    def read_state(self) -> StoreState:
        try:
            record = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise LoopError("bad-record", f"manifest.json: invalid JSON ({err.msg})") from None
        return _state_from_dict(record)

    def write_state(self, state: StoreState) -> None:
        atomic_write_text(self.manifest_path, _dump_doc(_state_to_dict(state)))

    # documents
    def read_docs(self) -> dict[str, Document]:
        docs: dict[str, Document] = {}
        for lineno, record in read_jsonl(self.docs_path):
            try:
                doc = document_from_dict(record)
            except LoopError as err:
                raise LoopError(err.code, f"docs.jsonl:{lineno}: {err.message}") from None
            if doc.id in docs:
                raise LoopError("duplicate-doc", f"docs.jsonl:{lineno}: duplicate document id {doc.id!r}")
            docs[doc.id] = doc
        return docs

    def add_docs(self, new_docs: Sequence[Document]) -> int:
        existing = self.read_docs()
        for doc in new_docs:
            if doc.id in existing:
                raise LoopError("duplicate-doc", f"document id {doc.id!r} already in the pool")
            existing[doc.id] = doc
        write_jsonl(self.docs_path, [document_to_dict(d) for d in existing.values()])
        return len(new_docs)

    # plans
    def plan_iterations(self) -> list[int]:
        plans_dir = self.root / "plans"
        if not plans_dir.is_dir():
            return []
        found = []
        for p in plans_dir.iterdir():
            m = _ITER_FILE.match(p.name)
            if m and not m.group(2):
                found.append(int(m.group(1)))
        found.sort()
        if found != list(range(1, len(found) + 1)):
            raise LoopError("bad-store", f"plan iterations are not dense from 1: {found}")
        return found

    def next_iteration(self) -> int:
        return len(self.plan_iterations()) + 1

    def write_plan(self, plan: BatchPlan) -> None:
        expected = self.next_iteration()
        if plan.iteration != expected:
            raise LoopError("bad-iteration", f"next plan must be iteration {expected}, got {plan.iteration}")
        atomic_write_text(self.plan_path(plan.iteration), _dump_doc(plan_to_dict(plan)))

    def read_plan(self, iteration: int) -> BatchPlan:
        path = self.plan_path(iteration)
        if not path.is_file():
            raise LoopError("missing-file", f"no plan for iteration {iteration}")
        return plan_from_dict(json.loads(path.read_text(encoding="utf-8")))

    def planned_doc_ids(self) -> set[str]:
        ids: set[str] = set()
        for n in self.plan_iterations():
            ids.update(self.read_plan(n).batch_doc_ids())
        return ids

    # annotation sets
    def _read_set(self, path: Path, annotator: str) -> AnnotationSet:
        annotations = []
        for lineno, record in read_jsonl(path):
            try:
                annotations.append(annotation_from_dict(record))
            except LoopError as err:
                raise LoopError(err.code, f"{path.name}:{lineno}: {err.message}") from None
        try:
            return AnnotationSet.of(annotator, annotations)
        except LoopError as err:
            raise LoopError(err.code, f"{path.name}: {err.message}") from None

    def _write_set(self, path: Path, aset: AnnotationSet) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(path, [annotation_to_dict(a) for a in aset.annotations.values()])

    def write_annotation_set(self, iteration: int, aset: AnnotationSet) -> None:
        self._write_set(self.annotation_path(iteration, aset.annotator), aset)

    def read_annotation_set(self, iteration: int, annotator: str) -> AnnotationSet:
        path = self.annotation_path(iteration, annotator)
        if not path.is_file():
            raise LoopError("missing-file", f"no annotations from {annotator!r} in iteration {iteration}")
        return self._read_set(path, annotator)

    def has_annotations(self, iteration: int, annotator: str) -> bool:
        return self.annotation_path(iteration, annotator).is_file()

    def write_pre_annotations(self, aset: AnnotationSet) -> None:
        if aset.annotator not in PRE_ANNOTATORS:
            raise LoopError("bad-annotator", f"pre-annotations must come from {PRE_ANNOTATORS}")
        self._write_set(self.pre_annotation_path(aset.annotator), aset)

    def read_pre_annotations(self, annotator: str) -> AnnotationSet | None:
        path = self.pre_annotation_path(annotator)
        if not path.is_file():
            return None
        return self._read_set(path, annotator)

    def write_resolved(self, iteration: int, aset: AnnotationSet) -> None:
        self._write_set(self.resolved_path(iteration), aset)

    def read_resolved(self, iteration: int) -> AnnotationSet | None:
        path = self.resolved_path(iteration)
        if not path.is_file():
            return None
        return self._read_set(path, "consensus")

    # merge artifacts
    def write_merges(self, iteration: int, merged: Sequence[MergedDocument]) -> None:
        path = self.merges_path(iteration)
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, _dump_doc([merged_doc_to_dict(m) for m in merged]))

    def read_merges(self, iteration: int) -> list[MergedDocument]:
        path = self.merges_path(iteration)
        if not path.is_file():
            raise LoopError("missing-file", f"no merge output for iteration {iteration}")
        records = json.loads(path.read_text(encoding="utf-8"))
        return [merged_doc_from_dict(r) for r in records]

    def has_merges(self, iteration: int) -> bool:
        return self.merges_path(iteration).is_file()

    def write_resolutions(self, iteration: int, resolutions: Sequence[Resolution]) -> None:
        path = self.resolutions_path(iteration)
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, _dump_doc([resolution_to_dict(r) for r in resolutions]))

    def read_resolutions(self, iteration: int) -> list[Resolution]:
        path = self.resolutions_path(iteration)
        if not path.is_file():
            return []
        records = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(records, list):
            raise LoopError("bad-record", f"{path.name}: resolutions file must be a JSON list")
        return [resolution_from_dict(r) for r in records]

    # learning curve
    def read_curve(self) -> list[IterationRecord]:
        if not self.curve_path.is_file():
            return []
        with self.curve_path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != CURVE_HEADER:
            raise LoopError("bad-record", "curve.csv: unexpected header")
        records = []
        for row in rows[1:]:
            if len(row) != len(CURVE_HEADER):
                raise LoopError("bad-record", f"curve.csv: malformed row {row}")
            records.append(
                IterationRecord(
                    iteration=int(row[0]),
                    cumulative_train_size=int(row[1]),
                    metric_name=row[2],
                    metric_value=float(row[3]),
                    agreement_value=float(row[4]) if row[4] else None,
                )
            )
        return records

    def write_curve(self, records: Sequence[IterationRecord]) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.iteration,
                    rec.cumulative_train_size,
                    rec.metric_name,
                    repr(rec.metric_value),
                    "" if rec.agreement_value is None else repr(rec.agreement_value),
                ]
            )
        atomic_write_text(self.curve_path, buf.getvalue())

    # selection
    def write_selection(self, strategy: str, doc_ids: Sequence[str]) -> None:
        atomic_write_text(
            self.selection_path, _dump_doc({"strategy": strategy, "doc_ids": list(doc_ids)})
        )

    def read_selection(self) -> list[str]:
        if not self.selection_path.is_file():
            raise LoopError("missing-file", "no selection file; run the select command first")
        record = json.loads(self.selection_path.read_text(encoding="utf-8"))
        if set(record) != {"strategy", "doc_ids"}:
            raise LoopError("bad-record", "selection.json: fields must be ['doc_ids', 'strategy']")
        return [str(d) for d in record["doc_ids"]]

    # derived pools
    def final_annotations(self) -> dict[str, Annotation]:
        """Latest usable annotation per doc: consensus output where present,
        direct imports for simple plans; unresolved cross/review iterations
        contribute nothing."""
        final: dict[str, Annotation] = {}
        for n in self.plan_iterations():
            resolved = self.read_resolved(n)
            if resolved is not None:
                final.update(resolved.annotations)
                continue
            plan = self.read_plan(n)
            if plan.mode is not PlanMode.SIMPLE:
                continue
            for assignment in plan.assignments:
                annotator = assignment.annotators[0]
                if self.has_annotations(n, annotator):
                    aset = self.read_annotation_set(n, annotator)
                    for doc_id in assignment.part.doc_ids:
                        if doc_id in aset.annotations:
                            final[doc_id] = aset.annotations[doc_id]
        return final


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True
