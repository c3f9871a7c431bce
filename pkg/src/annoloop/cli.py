"""Command-line entry point tying the store to the workflow modules.

Every command resolves the project root from --root, the ANNOLOOP_ROOT
environment variable, or the working directory. Errors exit nonzero with a
single line: error[<code>]: <message>.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import accelerate, agreement, merge, metrics, monitor, schema_ops
from .errors import LoopError
from .model import (
    Annotation,
    AnnotationSet,
    Document,
    LabelSchema,
    ProjectManifest,
    Provenance,
    TaskKind,
    annotation_from_dict,
    annotation_to_dict,
    document_from_dict,
    document_to_dict,
    payload_to_dict,
    validate_annotation,
    validate_document,
)
from .partition import BatchPlan, PlanMode, Role, assign_cross, assign_review, split_batch
from .server import create_server
from .store import ProjectStore, StoreState, read_jsonl

PROG = "annoloop"


def _root(args: argparse.Namespace) -> Path:
    if args.root:
        return Path(args.root)
    env = os.environ.get("ANNOLOOP_ROOT")
    if env:
        return Path(env)
    return Path.cwd()


def _store(args: argparse.Namespace) -> ProjectStore:
    return ProjectStore.open(_root(args))


def _batch_seed(manifest: ProjectManifest, iteration: int, override: int | None) -> int:
    if override is not None:
        return override
    return manifest.seed * 1_000_003 + iteration


def _latest_iteration(store: ProjectStore, override: int | None) -> int:
    if override is not None:
        return override
    iterations = store.plan_iterations()
    if not iterations:
        raise LoopError("missing-file", "no plans yet; run the plan command first")
    return iterations[-1]


# -- init / add-docs / status ------------------------------------------------


def cmd_init(args: argparse.Namespace) -> None:
    if args.task in ("doc_class", "span_label"):
        if not args.classes:
            raise LoopError("bad-schema", f"{args.task} needs --classes")
        schema = LabelSchema(TaskKind(args.task), classes=tuple(args.classes))
    else:
        if args.range is None:
            raise LoopError("bad-schema", "pair_regress needs --range LO HI")
        schema = LabelSchema(TaskKind(args.task), range_lo=args.range[0], range_hi=args.range[1])
    manifest = ProjectManifest(
        schema=schema,
        annotators=tuple(args.annotators),
        batch_size=args.batch_size,
        seed=args.seed,
        plateau_epsilon=args.plateau_epsilon,
        plateau_window=args.plateau_window,
        divergence_threshold=args.divergence_threshold,
        score_tolerance=args.score_tolerance,
    )
    ProjectStore.create(Path(args.directory), manifest)
    print(f"initialized project at {args.directory} ({args.task}, {len(manifest.annotators)} annotators)")


def cmd_add_docs(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    path = Path(args.file)
    if not path.is_file():
        raise LoopError("missing-file", f"no such file: {path}")
    existing = set(store.read_docs())
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, record in read_jsonl(path):
        try:
            doc = document_from_dict(record)
        except LoopError as err:
            raise LoopError(err.code, f"{path.name}:{lineno}: {err.message}") from None
        report = validate_document(doc, state.manifest.schema)
        if not report.ok:
            raise LoopError("bad-record", f"{path.name}:{lineno}: " + "; ".join(report.messages()))
        if doc.id in seen or doc.id in existing:
            raise LoopError("duplicate-doc", f"{path.name}:{lineno}: duplicate document id {doc.id!r}")
        seen.add(doc.id)
        docs.append(doc)
    with store.lock():
        store.add_docs(docs)
    print(f"added {len(docs)} documents (pool {len(existing) + len(docs)})")


def cmd_status(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    docs = store.read_docs()
    iterations = store.plan_iterations()
    final = store.final_annotations()
    test_ids = set(state.test_doc_ids)
    annotated = set(final)
    print(f"iteration {len(iterations)}, {len(annotated)} annotated")
    print(
        f"documents {len(docs)} (test {len(test_ids)}, train {len(annotated - test_ids)}, "
        f"unannotated {len(set(docs) - annotated)})"
    )
    curve = store.read_curve()
    if curve:
        last = curve[-1]
        print(f"last metric {last.metric_name}={last.metric_value:.12g} (iteration {last.iteration})")
    else:
        print("last metric n/a")
    train = {d: a for d, a in final.items() if d not in test_ids}
    test = {d: a for d, a in final.items() if d in test_ids}
    if train and test and state.manifest.schema.task_kind is not TaskKind.PAIR_REGRESS:
        train_dist = monitor.label_distribution(_as_set(train), state.manifest.schema)
        test_dist = monitor.label_distribution(_as_set(test), state.manifest.schema)
        report = monitor.check_representativeness(train_dist, test_dist, state.manifest.divergence_threshold)
        print(f"last divergence {report.divergence:.12g} ({report.status.value})")
    else:
        print("last divergence n/a")


def _as_set(final: dict[str, Annotation]) -> AnnotationSet:
    """View a doc->annotation mapping as one set for distribution counting."""
    pooled = [replace(ann, annotator="pool") for ann in final.values()]
    return AnnotationSet.of("pool", pooled)


# -- planning and task export -------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    manifest = state.manifest
    docs = store.read_docs()
    iteration = store.next_iteration()
    seed = _batch_seed(manifest, iteration, args.seed)

    eligible = sorted(set(docs) - store.planned_doc_ids())
    if args.from_selection:
        selection = store.read_selection()
        stale = sorted(set(selection) - set(eligible))
        if stale:
            raise LoopError("stale-selection", f"selected documents already planned or unknown: {stale}")
        batch = selection
        if args.size is not None and args.size < len(batch):
            batch = batch[: args.size]
    else:
        size = args.size if args.size is not None else manifest.batch_size
        if not eligible:
            raise LoopError("empty-batch", "no unplanned documents left")
        if size > len(eligible):
            print(f"warning: only {len(eligible)} unplanned documents left; planning the remainder")
            size = len(eligible)
        rng = random.Random(seed)
        batch = rng.sample(eligible, size)

    mode = PlanMode(args.mode)
    if mode is PlanMode.SIMPLE:
        plan = split_batch(batch, manifest.annotators, seed, iteration)
    elif mode is PlanMode.REVIEW:
        plan = assign_review(split_batch(batch, manifest.annotators, seed, iteration))
    else:
        plan = assign_cross(batch, manifest.annotators, seed, iteration)

    with store.lock():
        if args.test:
            if state.test_doc_ids:
                raise LoopError("test-frozen", "a test set is already frozen; use resplit to change it")
            store.write_plan(plan)
            store.write_state(replace(state, test_doc_ids=tuple(sorted(plan.batch_doc_ids()))))
        else:
            store.write_plan(plan)

    print(f"iteration {iteration}: planned {len(batch)} documents in {len(plan.parts)} parts ({mode.value})")
    for a in plan.assignments:
        who = " + ".join(a.annotators)
        print(f"  part {a.part.index}: {len(a.part.doc_ids)} docs -> {who} ({a.role.value})")
    if args.test:
        print(f"frozen {len(batch)} documents as the test set")


def cmd_export_tasks(args: argparse.Namespace) -> None:
    store = _store(args)
    docs = store.read_docs()
    iteration = _latest_iteration(store, args.iteration)
    plan = store.read_plan(iteration)
    annotator = args.annotator
    if annotator not in plan.roster:
        raise LoopError("unknown-annotator", f"{annotator!r} is not in the plan roster")

    pre: dict[str, Annotation] = {}
    for source in ("weak", "model"):
        aset = store.read_pre_annotations(source)
        if aset:
            pre.update(aset.annotations)  # model overwrites weak

    records = []
    for assignment in plan.assignments:
        if annotator not in assignment.annotators:
            continue
        review_pre: dict[str, Annotation] = {}
        if assignment.role is Role.REVIEW:
            # The reviewed side may not have imported yet; export works either way.
            original = assignment_annotator(plan, assignment.part.index)
            if store.has_annotations(iteration, original):
                review_pre = dict(store.read_annotation_set(iteration, original).annotations)
        for doc_id in assignment.part.doc_ids:
            doc = docs.get(doc_id)
            if doc is None:
                raise LoopError("unknown-doc", f"planned document {doc_id!r} not in the pool")
            record: dict[str, Any] = {"doc_id": doc_id, "text": doc.text}
            if doc.text_b is not None:
                record["text_b"] = doc.text_b
            if doc.meta is not None:
                record["meta"] = dict(doc.meta)
            ann = review_pre.get(doc_id) if assignment.role is Role.REVIEW else pre.get(doc_id)
            if ann is not None:
                record["pre"] = {"provenance": ann.provenance.value, "payload": payload_to_dict(ann.payload)}
            records.append(record)
    if not records:
        raise LoopError("empty-batch", f"{annotator!r} has no assigned documents in iteration {iteration}")

    lines = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)
    if args.out:
        Path(args.out).write_text(lines, encoding="utf-8")
        print(f"exported {len(records)} tasks for {annotator} to {args.out}")
    else:
        sys.stdout.write(lines)


def assignment_annotator(plan: BatchPlan, part_index: int) -> str:
    return plan.annotators_of_part(part_index)[0]


def cmd_import_annotations(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    docs = store.read_docs()
    path = Path(args.file)
    if not path.is_file():
        raise LoopError("missing-file", f"no such file: {path}")
    iteration = _latest_iteration(store, args.iteration)
    plan = store.read_plan(iteration)

    annotations = []
    annotator: str | None = None
    for lineno, record in read_jsonl(path):
        try:
            ann = annotation_from_dict(record)
        except LoopError as err:
            raise LoopError(err.code, f"{path.name}:{lineno}: {err.message}") from None
        if ann.provenance is not Provenance.HUMAN:
            raise LoopError(
                "bad-provenance",
                f"{path.name}:{lineno}: imports must be human annotations, got {ann.provenance.value}",
            )
        if annotator is None:
            annotator = ann.annotator
        elif ann.annotator != annotator:
            raise LoopError("mixed-annotators", f"{path.name}:{lineno}: file mixes {annotator!r} and {ann.annotator!r}")
        doc = docs.get(ann.doc_id)
        if doc is None:
            raise LoopError("unknown-doc", f"{path.name}:{lineno}: unknown document {ann.doc_id!r}")
        report = validate_annotation(ann, doc, state.manifest.schema)
        if not report.ok:
            raise LoopError("bad-record", f"{path.name}:{lineno}: " + "; ".join(report.messages()))
        annotations.append(ann)
    if annotator is None:
        raise LoopError("empty-input", f"{path.name}: no annotation records")
    if annotator not in state.manifest.annotators:
        raise LoopError("unknown-annotator", f"{annotator!r} is not in the project roster")

    assigned = set(plan.assigned_doc_ids(annotator))
    got = {a.doc_id for a in annotations}
    outside = sorted(got - assigned)
    if outside:
        raise LoopError("not-assigned", f"documents not assigned to {annotator!r}: {outside}")
    # Review mode is two imports: first the annotator's own part, then (once the
    # reviewed side is visible in exports) the full assignment including it.
    own = set(plan.annotate_doc_ids(annotator))
    if got not in (own, assigned):
        target = own if got < own else assigned
        missing = sorted(target - got)
        raise LoopError("coverage-mismatch", f"missing annotations for assigned documents: {missing}")

    aset = AnnotationSet.of(annotator, annotations)
    with store.lock():
        store.write_annotation_set(iteration, aset)
    print(f"imported {len(annotations)} annotations from {annotator} for iteration {iteration}")


# -- merge / serve / apply ----------------------------------------------------


def _merge_sides(store: ProjectStore, plan: BatchPlan) -> list[tuple[str, str, tuple[str, ...]]]:
    """(side_a annotator, side_b annotator, doc_ids) per part."""
    sides = []
    for part in plan.parts:
        annotators = plan.annotators_of_part(part.index)
        if plan.mode is PlanMode.CROSS:
            a, b = annotators
        elif plan.mode is PlanMode.REVIEW:
            reviewer = plan.reviewer_of_part(part.index)
            if reviewer is None:
                raise LoopError("bad-plan", f"part {part.index} has no reviewer")
            a, b = annotators[0], reviewer
        else:
            raise LoopError("bad-plan", "nothing to merge for a simple plan")
        sides.append((a, b, part.doc_ids))
    return sides


def cmd_merge(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    docs = store.read_docs()
    iteration = _latest_iteration(store, args.iteration)
    plan = store.read_plan(iteration)

    missing = sorted(
        {who for a, b, _ in _merge_sides(store, plan) for who in (a, b) if not store.has_annotations(iteration, who)}
    )
    if missing:
        raise LoopError("missing-file", f"annotators without imports for iteration {iteration}: {missing}")

    merged: list[merge.MergedDocument] = []
    for a, b, doc_ids in _merge_sides(store, plan):
        set_a = store.read_annotation_set(iteration, a)
        set_b = store.read_annotation_set(iteration, b)
        for doc_id in doc_ids:
            if doc_id not in set_a.annotations or doc_id not in set_b.annotations:
                raise LoopError("coverage-mismatch", f"document {doc_id!r} lacks both annotations")
            merged.append(
                merge.merge_pair(
                    set_a.annotations[doc_id],
                    set_b.annotations[doc_id],
                    docs[doc_id],
                    state.manifest.schema,
                    state.manifest.score_tolerance,
                )
            )
    with store.lock():
        store.write_merges(iteration, merged)

    n_agreed = sum(len(m.agreed) for m in merged)
    conflicts = [c for m in merged for c in m.conflicts]
    by_kind: dict[str, int] = {}
    for c in conflicts:
        by_kind[c.kind.value] = by_kind.get(c.kind.value, 0) + 1
    detail = ", ".join(f"{k}={v}" for k, v in sorted(by_kind.items())) or "none"
    print(
        f"iteration {iteration}: merged {len(merged)} documents, "
        f"{n_agreed} agreed fragments, {len(conflicts)} conflicts ({detail})"
    )


def cmd_serve(args: argparse.Namespace) -> None:
    store = _store(args)
    iteration = _latest_iteration(store, args.iteration)
    if not store.has_merges(iteration):
        raise LoopError("missing-file", f"no merge output for iteration {iteration}; run merge first")
    ui_dir = Path(args.ui) if args.ui else None
    if ui_dir is not None and not ui_dir.is_dir():
        raise LoopError("missing-file", f"no such directory: {ui_dir}")
    with store.lock():
        server = create_server(store, iteration, host=args.host, port=args.port, ui_dir=ui_dir)
        state = server.session.state_payload()
        print(
            f"serving resolution API on http://{args.host}:{server.server_address[1]} "
            f"({state['total_conflicts']} conflicts, {state['resolved']} resolved)"
        )
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
    print("stopped")


def cmd_apply_resolutions(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    docs = store.read_docs()
    iteration = _latest_iteration(store, args.iteration)
    merged = store.read_merges(iteration)

    if args.file:
        path = Path(args.file)
        if not path.is_file():
            raise LoopError("missing-file", f"no such file: {path}")
        try:
            records = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise LoopError("bad-record", f"{path.name}: invalid JSON ({err.msg})") from None
        if not isinstance(records, list):
            raise LoopError("bad-record", f"{path.name}: resolutions file must be a JSON list")
        resolutions = [merge.resolution_from_dict(r) for r in records]
    else:
        resolutions = store.read_resolutions(iteration)

    resolved_set = merge.apply_resolutions(merged, resolutions, state.manifest.schema, docs)
    with store.lock():
        if args.file:
            store.write_resolutions(iteration, resolutions)
        store.write_resolved(iteration, resolved_set)
    print(
        f"iteration {iteration}: applied {len(resolutions)} resolutions, "
        f"resolved set covers {len(resolved_set.annotations)} documents"
    )


# -- measurement ---------------------------------------------------------------


def _virtual_sides(store: ProjectStore, iteration: int) -> tuple[AnnotationSet, AnnotationSet]:
    """Pool each part's two annotators into virtual raters side_a/side_b."""
    plan = store.read_plan(iteration)
    side_a: list[Annotation] = []
    side_b: list[Annotation] = []
    for a, b, doc_ids in _merge_sides(store, plan):
        set_a = store.read_annotation_set(iteration, a)
        set_b = store.read_annotation_set(iteration, b)
        for doc_id in doc_ids:
            if doc_id not in set_a.annotations or doc_id not in set_b.annotations:
                raise LoopError("coverage-mismatch", f"document {doc_id!r} lacks both annotations")
            side_a.append(replace(set_a.annotations[doc_id], annotator="side_a"))
            side_b.append(replace(set_b.annotations[doc_id], annotator="side_b"))
    return AnnotationSet.of("side_a", side_a), AnnotationSet.of("side_b", side_b)


def cmd_agreement(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    schema = state.manifest.schema
    iteration = _latest_iteration(store, args.iteration)
    set_a, set_b = _virtual_sides(store, iteration)

    metric = args.metric
    if metric == "auto":
        metric = "pairwise_f1" if schema.task_kind is TaskKind.SPAN_LABEL else "cohen_kappa"
    if metric == "cohen_kappa":
        report = agreement.cohen_kappa(set_a, set_b, schema)
    elif metric == "fleiss_kappa":
        report = agreement.fleiss_kappa([set_a, set_b], schema)
    else:
        report = agreement.pairwise_f1(set_a, set_b, schema)

    print(f"{report.metric.value} {report.value:.12g} (n={report.n_items})")
    if report.observed_agreement is not None:
        print(f"  observed {report.observed_agreement:.12g}, expected {report.expected_agreement:.12g}")
    for label, value in (report.per_class or {}).items():
        print(f"  class {label}: {value:.12g}")


def _read_predictions(path_str: str) -> list[accelerate.Prediction]:
    path = Path(path_str)
    if not path.is_file():
        raise LoopError("missing-file", f"no such file: {path}")
    preds = []
    for lineno, record in read_jsonl(path):
        try:
            preds.append(accelerate.prediction_from_dict(record))
        except LoopError as err:
            raise LoopError(err.code, f"{path.name}:{lineno}: {err.message}") from None
    return preds


def _gold_sets(store: ProjectStore, which: str) -> dict[str, Annotation]:
    state = store.read_state()
    final = store.final_annotations()
    test_ids = set(state.test_doc_ids)
    if which == "test":
        return {d: a for d, a in final.items() if d in test_ids}
    return {d: a for d, a in final.items() if d not in test_ids}


def cmd_eval(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    schema = state.manifest.schema
    docs = store.read_docs()
    gold_by_doc = _gold_sets(store, "test")
    if not gold_by_doc:
        raise LoopError("empty-input", "no annotated test documents; plan --test and annotate first")
    gold = _as_set(gold_by_doc)

    preds = _read_predictions(args.file)
    pred_set = accelerate.import_predictions(preds, schema, docs)
    pred_pool = AnnotationSet.of("pool", [replace(a, annotator="pool") for a in pred_set.annotations.values()])

    metric = args.metric
    if metric == "auto":
        metric = {
            TaskKind.DOC_CLASS: "accuracy",
            TaskKind.SPAN_LABEL: "entity_f1",
            TaskKind.PAIR_REGRESS: "pearson",
        }[schema.task_kind]

    if metric in ("pearson", "spearman", "rmse"):
        doc_ids = agreement.shared_doc_ids(gold, pred_pool)
        gold_scores = [gold.annotations[d].payload.value for d in doc_ids]  # type: ignore[union-attr]
        pred_scores = [pred_pool.annotations[d].payload.value for d in doc_ids]  # type: ignore[union-attr]
        report = getattr(metrics, metric)(gold_scores, pred_scores)
    elif metric == "accuracy":
        report = metrics.accuracy(gold, pred_pool, schema)
    elif metric == "entity_f1":
        report = metrics.entity_f1(gold, pred_pool, schema)
    else:
        aggregation = metrics.Aggregation(metric.removeprefix("f1_"))
        report = metrics.precision_recall_f1(gold, pred_pool, schema, aggregation)

    print(f"{report.metric} {report.value:.12g} (n={report.support})")
    if report.precision is not None:
        print(f"  precision {report.precision:.12g}, recall {report.recall:.12g}")
    for label, value in (report.per_class or {}).items():
        print(f"  class {label}: {value:.12g}")
    if report.undefined_classes:
        print(f"  warning: undefined for classes {list(report.undefined_classes)}")


def cmd_curve(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    curve = store.read_curve()

    metric_name = args.metric
    if metric_name is None:
        if curve:
            metric_name = curve[-1].metric_name
        else:
            metric_name = {
                TaskKind.DOC_CLASS: "accuracy",
                TaskKind.SPAN_LABEL: "entity_f1",
                TaskKind.PAIR_REGRESS: "pearson",
            }[state.manifest.schema.task_kind]
    size = args.size
    if size is None:
        size = len(_gold_sets(store, "train"))
    rec = monitor.IterationRecord(
        iteration=len(curve) + 1,
        cumulative_train_size=size,
        metric_name=metric_name,
        metric_value=args.value,
        agreement_value=args.agreement,
    )
    curve = monitor.record_iteration(curve, rec)
    with store.lock():
        store.write_curve(curve)
    print(f"recorded iteration {rec.iteration}: {metric_name}={args.value:.12g} at size {size}")

    window = state.manifest.plateau_window
    if len(curve) < window + 1:
        print("plateau: curve too short")
        return
    status = monitor.detect_plateau(curve, state.manifest.plateau_epsilon, window)
    if status.plateaued:
        print(f"plateau reached (window starts at iteration {status.at_iteration})")
    else:
        print("no plateau yet")


def cmd_monitor_split(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    schema = state.manifest.schema
    train = _gold_sets(store, "train")
    test = _gold_sets(store, "test")
    if not train or not test:
        raise LoopError("empty-input", "need annotated documents on both sides of the split")
    train_dist = monitor.label_distribution(_as_set(train), schema)
    test_dist = monitor.label_distribution(_as_set(test), schema)
    report = monitor.check_representativeness(train_dist, test_dist, state.manifest.divergence_threshold)
    print(f"divergence {report.divergence:.12g} (threshold {state.manifest.divergence_threshold:g}): {report.status.value}")
    for label in sorted(set(train_dist.frequencies) | set(test_dist.frequencies)):
        tr = train_dist.frequencies.get(label, 0.0)
        te = test_dist.frequencies.get(label, 0.0)
        print(f"  {label}: train {tr:.4f}, test {te:.4f}")


def _stratify_labels(final: dict[str, Annotation], schema: LabelSchema) -> dict[str, str]:
    labels: dict[str, str] = {}
    for doc_id, ann in final.items():
        payload = ann.payload
        if schema.task_kind is TaskKind.DOC_CLASS:
            labels[doc_id] = payload.value  # type: ignore[union-attr]
        else:
            counts: dict[str, int] = {}
            for span in getattr(payload, "spans", ()):
                counts[span.label] = counts.get(span.label, 0) + 1
            # majority span label; span-less docs form their own stratum
            labels[doc_id] = max(sorted(counts), key=lambda l: counts[l]) if counts else "__none__"
    return labels


def cmd_resplit(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    schema = state.manifest.schema
    final = store.final_annotations()
    if len(final) < 2:
        raise LoopError("empty-input", "need at least two annotated documents to resplit")
    seed = args.seed if args.seed is not None else state.manifest.seed
    labels = None
    if args.stratified:
        if schema.task_kind is TaskKind.PAIR_REGRESS:
            raise LoopError("wrong-kind", "stratified resplit needs class labels")
        labels = _stratify_labels(final, schema)
    result = monitor.resplit(sorted(final), args.fraction, seed, args.stratified, labels)
    with store.lock():
        store.write_state(replace(state, test_doc_ids=result.test_ids))
    print(f"resplit: train {len(result.train_ids)}, test {len(result.test_ids)}")
    print(f"warning: {result.warning}")


# -- acceleration ----------------------------------------------------------------


def _read_rules(path_str: str) -> list[accelerate.WeakRule]:
    path = Path(path_str)
    if not path.is_file():
        raise LoopError("missing-file", f"no such file: {path}")
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise LoopError("bad-record", f"{path.name}: invalid JSON ({err.msg})") from None
    if not isinstance(records, list):
        raise LoopError("bad-record", f"{path.name}: rules file must be a JSON list")
    return [accelerate.rule_from_dict(r) for r in records]


def cmd_weak_label(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    rules = _read_rules(args.file)
    accelerate.validate_rules(rules, state.manifest.schema)
    docs = store.read_docs()
    annotated = set(store.final_annotations())
    targets = [doc for doc_id, doc in docs.items() if doc_id not in annotated]
    if len(targets) < len(docs):
        print(f"warning: skipping {len(docs) - len(targets)} already-annotated documents")
    aset = accelerate.weak_annotation_set(targets, rules, state.manifest.schema)
    with store.lock():
        store.write_pre_annotations(aset)
    print(f"weak rules matched {len(aset.annotations)} of {len(targets)} unannotated documents")


def cmd_bootstrap(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    docs = store.read_docs()
    preds = _read_predictions(args.file)
    annotated = set(store.final_annotations())
    skipped = [p for p in preds if p.doc_id in annotated]
    if skipped:
        print(f"warning: skipping {len(skipped)} predictions for already-annotated documents")
    kept = [p for p in preds if p.doc_id not in annotated]
    aset = accelerate.import_predictions(kept, state.manifest.schema, docs)
    with store.lock():
        store.write_pre_annotations(aset)
    print(f"imported {len(aset.annotations)} model pre-annotations")


def cmd_select(args: argparse.Namespace) -> None:
    store = _store(args)
    preds = _read_predictions(args.file)
    annotated = set(store.final_annotations())
    skipped = [p for p in preds if p.doc_id in annotated]
    if skipped:
        print(f"warning: skipping {len(skipped)} predictions for already-annotated documents")
    kept = [p for p in preds if p.doc_id not in annotated]
    seed = args.seed if args.seed is not None else store.read_state().manifest.seed
    chosen = accelerate.select_active(kept, args.strategy, args.k, seed)
    with store.lock():
        store.write_selection(args.strategy, chosen)
    print(f"selected {len(chosen)} documents ({args.strategy}):")
    for doc_id in chosen:
        print(f"  {doc_id}")


# -- schema operations -------------------------------------------------------------


def _all_annotation_paths(store: ProjectStore) -> list[tuple[Path, str]]:
    """Every stored annotation file with its set's annotator id."""
    out: list[tuple[Path, str]] = []
    for n in store.plan_iterations():
        it_dir = store.root / "annotations" / f"iter-{n}"
        if it_dir.is_dir():
            for p in sorted(it_dir.glob("*.jsonl")):
                out.append((p, p.stem))
        resolved = store.resolved_path(n)
        if resolved.is_file():
            out.append((resolved, "consensus"))
    for who in ("weak", "model"):
        p = store.pre_annotation_path(who)
        if p.is_file():
            out.append((p, who))
    return out


def cmd_adjust(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    schema = state.manifest.schema
    adj = schema_ops.ClassAdjustment(
        schema_ops.AdjustKind(args.op), tuple(args.sources), args.target
    )

    paths = _all_annotation_paths(store)
    sets = [store._read_set(p, who) for p, who in paths]
    result = schema_ops.apply_adjustment(sets, schema, adj)

    with store.lock():
        if adj.target is not None and adj.target not in schema.classes:
            # two-phase schema change so the store validates at every point
            widened = replace(schema, classes=schema.classes + (adj.target,))
            store.write_state(replace(state, manifest=replace(state.manifest, schema=widened)))
        for (p, _), new_set in zip(paths, result.sets):
            store._write_set(p, new_set)
        store.write_state(
            replace(
                state,
                manifest=replace(state.manifest, schema=result.schema),
                adjustments=state.adjustments + (adj,),
            )
        )
    log = result.log
    print(
        f"{adj.op.value} applied: touched {log.touched_annotations} annotations "
        f"(removed {log.removed_annotations} annotations, {log.removed_spans} spans; "
        f"relabeled {log.relabeled_annotations} annotations, {log.relabeled_spans} spans)"
    )
    print(f"schema classes now: {', '.join(result.schema.classes)}")


def cmd_guidelines(args: argparse.Namespace) -> None:
    store = _store(args)
    state = store.read_state()
    text = schema_ops.scaffold_guidelines(state.manifest.schema, args.description, args.example)
    out = Path(args.out) if args.out else store.root / "guidelines.md"
    out.write_text(text, encoding="utf-8")
    print(f"wrote guideline scaffold to {out}")


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="iterative text-annotation workflow toolkit")
    parser.add_argument("--root", help="project root (default: $ANNOLOOP_ROOT or the working directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a new project")
    p.add_argument("directory")
    p.add_argument("--task", required=True, choices=[k.value for k in TaskKind])
    p.add_argument("--classes", nargs="+")
    p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--annotators", nargs="+", required=True)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plateau-epsilon", type=float, default=0.01)
    p.add_argument("--plateau-window", type=int, default=2)
    p.add_argument("--divergence-threshold", type=float, default=0.1)
    p.add_argument("--score-tolerance", type=float, default=0.0)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("add-docs", help="add documents from a JSONL file")
    p.add_argument("file")
    p.set_defaults(func=cmd_add_docs)

    p = sub.add_parser("status", help="print project status")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("plan", help="plan the next annotation batch")
    p.add_argument("--mode", choices=[m.value for m in PlanMode], default="simple")
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--test", action="store_true", help="freeze this batch as the test set")
    p.add_argument("--from-selection", action="store_true", help="use the stored active-learning selection")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("export-tasks", help="export one annotator's task file")
    p.add_argument("annotator")
    p.add_argument("--iteration", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_tasks)

    p = sub.add_parser("import-annotations", help="import one annotator's completed tasks")
    p.add_argument("file")
    p.add_argument("--iteration", type=int)
    p.set_defaults(func=cmd_import_annotations)

    p = sub.add_parser("merge", help="merge both sides of each part into agreed fragments and conflicts")
    p.add_argument("--iteration", type=int)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("serve", help="serve the conflict-resolution HTTP API")
    p.add_argument("--iteration", type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="directory with a built frontend to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("apply-resolutions", help="apply resolutions into a final annotation set")
    p.add_argument("--iteration", type=int)
    p.add_argument("--file", help="resolutions JSON file (default: the store's resolution state)")
    p.set_defaults(func=cmd_apply_resolutions)

    p = sub.add_parser("agreement", help="inter-annotator agreement for a double-annotated iteration")
    p.add_argument("--iteration", type=int)
    p.add_argument("--metric", choices=["auto", "cohen_kappa", "fleiss_kappa", "pairwise_f1"], default="auto")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("eval", help="evaluate a predictions file against the test set")
    p.add_argument("file")
    p.add_argument(
        "--metric",
        choices=["auto", "accuracy", "f1_micro", "f1_macro", "f1_per_class", "entity_f1", "pearson", "spearman", "rmse"],
        default="auto",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="append a learning-curve record and check for a plateau")
    p.add_argument("--value", type=float, required=True)
    p.add_argument("--metric")
    p.add_argument("--size", type=int, help="cumulative train size (default: annotated train pool)")
    p.add_argument("--agreement", type=float)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("monitor-split", help="compare train and test label distributions")
    p.set_defaults(func=cmd_monitor_split)

    p = sub.add_parser("resplit", help="re-draw the train/test split (invalidates old evaluations)")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--stratified", action="store_true")
    p.set_defaults(func=cmd_resplit)

    p = sub.add_parser("weak-label", help="pre-annotate unlabeled documents with weak rules")
    p.add_argument("file", help="rules JSON file")
    p.set_defaults(func=cmd_weak_label)

    p = sub.add_parser("bootstrap", help="pre-annotate unlabeled documents with model predictions")
    p.add_argument("file", help="predictions JSONL file")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("select", help="pick the next batch by prediction uncertainty")
    p.add_argument("file", help="predictions JSONL file")
    p.add_argument("--strategy", choices=[s.value for s in accelerate.Strategy], default="least_confidence")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("adjust", help="apply a class-system adjustment to the whole corpus")
    p.add_argument("--op", required=True, choices=[k.value for k in schema_ops.AdjustKind])
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--target")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("guidelines", help="write an annotation-guideline scaffold")
    p.add_argument("--description", default="")
    p.add_argument("--example", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_guidelines)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except LoopError as err:
        print(f"error[{err.code}]: {err.message}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
