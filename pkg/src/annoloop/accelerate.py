"""Pre-annotation and batch selection: weak rules, model predictions,
and uncertainty-based active learning.

Weak rules are deliberately small: literal token sequences and a negation
construct (a prefix token followed by a word from a positive lexicon).
Conflicting rule votes abstain rather than guess; pre-annotations carry
weak/model provenance so they are always shown as correctable, never gold.
"""

from __future__ import annotations

import math
import random
import re
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
    Span,
    SpansPayload,
    TaskKind,
    payload_from_dict,
    payload_to_dict,
    spans_payload,
    validate_annotation,
)

WEAK_ANNOTATOR = "weak"
MODEL_ANNOTATOR = "model"

_TOKEN = re.compile(r"\w+", re.UNICODE)


class RuleKind(str, Enum):
    LITERAL = "literal"
    NEGATED_POSITIVE = "negated_positive"


@dataclass(frozen=True)
class WeakRule:
    """One noisy labeling rule; lower priority number = stronger vote."""

    rule_id: str
    kind: RuleKind
    label: str
    priority: int
    tokens: tuple[str, ...] = ()
    prefix: str = ""
    lexicon: tuple[str, ...] = ()
    case_sensitive: bool = False

    def __post_init__(self):
        if not self.rule_id:
            raise LoopError("bad-rule", "rule_id must be non-empty")
        if not self.label:
            raise LoopError("bad-rule", f"rule {self.rule_id!r}: label must be non-empty")
        if self.kind is RuleKind.LITERAL:
            if not self.tokens or any(not t for t in self.tokens):
                raise LoopError("bad-rule", f"rule {self.rule_id!r}: literal needs non-empty tokens")
        else:
            if not self.prefix or not self.lexicon or any(not w for w in self.lexicon):
                raise LoopError(
                    "bad-rule", f"rule {self.rule_id!r}: negated_positive needs a prefix and a lexicon"
                )


def validate_rules(rules: Sequence[WeakRule], schema: LabelSchema) -> None:
    if schema.task_kind is TaskKind.PAIR_REGRESS:
        raise LoopError("wrong-kind", "weak rules apply to class and span tasks only")
    assert schema.classes is not None
    ids = set()
    for rule in rules:
        if rule.rule_id in ids:
            raise LoopError("bad-rule", f"duplicate rule_id {rule.rule_id!r}")
        ids.add(rule.rule_id)
        if rule.label not in schema.classes:
            raise LoopError("unknown-class", f"rule {rule.rule_id!r} labels unknown class {rule.label!r}")


def _tokenize(text: str) -> list[tuple[int, int, str]]:
    return [(m.start(), m.end(), m.group()) for m in _TOKEN.finditer(text)]


def _fold(token: str, case_sensitive: bool) -> str:
    return token if case_sensitive else token.lower()


def _rule_matches(rule: WeakRule, tokens: Sequence[tuple[int, int, str]]) -> list[tuple[int, int]]:
    """Character ranges where the rule fires."""
    matches = []
    if rule.kind is RuleKind.LITERAL:
        want = [_fold(t, rule.case_sensitive) for t in rule.tokens]
        for i in range(len(tokens) - len(want) + 1):
            got = [_fold(tokens[i + j][2], rule.case_sensitive) for j in range(len(want))]
            if got == want:
                matches.append((tokens[i][0], tokens[i + len(want) - 1][1]))
    else:
        prefix = _fold(rule.prefix, rule.case_sensitive)
        lexicon = {_fold(w, rule.case_sensitive) for w in rule.lexicon}
        for i in range(len(tokens) - 1):
            if _fold(tokens[i][2], rule.case_sensitive) == prefix:
                if _fold(tokens[i + 1][2], rule.case_sensitive) in lexicon:
                    matches.append((tokens[i][0], tokens[i + 1][1]))
    return matches


def apply_weak_rules(doc: Document, rules: Sequence[WeakRule], schema: LabelSchema) -> Annotation | None:
    """Vote the rules over one document; None means the rules abstain."""
    validate_rules(rules, schema)
    tokens = _tokenize(doc.text)
    fired: list[tuple[WeakRule, tuple[int, int]]] = []
    for rule in rules:
        for rng in _rule_matches(rule, tokens):
            fired.append((rule, rng))
    if not fired:
        return None

    if schema.task_kind is TaskKind.DOC_CLASS:
        best = min(rule.priority for rule, _ in fired)
        labels = {rule.label for rule, _ in fired if rule.priority == best}
        if len(labels) != 1:
            return None  # equally strong rules disagree
        payload: Payload = ClassPayload(labels.pop())
        return Annotation(doc.id, WEAK_ANNOTATOR, Provenance.WEAK, payload)

    # Span task: one candidate per match; a candidate survives only if every
    # overlapping candidate is strictly weaker (ties drop both sides).
    candidates: dict[tuple[int, int, str], int] = {}
    for rule, (start, end) in fired:
        key = (start, end, rule.label)
        if key not in candidates or rule.priority < candidates[key]:
            candidates[key] = rule.priority
    items = [(Span(s, e, label), prio) for (s, e, label), prio in candidates.items()]
    survivors = []
    for span, prio in items:
        beaten = any(
            other is not span and other.start < span.end and span.start < other.end and other_prio <= prio
            for other, other_prio in items
        )
        if not beaten:
            survivors.append(span)
    if not survivors:
        return None
    return Annotation(doc.id, WEAK_ANNOTATOR, Provenance.WEAK, spans_payload(survivors))


def weak_annotation_set(
    docs: Sequence[Document], rules: Sequence[WeakRule], schema: LabelSchema
) -> AnnotationSet:
    """Rule pre-annotations over a corpus; only matching docs get records."""
    annotations = []
    for doc in docs:
        ann = apply_weak_rules(doc, rules, schema)
        if ann is not None:
            annotations.append(ann)
    return AnnotationSet.of(WEAK_ANNOTATOR, annotations)


@dataclass(frozen=True)
class Prediction:
    """Model output for one document: a class-probability map or a payload."""

    doc_id: str
    scores: Mapping[str, float] | None = None
    payload: Payload | None = None

    def __post_init__(self):
        if (self.scores is None) == (self.payload is None):
            raise LoopError("bad-record", f"prediction {self.doc_id!r}: exactly one of scores/payload")
        if self.scores is not None:
            if not self.scores:
                raise LoopError("bad-record", f"prediction {self.doc_id!r}: empty scores")
            for label, p in self.scores.items():
                if not 0.0 <= p <= 1.0:
                    raise LoopError("bad-record", f"prediction {self.doc_id!r}: score {p} for {label!r}")
            total = sum(self.scores.values())
            if abs(total - 1.0) > 1e-6:
                raise LoopError("bad-record", f"prediction {self.doc_id!r}: scores sum to {total}")


def import_predictions(
    preds: Sequence[Prediction],
    schema: LabelSchema,
    docs: Mapping[str, Document],
) -> AnnotationSet:
    """Turn predictions into a provenance=model annotation set."""
    annotations = []
    for pred in preds:
        doc = docs.get(pred.doc_id)
        if doc is None:
            raise LoopError("unknown-doc", f"prediction for unknown document {pred.doc_id!r}")
        if pred.scores is not None:
            if schema.task_kind is not TaskKind.DOC_CLASS:
                raise LoopError("wrong-kind", f"score map needs a doc_class task ({pred.doc_id!r})")
            assert schema.classes is not None
            unknown = sorted(set(pred.scores) - set(schema.classes))
            if unknown:
                raise LoopError("unknown-class", f"prediction {pred.doc_id!r} scores unknown {unknown}")
            best = max(pred.scores.values())
            # argmax with ties broken by schema class order
            label = next(c for c in schema.classes if pred.scores.get(c) == best)
            payload: Payload = ClassPayload(label)
        else:
            assert pred.payload is not None
            payload = pred.payload
        ann = Annotation(pred.doc_id, MODEL_ANNOTATOR, Provenance.MODEL, payload)
        report = validate_annotation(ann, doc, schema)
        if not report.ok:
            raise LoopError("bad-prediction", f"{pred.doc_id!r}: " + "; ".join(report.messages()))
        annotations.append(ann)
    return AnnotationSet.of(MODEL_ANNOTATOR, annotations)


class Strategy(str, Enum):
    LEAST_CONFIDENCE = "least_confidence"
    MARGIN = "margin"
    ENTROPY = "entropy"
    RANDOM = "random"


def _entropy(scores: Mapping[str, float]) -> float:
    return -sum(p * math.log(p) for p in scores.values() if p > 0.0)


def select_active(
    preds: Sequence[Prediction],
    strategy: Strategy | str,
    k: int,
    seed: int = 0,
) -> list[str]:
    """Pick the next batch's doc_ids, most informative first.

    Ties always break by doc_id so selection is deterministic.
    """
    strategy = Strategy(strategy)
    if k < 1:
        raise LoopError("bad-k", f"k must be >= 1, got {k}")
    if not preds:
        raise LoopError("empty-input", "no predictions to select from")
    ids = [p.doc_id for p in preds]
    if len(set(ids)) != len(ids):
        raise LoopError("bad-record", "duplicate doc_ids in prediction pool")
    size = min(k, len(preds))

    if strategy is Strategy.RANDOM:
        rng = random.Random(seed)
        return rng.sample(sorted(ids), size)

    keyed = []
    for pred in preds:
        if pred.scores is None:
            raise LoopError("missing-scores", f"{pred.doc_id!r} has no class scores")
        ordered = sorted(pred.scores.values(), reverse=True)
        if strategy is Strategy.LEAST_CONFIDENCE:
            key = ordered[0]
        elif strategy is Strategy.MARGIN:
            key = ordered[0] - (ordered[1] if len(ordered) > 1 else 0.0)
        else:
            key = -_entropy(pred.scores)
        keyed.append((key, pred.doc_id))
    keyed.sort()
    return [doc_id for _, doc_id in keyed[:size]]


# -- wire formats --


def rule_to_dict(rule: WeakRule) -> dict[str, Any]:
    record: dict[str, Any] = {
        "rule_id": rule.rule_id,
        "kind": rule.kind.value,
        "label": rule.label,
        "priority": rule.priority,
        "case_sensitive": rule.case_sensitive,
    }
    if rule.kind is RuleKind.LITERAL:
        record["tokens"] = list(rule.tokens)
    else:
        record["prefix"] = rule.prefix
        record["lexicon"] = list(rule.lexicon)
    return record


def rule_from_dict(record: Mapping[str, Any]) -> WeakRule:
    base = {"rule_id", "kind", "label", "priority"}
    optional = {"case_sensitive"}
    try:
        kind = RuleKind(record.get("kind"))
    except ValueError:
        raise LoopError("bad-record", f"rule: unknown kind {record.get('kind')!r}") from None
    allowed = base | optional | ({"tokens"} if kind is RuleKind.LITERAL else {"prefix", "lexicon"})
    unknown = sorted(set(record) - allowed)
    if unknown:
        raise LoopError("bad-record", f"rule: unknown fields {unknown}")
    missing = sorted((allowed - optional) - set(record))
    if missing:
        raise LoopError("bad-record", f"rule: missing fields {missing}")
    if not isinstance(record["priority"], int) or isinstance(record["priority"], bool):
        raise LoopError("bad-record", "rule: priority must be an integer")
    case_sensitive = record.get("case_sensitive", False)
    if not isinstance(case_sensitive, bool):
        raise LoopError("bad-record", "rule: case_sensitive must be a boolean")
    common = dict(
        rule_id=str(record["rule_id"]),
        kind=kind,
        label=str(record["label"]),
        priority=record["priority"],
        case_sensitive=case_sensitive,
    )
    if kind is RuleKind.LITERAL:
        tokens = record["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise LoopError("bad-record", "rule: tokens must be a list of strings")
        return WeakRule(tokens=tuple(tokens), **common)
    lexicon = record["lexicon"]
    if not isinstance(lexicon, list) or not all(isinstance(w, str) for w in lexicon):
        raise LoopError("bad-record", "rule: lexicon must be a list of strings")
    return WeakRule(prefix=str(record["prefix"]), lexicon=tuple(lexicon), **common)


def prediction_to_dict(pred: Prediction) -> dict[str, Any]:
    if pred.scores is not None:
        return {"doc_id": pred.doc_id, "scores": dict(sorted(pred.scores.items()))}
    assert pred.payload is not None
    return {"doc_id": pred.doc_id, "payload": payload_to_dict(pred.payload)}


def prediction_from_dict(record: Mapping[str, Any]) -> Prediction:
    if set(record) == {"doc_id", "scores"}:
        scores = record["scores"]
        if not isinstance(scores, Mapping):
            raise LoopError("bad-record", "prediction: scores must be an object")
        clean = {}
        for label, p in scores.items():
            if not isinstance(p, (int, float)) or isinstance(p, bool):
                raise LoopError("bad-record", f"prediction: score for {label!r} must be a number")
            clean[str(label)] = float(p)
        return Prediction(str(record["doc_id"]), scores=clean)
    if set(record) == {"doc_id", "payload"}:
        return Prediction(str(record["doc_id"]), payload=payload_from_dict(record["payload"]))
    raise LoopError("bad-record", "prediction: fields must be doc_id plus scores or payload")
