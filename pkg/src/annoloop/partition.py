"""Batch planning: simple splits, review permutations, cross-annotation schedules.

All planners are pure and deterministic: both the document order and the
roster order are shuffled with the given seed before parts are laid out, so
identical inputs always produce identical plans.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import LoopError


class PlanMode(str, Enum):
    SIMPLE = "simple"
    REVIEW = "review"
    CROSS = "cross"


class Role(str, Enum):
    ANNOTATE = "annotate"
    REVIEW = "review"


@dataclass(frozen=True)
class Part:
    index: int
    doc_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.doc_ids:
            raise LoopError("bad-part", f"part {self.index} has no documents")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise LoopError("bad-part", f"part {self.index} has duplicate documents")


@dataclass(frozen=True)
class Assignment:
    part: Part
    annotators: tuple[str, ...]
    role: Role

    def __post_init__(self):
        if len(set(self.annotators)) != len(self.annotators):
            raise LoopError("bad-assignment", "assignment annotators must be distinct")
        want = (1,) if self.role is Role.REVIEW else (1, 2)
        if len(self.annotators) not in want:
            raise LoopError("bad-assignment", f"{self.role.value} assignment takes {want} annotators")


@dataclass(frozen=True)
class BatchPlan:
    """One iteration's plan; `roster` is the seeded annotator order used."""

    iteration: int
    mode: PlanMode
    roster: tuple[str, ...]
    assignments: tuple[Assignment, ...]

    @property
    def parts(self) -> tuple[Part, ...]:
        seen: dict[int, Part] = {}
        for a in self.assignments:
            seen.setdefault(a.part.index, a.part)
        return tuple(seen[i] for i in sorted(seen))

    def batch_doc_ids(self) -> tuple[str, ...]:
        out: list[str] = []
        for part in self.parts:
            out.extend(part.doc_ids)
        return tuple(out)

    def annotate_doc_ids(self, annotator: str) -> tuple[str, ...]:
        """Documents this annotator must annotate (not review)."""
        out: list[str] = []
        for a in self.assignments:
            if a.role is Role.ANNOTATE and annotator in a.annotators:
                out.extend(a.part.doc_ids)
        return tuple(out)

    def assigned_doc_ids(self, annotator: str) -> tuple[str, ...]:
        """Documents this annotator touches in any role."""
        out: list[str] = []
        seen: set[str] = set()
        for a in self.assignments:
            if annotator in a.annotators:
                for d in a.part.doc_ids:
                    if d not in seen:
                        seen.add(d)
                        out.append(d)
        return tuple(out)

    def annotators_of_part(self, index: int) -> tuple[str, ...]:
        for a in self.assignments:
            if a.role is Role.ANNOTATE and a.part.index == index:
                return a.annotators
        raise LoopError("bad-part", f"no annotate assignment for part {index}")

    def reviewer_of_part(self, index: int) -> str | None:
        for a in self.assignments:
            if a.role is Role.REVIEW and a.part.index == index:
                return a.annotators[0]
        return None


def _shuffled(items: Iterable[str], rng: random.Random) -> list[str]:
    # Sort first so the outcome depends only on the seed and the set of items,
    # never on the order the caller happened to produce them in.
    out = sorted(items)
    rng.shuffle(out)
    return out


def _round_robin(doc_ids: Sequence[str], n_parts: int) -> list[Part]:
    buckets: list[list[str]] = [[] for _ in range(n_parts)]
    for i, doc_id in enumerate(doc_ids):
        buckets[i % n_parts].append(doc_id)
    return [Part(i, tuple(b)) for i, b in enumerate(buckets)]


def split_batch(doc_ids: Sequence[str], annotators: Sequence[str], seed: int, iteration: int = 1) -> BatchPlan:
    """One part per annotator, sizes within 1, shuffle then round-robin."""
    if not doc_ids:
        raise LoopError("empty-batch", "cannot plan an empty batch")
    if len(set(doc_ids)) != len(doc_ids):
        raise LoopError("duplicate-doc", "batch contains duplicate document ids")
    if not annotators:
        raise LoopError("empty-roster", "cannot plan without annotators")
    rng = random.Random(seed)
    docs = _shuffled(doc_ids, rng)
    roster = _shuffled(annotators, rng)
    # Fewer documents than annotators: only the first len(docs) get a part.
    n_parts = min(len(roster), len(docs))
    parts = _round_robin(docs, n_parts)
    assignments = tuple(Assignment(part, (roster[part.index],), Role.ANNOTATE) for part in parts)
    return BatchPlan(iteration, PlanMode.SIMPLE, tuple(roster), assignments)


def assign_review(plan: BatchPlan) -> BatchPlan:
    """Add one reviewer per part: cyclic shift by 1 in plan roster order."""
    if plan.mode is not PlanMode.SIMPLE:
        raise LoopError("bad-plan", f"review assignment requires a simple plan, got {plan.mode.value}")
    roster = plan.roster
    if len(roster) < 2:
        raise LoopError("no-derangement", "no valid review permutation exists for a single annotator")
    position = {a: i for i, a in enumerate(roster)}
    reviews = []
    for a in plan.assignments:
        annotator = a.annotators[0]
        reviewer = roster[(position[annotator] + 1) % len(roster)]
        reviews.append(Assignment(a.part, (reviewer,), Role.REVIEW))
    return BatchPlan(plan.iteration, PlanMode.REVIEW, roster, plan.assignments + tuple(reviews))


def assign_cross(doc_ids: Sequence[str], annotators: Sequence[str], seed: int, iteration: int = 1) -> BatchPlan:
    """Pairwise double annotation: part i goes to annotators (i, i+1 mod n).

    Every document is covered by exactly two annotators and workloads stay
    within two documents of each other.
    """
    if not doc_ids:
        raise LoopError("empty-batch", "cannot plan an empty batch")
    if len(set(doc_ids)) != len(doc_ids):
        raise LoopError("duplicate-doc", "batch contains duplicate document ids")
    if len(annotators) < 2:
        raise LoopError("roster-too-small", "cross-annotation requires at least 2 annotators")
    rng = random.Random(seed)
    docs = _shuffled(doc_ids, rng)
    roster = _shuffled(annotators, rng)
    n = len(roster)
    n_parts = min(n, len(docs))
    parts = _round_robin(docs, n_parts)
    assignments = tuple(
        Assignment(part, (roster[part.index % n], roster[(part.index + 1) % n]), Role.ANNOTATE) for part in parts
    )
    return BatchPlan(iteration, PlanMode.CROSS, tuple(roster), assignments)
