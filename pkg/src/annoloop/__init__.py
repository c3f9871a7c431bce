"""Iterative text-annotation workflow toolkit.

Plan batches, merge double annotations into typed conflicts, resolve them,
measure agreement and model quality, watch the learning curve for a
plateau, monitor split representativeness, and accelerate annotation with
weak rules, bootstrapped predictions, and active learning.
"""

from .errors import LoopError
from .model import (
    Annotation,
    AnnotationSet,
    ClassPayload,
    Document,
    LabelSchema,
    Payload,
    ProjectManifest,
    Provenance,
    ScorePayload,
    Span,
    SpansPayload,
    TaskKind,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationSet",
    "ClassPayload",
    "Document",
    "LabelSchema",
    "LoopError",
    "Payload",
    "ProjectManifest",
    "Provenance",
    "ScorePayload",
    "Span",
    "SpansPayload",
    "TaskKind",
    "__version__",
]
