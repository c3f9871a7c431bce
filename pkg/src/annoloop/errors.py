"""Operational errors carrying stable machine-readable codes."""

from __future__ import annotations


class LoopError(Exception):
    """Failure of an operation on otherwise well-formed input.

    `code` is a short kebab-case identifier, stable across releases; the CLI
    prints it as `error[<code>]: <message>` and exits nonzero.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"
