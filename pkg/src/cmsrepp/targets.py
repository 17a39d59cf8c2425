"""Shrinking targets: single cylinders [w] or unions [Delta^n]."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .shift_core import Word


@dataclass(frozen=True)
class CylinderTarget:
    """``form`` is ``"word"`` (with optional integer ``level`` for skew products) or ``"union_delta"``."""

    form: str
    measure: float
    depth: int
    word: Word | None = None
    delta: tuple = ()
    level: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.measure > 0:
            raise ValueError("target must have positive measure")
        if self.form == "word":
            if self.word is None or self.word.depth != self.depth:
                raise ValueError("word target needs a word of the stated depth")
        elif self.form == "union_delta":
            if not self.delta:
                raise ValueError("union target needs a nonempty Delta")
        else:
            raise ValueError(f"unknown target form {self.form!r}")

    def contains(self, symbols) -> bool:
        """Membership of a sequence (its first ``depth`` symbols)."""
        head = tuple(symbols[: self.depth])
        if len(head) < self.depth:
            return False
        if self.form == "word":
            return head == self.word.symbols
        return all(s in self.delta for s in head)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"form": self.form, "measure": self.measure, "depth": self.depth}
        if self.word is not None:
            doc["word"] = list(self.word.symbols)
        if self.delta:
            doc["delta"] = list(self.delta)
        if self.level is not None:
            doc["level"] = self.level
        return doc
