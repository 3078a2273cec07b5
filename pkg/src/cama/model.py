"""Core value types: knowledge points, QA records, replacement maps."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError

_WS = re.compile(r"\s+")


def normalize_key(text: str) -> str:
    """Canonical form of a knowledge-point label: lowercase, single-spaced.

    Idempotent, so labels echoed back by an LLM re-normalize to the same key.
    """
    return _WS.sub(" ", text).strip().lower()


@dataclass(frozen=True)
class KnowledgePoint:
    """A named mathematical concept: short label plus free-text description."""

    key: str
    description: str = ""

    def __post_init__(self):
        normalized = normalize_key(self.key)
        if not normalized:
            raise ValueError("knowledge point key is empty after normalization")
        object.__setattr__(self, "key", normalized)
        object.__setattr__(self, "description", self.description.strip())


@dataclass(frozen=True)
class QaRecord:
    """One question with its ground-truth answer and optional worked solution.

    ``answer`` may be empty only for ad-hoc questions that are never judged;
    corpus loaders reject empty answers.
    """

    id: str
    question: str
    answer: str = ""
    solution: str | None = None

    def __post_init__(self):
        if not self.id.strip():
            raise ValueError("record id is empty")
        if not self.question.strip():
            raise ValueError(f"record {self.id!r} has an empty question")


@dataclass(frozen=True)
class ReplacementMap:
    """Maps removed knowledge-point keys to the surviving key replacing them.

    Targets are never themselves removed, so a single lookup resolves
    every removed key.
    """

    pairs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        clean = {normalize_key(k): normalize_key(v) for k, v in self.pairs.items()}
        removed = set(clean)
        for src, dst in clean.items():
            if dst in removed:
                raise ValueError(
                    f"replacement target {dst!r} is itself removed (via {src!r})"
                )
            if src == dst:
                raise ValueError(f"{src!r} cannot replace itself")
        object.__setattr__(self, "pairs", clean)

    def resolve(self, key: str) -> str:
        """Surviving key for ``key``: itself unless it was removed."""
        return self.pairs.get(normalize_key(key), normalize_key(key))

    def __contains__(self, key: str) -> bool:
        return normalize_key(key) in self.pairs


def load_qa_records(path: str | Path) -> list[QaRecord]:
    """Load a QA corpus from a JSON list of records.

    Enforces corpus invariants: unique ids, non-empty answers.
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid QA file {path}: {e.msg}", position=e.pos) from e
    if not isinstance(data, list):
        raise ParseError(f"QA file {path} must contain a JSON list")
    records = []
    seen = set()
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise ParseError(f"QA entry {i} is not an object")
        try:
            rec = QaRecord(
                id=str(item["id"]),
                question=str(item["question"]),
                answer=str(item.get("answer", "")),
                solution=item.get("solution"),
            )
        except (KeyError, ValueError) as e:
            raise ParseError(f"QA entry {i} is invalid: {e}") from e
        if not rec.answer.strip():
            raise ParseError(f"QA entry {rec.id!r} has an empty answer")
        if rec.id in seen:
            raise ParseError(f"duplicate QA record id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def save_qa_records(records: list[QaRecord], path: str | Path) -> None:
    data = [
        {"id": r.id, "question": r.question, "answer": r.answer, "solution": r.solution}
        for r in records
    ]
    Path(path).write_text(
        json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
