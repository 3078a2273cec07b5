import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fake_llm import FakeLlm, question_text  # noqa: E402

from cama.model import KnowledgePoint, QaRecord  # noqa: E402


@pytest.fixture
def fake_llm():
    return FakeLlm()


def make_corpus(spec: list[tuple[str, int, int, list[str]]]) -> list[QaRecord]:
    """Build fixture records from (id, a, b, kps) tuples; answer is a+b."""
    return [
        QaRecord(
            id=qa_id,
            question=question_text(qa_id, a, b, kps),
            answer=str(a + b),
            solution=f"Add {a} and {b} directly. [kps: {'; '.join(kps)}]",
        )
        for qa_id, a, b, kps in spec
    ]


@pytest.fixture
def small_corpus() -> list[QaRecord]:
    """Four solved questions over three knowledge points."""
    return make_corpus(
        [
            ("q01", 3, 4, ["alpha", "beta"]),
            ("q02", 10, 5, ["alpha"]),
            ("q03", 2, 2, ["beta", "gamma"]),
            ("q04", 7, 1, ["alpha", "gamma"]),
        ]
    )


def geometry_points() -> tuple[KnowledgePoint, KnowledgePoint, KnowledgePoint]:
    return (
        KnowledgePoint("Area of a circle", "area enclosed by a circle"),
        KnowledgePoint("Volume of a cylinder", "capacity of a cylinder"),
        KnowledgePoint("Volume of a cone", "capacity of a cone"),
    )
