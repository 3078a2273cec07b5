"""Graph-guided answering and the evaluation harness.

A question is answered in three steps: generate a reasoning trace, let
the model pick the relevant knowledge points from the verbalized graph,
then answer with the induced subgraph injected into the prompt. Failures
at any step produce a failed (incorrect) outcome instead of aborting.
"""

from __future__ import annotations

import decimal
import logging
import re
from dataclasses import dataclass, field
from typing import Callable

from .client import ChatClient, ChatRequest
from .errors import CamaError, EmptyTestSet
from .graph import Mcg, extract_subgraph, verbalize
from .model import QaRecord
from .parsers import parse_answer, parse_chosen_factors
from .templates import render_template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReasoningOutcome:
    qa_id: str
    trace: str
    chosen: frozenset[int]
    subgraph: Mcg
    raw_answer: str
    parsed_answer: str
    correct: bool
    failed: bool = False
    failure: str | None = None

    def summary(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "chosen": sorted(self.chosen),
            "matched_points": len(self.chosen),
            "parsed_answer": self.parsed_answer,
            "correct": self.correct,
            "failed": self.failed,
            "failure": self.failure,
        }


@dataclass(frozen=True)
class EvalReport:
    n: int
    repetitions: int
    correct_cells: int
    total_cells: int
    pass_at_1: float
    matched_fraction: float
    mean_matched: float
    per_question: tuple[dict, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "repetitions": self.repetitions,
            "correct_cells": self.correct_cells,
            "total_cells": self.total_cells,
            "pass_at_1": self.pass_at_1,
            "matched_stats": {
                "matched_fraction": self.matched_fraction,
                "mean_matched": self.mean_matched,
            },
            "per_question": list(self.per_question),
        }


# a judge decides whether a predicted answer matches the ground truth;
# the exact-match judge below is the only built-in implementation, but an
# equivalence judge backed by another model can be plugged in through the
# same signature
Judge = Callable[[str, str], bool]

_NUMBER = re.compile(r"[+-]?\d+(?:\.\d+)?")


def _canonical_number(text: str) -> decimal.Decimal | None:
    cleaned = text.strip().replace(",", "")
    if not _NUMBER.fullmatch(cleaned):
        return None
    try:
        return decimal.Decimal(cleaned)
    except decimal.InvalidOperation:
        return None


def judge_exact(predicted: str, truth: str) -> bool:
    """Strict equality after canonicalization.

    Numeric answers compare as exact decimals (so leading zeros and
    thousands separators are forgiven); everything else compares as
    case-folded, whitespace-collapsed strings. No symbolic equivalence.
    """
    p_num, t_num = _canonical_number(predicted), _canonical_number(truth)
    if p_num is not None and t_num is not None:
        return p_num == t_num
    norm = lambda s: re.sub(r"\s+", " ", s).strip().casefold()
    return norm(predicted) == norm(truth)


def _format_question_think(question: str, trace: str) -> str:
    return f"{question}\n\n{trace}"


def answer_question(
    g: Mcg,
    q: QaRecord,
    gateway: ChatClient,
    temperature: float = 0.6,
    judge: Judge = judge_exact,
) -> ReasoningOutcome:
    """Run the trace / subgraph-match / answer pipeline for one question."""
    trace = ""
    chosen: set[int] = set()
    subgraph = extract_subgraph(g, ())
    raw_answer = ""
    try:
        trace = gateway.complete(
            ChatRequest(
                prompt=render_template("p_t", {"question": q.question}),
                tag="p_t",
                temperature=temperature,
            )
        )

        full_view = verbalize(g)
        match_prompt = render_template(
            "p_m",
            {
                "question_think": _format_question_think(q.question, trace),
                "knowledge_point_descriptions": full_view.elements_text(),
            },
        )
        match_raw = gateway.complete(
            ChatRequest(prompt=match_prompt, tag="p_m", temperature=temperature)
        )
        chosen = parse_chosen_factors(match_raw, g.k)
        subgraph = extract_subgraph(g, chosen)

        sub_view = verbalize(subgraph)
        answer_prompt = render_template(
            "p_a",
            {
                "question": q.question,
                "chosen_knowledge_points": sub_view.elements_text(),
                "knowledge_point_relations": sub_view.relations_text(),
            },
        )
        raw_answer = gateway.complete(
            ChatRequest(prompt=answer_prompt, tag="p_a", temperature=temperature)
        )
        parsed = parse_answer(raw_answer)
    except CamaError as e:
        logger.warning("question %s failed: %s", q.id, e)
        return ReasoningOutcome(
            qa_id=q.id,
            trace=trace,
            chosen=frozenset(chosen),
            subgraph=subgraph,
            raw_answer=raw_answer,
            parsed_answer="",
            correct=False,
            failed=True,
            failure=f"{type(e).__name__}: {e}",
        )

    correct = judge(parsed.answer, q.answer) if q.answer else False
    return ReasoningOutcome(
        qa_id=q.id,
        trace=trace,
        chosen=frozenset(chosen),
        subgraph=subgraph,
        raw_answer=raw_answer,
        parsed_answer=parsed.answer,
        correct=correct,
    )


def evaluate(
    g: Mcg,
    test: list[QaRecord],
    gateway: ChatClient,
    repetitions: int = 1,
    temperature: float = 0.6,
    judge: Judge = judge_exact,
) -> EvalReport:
    """Pass@1 over all (question, repetition) cells, plus match statistics."""
    if not test:
        raise EmptyTestSet("evaluation requested over zero questions")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")

    outcomes: list[tuple[int, int, ReasoningOutcome]] = []
    for qi, record in enumerate(test):
        for rep in range(repetitions):
            outcome = answer_question(
                g, record, gateway, temperature=temperature, judge=judge
            )
            outcomes.append((qi, rep, outcome))

    outcomes.sort(key=lambda item: (item[0], item[1]))
    total = len(outcomes)
    correct = sum(1 for _, _, o in outcomes if o.correct)
    matched = [len(o.chosen) for _, _, o in outcomes if o.chosen]
    per_question = tuple(
        {"repetition": rep, **o.summary()} for _, rep, o in outcomes
    )
    return EvalReport(
        n=len(test),
        repetitions=repetitions,
        correct_cells=correct,
        total_cells=total,
        pass_at_1=correct / total,
        matched_fraction=len(matched) / total,
        mean_matched=sum(matched) / len(matched) if matched else 0.0,
        per_question=per_question,
    )
