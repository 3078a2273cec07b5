"""Learning stage: dataset construction, knowledge extraction, matrix
assembly, causal discovery, and feedback-driven graph alignment.

The alignment loop answers batches of questions with the current graph,
asks the model to revise the edges it saw, and keeps whichever epoch
graph scores best on the full alignment subset.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .client import ChatClient, ChatRequest
from .discovery import discover_cpdag
from .errors import CamaError, CycleError, EmptyDataset, UnknownKey
from .graph import Mcg, graphs_equal, save_graph, verbalize
from .matrix import IncidenceMatrix
from .model import KnowledgePoint, QaRecord, ReplacementMap
from .parsers import (
    RelationEdit,
    parse_answer,
    parse_dedup,
    parse_extracted_points,
    parse_relation_edits,
)
from .reasoning import answer_question, judge_exact
from .templates import render_template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtractionRecord:
    qa_id: str
    points: tuple[KnowledgePoint, ...]


@dataclass(frozen=True)
class AlignmentConfig:
    """Knobs of the alignment loop. ``m=None`` aligns on the whole dataset."""

    m: int | None = None
    s_b: int = 5
    n_e: int = 10
    r: int = 7
    c_stop: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.s_b < 1:
            raise ValueError("batch size s_b must be >= 1")
        if self.n_e < 1:
            raise ValueError("epoch count n_e must be >= 1")
        if self.r < 0:
            raise ValueError("history length r must be >= 0")
        if self.c_stop < 1:
            raise ValueError("early-stop threshold c_stop must be >= 1")
        if self.m is not None and self.m < self.s_b:
            raise ValueError("alignment subset size m must be >= s_b")


class AlignmentHistory:
    """Ring of the most recent (graph, precision) pairs, capped at r."""

    def __init__(self, r: int):
        self.r = r
        self.entries: list[tuple[Mcg, float]] = []

    def push(self, graph: Mcg, precision: float) -> None:
        if not 0.0 <= precision <= 1.0:
            raise ValueError("precision must lie in [0, 1]")
        self.entries.append((graph, precision))
        if len(self.entries) > self.r:
            del self.entries[: len(self.entries) - self.r]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RoundQuadruple:
    question: str
    solution: str | None
    subgraph: Mcg
    correct: bool


@dataclass(frozen=True)
class RoundResult:
    graph: Mcg
    precision: float
    quadruples: tuple[RoundQuadruple, ...]
    edits_applied: int = 0
    edits_rejected: int = 0
    edits_skipped: int = 0


@dataclass
class AlignmentReport:
    rounds: list[dict] = field(default_factory=list)
    epoch_evals: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_precision: float = 0.0
    stop_reason: str = "completed"
    subset_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --- dataset construction ----------------------------------------------------


def build_dataset(
    qa: list[QaRecord], gateway: ChatClient, temperature: float = 0.6
) -> list[QaRecord]:
    """Generate a solution per question and keep records the model solved.

    A record survives only when the generated answer matches the ground
    truth exactly; failures and wrong answers are dropped and logged.
    """
    retained: list[QaRecord] = []
    for rec in qa:
        if rec.solution is not None:
            raise ValueError(f"record {rec.id!r} already has a solution")
        try:
            raw = gateway.complete(
                ChatRequest(
                    prompt=render_template("p_g", {"question": rec.question}),
                    tag="p_g",
                    temperature=temperature,
                )
            )
            parsed = parse_answer(raw)
        except CamaError as e:
            logger.warning("dropping %s: generation failed (%s)", rec.id, e)
            continue
        if not judge_exact(parsed.answer, rec.answer):
            logger.info(
                "dropping %s: predicted %r != truth %r", rec.id, parsed.answer, rec.answer
            )
            continue
        solution = parsed.think if parsed.think else raw
        retained.append(dataclasses.replace(rec, solution=solution))
    if not retained:
        raise EmptyDataset("no question was answered correctly during construction")
    return retained


# --- extraction / deduplication / matrix -------------------------------------


def _format_qa_pair(rec: QaRecord) -> str:
    return f"Question:\n{rec.question}\n\nSolution:\n{rec.solution or ''}"


def extract_all(
    qs: list[QaRecord],
    granularity: int,
    gateway: ChatClient,
    temperature: float = 0.6,
) -> list[ExtractionRecord]:
    """One independent extraction call per pair; order preserved.

    Parse failures degrade to an empty point list for that record.
    """
    records: list[ExtractionRecord] = []
    for rec in qs:
        prompt = render_template(
            "p_p",
            {"question_solution_pairs": _format_qa_pair(rec), "lambda": str(granularity)},
        )
        try:
            raw = gateway.complete(
                ChatRequest(prompt=prompt, tag="p_p", temperature=temperature)
            )
            points = parse_extracted_points(raw, granularity).points
        except CamaError as e:
            logger.warning("extraction failed for %s: %s", rec.id, e)
            points = ()
        records.append(ExtractionRecord(qa_id=rec.id, points=points))
    return records


def union_points(records: list[ExtractionRecord]) -> list[KnowledgePoint]:
    """Union of all extracted points by key, first-seen description wins."""
    seen: dict[str, KnowledgePoint] = {}
    for rec in records:
        for point in rec.points:
            seen.setdefault(point.key, point)
    return list(seen.values())


def deduplicate(
    records: list[ExtractionRecord],
    gateway: ChatClient,
    temperature: float = 0.6,
) -> tuple[list[KnowledgePoint], ReplacementMap]:
    """Ask the model which points are redundant and fold them away.

    On any parse problem the dedup degrades to the identity (union kept,
    empty replacement map) so the pipeline can proceed.
    """
    pool = union_points(records)
    if not pool:
        return [], ReplacementMap()
    listing = "\n".join(f"- **{p.key}**: {p.description}" for p in pool)
    prompt = render_template("p_r", {"list_all_knowledge_points": listing})
    pool_keys = {p.key for p in pool}
    try:
        raw = gateway.complete(
            ChatRequest(prompt=prompt, tag="p_r", temperature=temperature)
        )
        result = parse_dedup(raw)
        for gone, survivor in result.replacements.pairs.items():
            if survivor not in pool_keys:
                raise CamaError(
                    f"replacement target {survivor!r} is not an extracted point"
                )
            if gone not in pool_keys:
                logger.warning("ignoring removal of unknown point %r", gone)
    except CamaError as e:
        logger.warning("deduplication degraded to identity: %s", e)
        return pool, ReplacementMap()
    removed = {k for k in result.removed if k in pool_keys}
    canonical = [p for p in pool if p.key not in removed]
    pairs = {k: v for k, v in result.replacements.pairs.items() if k in pool_keys}
    return canonical, ReplacementMap(pairs=pairs)


def build_incidence_matrix(
    records: list[ExtractionRecord],
    canonical: list[KnowledgePoint],
    replacements: ReplacementMap,
) -> IncidenceMatrix:
    """Binary matrix: cell (i, j) is 1 iff record i used canonical point j,
    directly or through a replacement."""
    col_of = {p.key: j for j, p in enumerate(canonical)}
    cells = np.zeros((len(records), len(canonical)), dtype=np.uint8)
    for i, rec in enumerate(records):
        for point in rec.points:
            key = replacements.resolve(point.key)
            if key not in col_of:
                raise UnknownKey(
                    f"record {rec.qa_id!r} references {point.key!r}, which is "
                    "neither canonical nor replaced"
                )
            cells[i, col_of[key]] = 1
    return IncidenceMatrix(
        cells=cells,
        row_ids=tuple(r.qa_id for r in records),
        col_keys=tuple(p.key for p in canonical),
    )


# --- alignment ----------------------------------------------------------------


def _format_feedback_entries(quadruples: list[RoundQuadruple]) -> str:
    if not quadruples:
        return "(none)"
    chunks = []
    for quad in quadruples:
        view = verbalize(quad.subgraph)
        chunks.append(
            "## Question\n"
            f"{quad.question}\n\n"
            "## Solution\n"
            f"{quad.solution or '(not available)'}\n\n"
            "## Matched Knowledge Points\n"
            f"{view.elements_text() or '(none)'}\n\n"
            "## Recorded Relations\n"
            f"{view.relations_text() or '(none)'}"
        )
    return "\n\n".join(chunks)


def _format_history(history: AlignmentHistory) -> str:
    lines = []
    for graph, precision in history.entries:
        relations = verbalize(graph).relations_text() or "(none)"
        lines.append(f"## Round precision {precision:.3f}\n{relations}")
    return "\n\n".join(lines)


def apply_relation_edits(
    g: Mcg, edits: list[RelationEdit]
) -> tuple[Mcg, int, int, int]:
    """Apply edits in order; returns (graph, applied, rejected, skipped).

    prerequisite(A, B) replaces any edge over the pair with directed A->B,
    dependent(A, B) with an undirected edge, independent(A, B) deletes the
    pair. Unknown keys are skipped; an edit whose directed edge would
    close a cycle is rejected and leaves the graph unchanged.
    """
    applied = rejected = skipped = 0
    index = g.key_index()
    for edit in edits:
        ia, ib = index.get(edit.a), index.get(edit.b)
        if ia is None or ib is None or ia == ib:
            logger.warning(
                "skipping edit %s %s %s: unknown or identical keys",
                edit.a, edit.kind, edit.b,
            )
            skipped += 1
            continue
        pair = (min(ia, ib), max(ia, ib))
        directed = set(g.directed) - {(ia, ib), (ib, ia)}
        undirected = set(g.undirected) - {pair}
        if edit.kind == "prerequisite":
            directed.add((ia, ib))
        elif edit.kind == "dependent":
            undirected.add(pair)
        try:
            candidate = Mcg(
                nodes=g.nodes,
                directed=frozenset(directed),
                undirected=frozenset(undirected),
            )
        except CycleError:
            logger.warning(
                "rejecting edit %s prerequisite %s: would close a directed cycle",
                edit.a, edit.b,
            )
            rejected += 1
            continue
        if graphs_equal(candidate, g):
            applied += 1  # no-op edit still counts as accepted
        else:
            applied += 1
            g = candidate
            index = g.key_index()
    return g, applied, rejected, skipped


def run_alignment_round(
    g: Mcg,
    batch: list[QaRecord],
    history: AlignmentHistory,
    gateway: ChatClient,
    temperature: float = 0.6,
) -> RoundResult:
    """Answer one batch with the current graph and apply the model's edits.

    Returns the (possibly) updated graph, the batch precision measured
    with the input graph, and the recorded quadruples. A failed update
    call leaves the graph unchanged.
    """
    if not batch:
        raise ValueError("alignment batch is empty")
    quadruples: list[RoundQuadruple] = []
    for rec in batch:
        outcome = answer_question(g, rec, gateway, temperature=temperature)
        quadruples.append(
            RoundQuadruple(
                question=rec.question,
                solution=rec.solution,
                subgraph=outcome.subgraph,
                correct=outcome.correct,
            )
        )
    precision = sum(q.correct for q in quadruples) / len(quadruples)

    correct_part = [q for q in quadruples if q.correct]
    incorrect_part = [q for q in quadruples if not q.correct]
    incorrect_text = _format_feedback_entries(incorrect_part)
    history_text = _format_history(history)
    if history_text:
        incorrect_text += (
            "\n\n# Optimization History (most recent last)\n\n" + history_text
        )
    prompt = render_template(
        "p_u",
        {
            "qa_correct_answer": _format_feedback_entries(correct_part),
            "qa_incorrect_answer": incorrect_text,
        },
    )
    try:
        raw = gateway.complete(
            ChatRequest(prompt=prompt, tag="p_u", temperature=temperature)
        )
        edits = parse_relation_edits(raw)
    except CamaError as e:
        logger.warning("update call failed, keeping graph unchanged: %s", e)
        return RoundResult(graph=g, precision=precision, quadruples=tuple(quadruples))

    new_graph, applied, rejected, skipped = apply_relation_edits(g, edits)
    return RoundResult(
        graph=new_graph,
        precision=precision,
        quadruples=tuple(quadruples),
        edits_applied=applied,
        edits_rejected=rejected,
        edits_skipped=skipped,
    )


def _subset_precision(
    g: Mcg, subset: list[QaRecord], gateway: ChatClient, temperature: float
) -> float:
    correct = sum(
        answer_question(g, rec, gateway, temperature=temperature).correct
        for rec in subset
    )
    return correct / len(subset)


def align(
    g0: Mcg,
    dataset: list[QaRecord],
    cfg: AlignmentConfig,
    gateway: ChatClient,
    temperature: float = 0.6,
) -> tuple[Mcg, AlignmentReport]:
    """Batch-iterate graph updates and return the best epoch graph.

    The alignment subset is sampled once. Every round pushes the
    pre-update graph and its batch precision onto the history ring. The
    whole optimization stops early once the graph survives c_stop
    consecutive rounds unchanged; each epoch ends with a full-subset
    evaluation and the argmax epoch graph (earliest on ties) wins.
    """
    if not dataset:
        raise EmptyDataset("alignment requires a non-empty dataset")
    m = len(dataset) if cfg.m is None else cfg.m
    if m > len(dataset):
        raise ValueError(f"subset size {m} exceeds dataset size {len(dataset)}")

    rng = random.Random(cfg.seed)
    subset = rng.sample(dataset, m)
    report = AlignmentReport(subset_ids=[r.id for r in subset])

    g = g0
    best, best_precision, best_epoch = g0, 0.0, None
    history = AlignmentHistory(cfg.r)
    unchanged_streak = 0
    round_index = 0
    stopped_early = False

    for epoch in range(1, cfg.n_e + 1):
        order = list(subset)
        rng.shuffle(order)
        for start in range(0, len(order), cfg.s_b):
            batch = order[start : start + cfg.s_b]
            round_index += 1
            result = run_alignment_round(
                g, batch, history, gateway, temperature=temperature
            )
            history.push(g, result.precision)
            changed = not graphs_equal(result.graph, g)
            unchanged_streak = 0 if changed else unchanged_streak + 1
            g = result.graph
            report.rounds.append(
                {
                    "round": round_index,
                    "epoch": epoch,
                    "precision": result.precision,
                    "edits_applied": result.edits_applied,
                    "edits_rejected": result.edits_rejected,
                    "edits_skipped": result.edits_skipped,
                    "changed": changed,
                }
            )
            if unchanged_streak >= cfg.c_stop:
                stopped_early = True
                break

        epoch_precision = _subset_precision(g, subset, gateway, temperature)
        report.epoch_evals.append({"epoch": epoch, "precision": epoch_precision})
        if epoch_precision > best_precision:
            best, best_precision, best_epoch = g, epoch_precision, epoch
        if stopped_early:
            break

    report.best_epoch = best_epoch
    report.best_precision = best_precision
    report.stop_reason = "early_stop" if stopped_early else "completed"
    return best, report


# --- pipeline persistence ------------------------------------------------------


def run_learn_pipeline(
    dataset: list[QaRecord],
    gateway: ChatClient,
    run_dir: str | Path,
    *,
    granularity: int = 3,
    alpha: float = 0.05,
    max_cond_size: int | None = None,
    align_cfg: AlignmentConfig | None = None,
    temperature: float = 0.6,
) -> tuple[Mcg, Mcg, AlignmentReport]:
    """Extraction through alignment, persisting every intermediate artifact."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    align_cfg = align_cfg or AlignmentConfig()

    records = extract_all(dataset, granularity, gateway, temperature=temperature)
    with (run_dir / "extraction.jsonl").open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "qa_id": rec.qa_id,
                        "points": [
                            {"key": p.key, "description": p.description}
                            for p in rec.points
                        ],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )

    canonical, replacements = deduplicate(records, gateway, temperature=temperature)
    (run_dir / "canonical_points.json").write_text(
        json.dumps(
            {
                "points": [
                    {"key": p.key, "description": p.description} for p in canonical
                ],
                "replacements": dict(sorted(replacements.pairs.items())),
            },
            indent=2,
            ensure_ascii=False,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )

    z = build_incidence_matrix(records, canonical, replacements)
    z.save_csv(run_dir / "incidence.csv")

    g_init = discover_cpdag(z, alpha=alpha, max_cond_size=max_cond_size)
    save_graph(g_init, run_dir / "graph_initial.json")

    g_best, report = align(g_init, dataset, align_cfg, gateway, temperature=temperature)
    save_graph(g_best, run_dir / "graph_best.json")
    (run_dir / "alignment_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return g_init, g_best, report
