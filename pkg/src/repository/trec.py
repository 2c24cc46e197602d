import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from src.entity.errors import MalformedRunLine
from src.entity.models import RerankedList, ScoredCandidate

logger = logging.getLogger(__name__)


class RunLine(NamedTuple):
    """One line of a TREC run: ``qid Q0 entity_id rank score tag``."""
    qid: str
    entity_id: str
    rank: int
    score: float
    tag: str


def read_run_lines(path: str | Path) -> list[RunLine]:
    """
    Parse a TREC run file.

    :param path: Run file.
    :type path: str | Path
    :return: The parsed lines, in file order.
    :rtype: list[RunLine]
    :raises MalformedRunLine: On a line with the wrong field count or non-numeric rank/score.
    """
    lines = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise MalformedRunLine(line_number, line, f"expected 6 fields, found {len(fields)}")
            qid, _, entity_id, rank, score, tag = fields
            try:
                lines.append(RunLine(qid, entity_id, int(rank), float(score), tag))
            except ValueError:
                raise MalformedRunLine(line_number, line, "rank must be an integer and score a number")
    return lines


def read_rankings(path: str | Path) -> dict[str, list[str]]:
    """
    Read a run file as ranked entity-id lists per query.

    Lines are ordered by rank; equal ranks fall back to descending score, then file order.

    :param path: Run file.
    :type path: str | Path
    :return: Map of qid to ranked entity ids.
    :rtype: dict[str, list[str]]
    """
    grouped: dict[str, list[RunLine]] = defaultdict(list)
    for line in read_run_lines(path):
        grouped[line.qid].append(line)
    return {
        qid: [line.entity_id for line in sorted(lines, key=lambda x: (x.rank, -x.score))]
        for qid, lines in grouped.items()
    }


def _write_lines(path: str | Path, lines: Iterable[RunLine]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(f"{line.qid} Q0 {line.entity_id} {line.rank} {line.score!r} {line.tag}\n")
            count += 1
    logger.info("wrote %d run lines to %s", count, path)
    return count


def write_candidate_run(candidates: Mapping[str, list[ScoredCandidate]], path: str | Path, tag: str) -> int:
    """
    Write base-retriever candidate lists as a TREC run.

    :param candidates: Map of qid to ranked candidates.
    :type candidates: Mapping[str, list[ScoredCandidate]]
    :param path: Output file.
    :type path: str | Path
    :param tag: Run tag, e.g. ``bm25``.
    :type tag: str
    :return: Number of lines written.
    :rtype: int
    """
    return _write_lines(path, (
        RunLine(qid, c.entity_id, c.base_rank, float(c.base_score), tag)
        for qid in sorted(candidates)
        for c in candidates[qid]
    ))


def write_reranked_run(runs: Mapping[str, RerankedList], path: str | Path, tag: str) -> int:
    """
    Write reranked lists as a TREC run whose score column is the posterior.

    Entries that relied on fallback priors get the tag suffix ``-degraded``.

    :param runs: Map of qid to reranked list.
    :type runs: Mapping[str, RerankedList]
    :param path: Output file.
    :type path: str | Path
    :param tag: Run tag, e.g. ``orlog-param+``.
    :type tag: str
    :return: Number of lines written.
    :rtype: int
    """
    return _write_lines(path, (
        RunLine(qid, entry.entity_id, rank, float(entry.posterior), f"{tag}-degraded" if entry.degraded else tag)
        for qid in sorted(runs)
        for rank, entry in enumerate(runs[qid].entries, start=1)
    ))


def read_qrels(path: str | Path) -> dict[str, set[str]]:
    """
    Read binary TREC qrels (``qid 0 entity_id rel``); only ``rel > 0`` lines count as relevant.

    :param path: Qrels file.
    :type path: str | Path
    :return: Map of qid to its relevant entity ids (queries with no relevant entity are dropped).
    :rtype: dict[str, set[str]]
    :raises MalformedRunLine: On a malformed line.
    """
    qrels: dict[str, set[str]] = defaultdict(set)
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise MalformedRunLine(line_number, line, f"expected 4 qrels fields, found {len(fields)}")
            qid, _, entity_id, rel = fields
            try:
                relevant = int(rel) > 0
            except ValueError:
                raise MalformedRunLine(line_number, line, "relevance must be an integer")
            if relevant:
                qrels[qid].add(entity_id)
    return dict(qrels)


def write_qrels(qrels: Mapping[str, Iterable[str]], path: str | Path) -> int:
    """Write binary qrels, sorted by qid and entity id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for qid in sorted(qrels):
            for entity_id in sorted(qrels[qid]):
                f.write(f"{qid} 0 {entity_id} 1\n")
                count += 1
    return count
