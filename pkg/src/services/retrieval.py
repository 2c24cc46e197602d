import bisect
import logging
import math
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Collection, Iterable, Optional

import numpy as np

from src.entity.errors import DuplicateEntityId, EmptyQuery, UnknownEntityId
from src.entity.models import Entity, FieldPolicy, InvertedIndex, ScoredCandidate
from src.repository.trec import read_run_lines

logger = logging.getLogger(__name__)

DEFAULT_K = 20
DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_TERM_RE = re.compile(r"[^\W_]+")


def tokenize(text: str, stopwords: Collection[str] = ()) -> list[str]:
    """
    Lowercase and split on every non-alphanumeric character; no stemming.

    :param text: Input text.
    :type text: str
    :param stopwords: Terms to drop after lowercasing.
    :type stopwords: Collection[str]
    :return: The terms, in order.
    :rtype: list[str]
    """
    terms = _TERM_RE.findall(text.lower())
    if stopwords:
        terms = [term for term in terms if term not in stopwords]
    return terms


def _document_text(entity: Entity, field_policy: FieldPolicy) -> str:
    if field_policy is FieldPolicy.title_only:
        return entity.title
    return f"{entity.title} {entity.description}"


def build_index(
        corpus: Iterable[Entity],
        field_policy: FieldPolicy = FieldPolicy.title_plus_description,
        stopwords: Collection[str] = (),
) -> InvertedIndex:
    """
    Build an in-memory inverted index over the chosen entity fields.

    :param corpus: The entities; their order fixes the entity ordinals.
    :type corpus: Iterable[Entity]
    :param field_policy: Fields to index.
    :type field_policy: FieldPolicy
    :param stopwords: Terms left out of the index and of queries against it.
    :type stopwords: Collection[str]
    :return: The index.
    :rtype: InvertedIndex
    :raises DuplicateEntityId: If two entities share an id.
    :raises ValueError: If the corpus is empty.
    """
    stopwords = frozenset(stopwords)
    entity_ids: list[str] = []
    seen: set[str] = set()
    doc_lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for ordinal, entity in enumerate(corpus):
        if entity.id in seen:
            raise DuplicateEntityId(entity.id)
        seen.add(entity.id)
        entity_ids.append(entity.id)
        terms = tokenize(_document_text(entity, field_policy), stopwords)
        doc_lengths.append(len(terms))
        # Counter keeps first-seen order, so postings stay sorted by ordinal
        for term, tf in Counter(terms).items():
            postings[term].append((ordinal, tf))
    if not entity_ids:
        raise ValueError("cannot index an empty corpus")
    return InvertedIndex(
        entity_ids=entity_ids,
        postings=dict(postings),
        doc_lengths=doc_lengths,
        avg_doc_len=sum(doc_lengths) / len(doc_lengths),
        field_policy=field_policy,
        stopwords=stopwords,
    )


def idf(index: InvertedIndex, term: str) -> float:
    """Robertson IDF with +1 inside the log: ``ln(1 + (N - df + 0.5) / (df + 0.5))``."""
    df = len(index.postings.get(term, ()))
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def _term_weight(tf: int, doc_len: int, avg_len: float, k1: float, b: float) -> float:
    norm = 1.0 - b + b * (doc_len / avg_len if avg_len > 0 else 0.0)
    return tf * (k1 + 1.0) / (tf + k1 * norm)


def term_frequency(index: InvertedIndex, term: str, ordinal: int) -> int:
    postings = index.postings.get(term)
    if not postings:
        return 0
    position = bisect.bisect_left(postings, (ordinal, 0))
    if position < len(postings) and postings[position][0] == ordinal:
        return postings[position][1]
    return 0


def bm25_score(
        index: InvertedIndex,
        query_terms: Iterable[str],
        ordinal: int,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
) -> float:
    """
    BM25 score of one entity for a list of query terms.

    :param index: The index.
    :type index: InvertedIndex
    :param query_terms: Query terms; repeated terms contribute once per occurrence.
    :type query_terms: Iterable[str]
    :param ordinal: Entity ordinal in the index.
    :type ordinal: int
    :param k1: Term-frequency saturation.
    :type k1: float
    :param b: Length normalization.
    :type b: float
    :return: The score; terms absent from the entity contribute 0.
    :rtype: float
    """
    score = 0.0
    doc_len = index.doc_lengths[ordinal]
    for term in query_terms:
        tf = term_frequency(index, term, ordinal)
        if tf:
            score += idf(index, term) * _term_weight(tf, doc_len, index.avg_doc_len, k1, b)
    return score


def retrieve_topk(
        index: InvertedIndex,
        query_text: str,
        k: int = DEFAULT_K,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
) -> list[ScoredCandidate]:
    """
    Top-k entities for a query by BM25.

    Only entities sharing at least one term with the query are returned; ties are
    broken by ascending entity id.

    :param index: The index.
    :type index: InvertedIndex
    :param query_text: Raw query text.
    :type query_text: str
    :param k: Maximum number of candidates.
    :type k: int
    :return: Candidates ranked 1..n, n <= k.
    :rtype: list[ScoredCandidate]
    :raises EmptyQuery: If the query has no terms after tokenization.
    :raises ValueError: If ``k < 1``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = tokenize(query_text, index.stopwords)
    if not terms:
        raise EmptyQuery(f"query {query_text!r} has no searchable terms")
    scores = np.zeros(index.doc_count, dtype=np.float64)
    matched = np.zeros(index.doc_count, dtype=bool)
    lengths = np.asarray(index.doc_lengths, dtype=np.float64)
    norms = 1.0 - b + b * (lengths / index.avg_doc_len if index.avg_doc_len > 0 else 0.0)
    for term in terms:
        postings = index.postings.get(term)
        if not postings:
            continue
        ordinals = np.fromiter((o for o, _ in postings), dtype=np.int64, count=len(postings))
        tfs = np.fromiter((tf for _, tf in postings), dtype=np.float64, count=len(postings))
        scores[ordinals] += idf(index, term) * (tfs * (k1 + 1.0) / (tfs + k1 * norms[ordinals]))
        matched[ordinals] = True
    hits = np.flatnonzero(matched)
    ranked = sorted(hits.tolist(), key=lambda o: (-scores[o], index.entity_ids[o]))[:k]
    return [
        ScoredCandidate(entity_id=index.entity_ids[o], base_score=float(scores[o]), base_rank=rank)
        for rank, o in enumerate(ranked, start=1)
    ]


def import_run(
        path: str | Path,
        k: int = DEFAULT_K,
        known_ids: Optional[Collection[str]] = None,
) -> dict[str, list[ScoredCandidate]]:
    """
    Import an externally produced TREC run as candidate lists.

    A repeated (qid, entity id) keeps only its best-ranked line.

    :param path: Run file (``qid Q0 entity_id rank score tag``).
    :type path: str | Path
    :param k: Candidates kept per query; ranks are renumbered 1..k.
    :type k: int
    :param known_ids: When given, every entity id must belong to it.
    :type known_ids: Collection[str] | None
    :return: Map of qid to candidate list.
    :rtype: dict[str, list[ScoredCandidate]]
    :raises MalformedRunLine: On a malformed line.
    :raises UnknownEntityId: On an id outside ``known_ids``.
    """
    grouped = defaultdict(list)
    for line_number, line in enumerate(read_run_lines(path), start=1):
        if known_ids is not None and line.entity_id not in known_ids:
            raise UnknownEntityId(line.entity_id, line_number)
        grouped[line.qid].append(line)
    candidates = {}
    for qid, lines in grouped.items():
        best = {}
        for line in sorted(lines, key=lambda x: (x.rank, -x.score)):
            best.setdefault(line.entity_id, line)
        if len(best) < len(lines):
            logger.warning("query %s: %d repeated entity lines dropped", qid, len(lines) - len(best))
        ordered = list(best.values())[:k]
        candidates[qid] = [
            ScoredCandidate(entity_id=line.entity_id, base_score=line.score, base_rank=rank)
            for rank, line in enumerate(ordered, start=1)
        ]
    logger.info("imported %d candidate lists from %s", len(candidates), path)
    return candidates
