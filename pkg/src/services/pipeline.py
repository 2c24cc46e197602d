import asyncio
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from src.conf.config import RunConfig, Settings
from src.entity.errors import ConfigError, EmptyLedger, MissingPosterior, OracleError, OrLogError, UnknownEntityId
from src.entity.models import (BackendKind, CostLedger, Entity, InvertedIndex, KnowledgeMode, QuerySpec,
                               RerankedEntry, RerankedList, ScoredCandidate)
from src.repository.oracle_table import load_mock_table
from src.services.inference import posterior
from src.services.oracle import (DEFAULT_CONTEXT_CAP, DEFAULT_SUFFIX, FALLBACK_PRIOR, ConstantBackend, HttpBackend,
                                 MockBackend, OracleBackend, build_prompt, elicit)
from src.services.retrieval import DEFAULT_B, DEFAULT_K, DEFAULT_K1, retrieve_topk

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class PosteriorScore:
    posterior: float
    degraded: bool = False


@dataclass(frozen=True)
class PipelineOptions:
    """Knobs shared by every query of one reranking run."""
    mode: KnowledgeMode = KnowledgeMode.parametric_plus
    suffix: str = DEFAULT_SUFFIX
    context_cap: int = DEFAULT_CONTEXT_CAP
    concurrency: int = 8
    k: int = DEFAULT_K
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @classmethod
    def from_config(cls, run_config: RunConfig) -> "PipelineOptions":
        return cls(
            mode=run_config.mode,
            suffix=run_config.suffix,
            context_cap=run_config.context_cap,
            concurrency=run_config.concurrency,
            k=run_config.k,
            k1=run_config.k1,
            b=run_config.b,
        )


@dataclass
class PipelineResult:
    """Reranked lists, the cost ledger and the reason each skipped query failed."""
    runs: dict[str, RerankedList] = field(default_factory=dict)
    ledger: CostLedger = field(default_factory=CostLedger)
    candidates: dict[str, list[ScoredCandidate]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def make_backend(run_config: RunConfig, settings: Settings) -> OracleBackend:
    """
    Instantiate the plausibility backend a run configuration asks for.

    :param run_config: The run configuration.
    :type run_config: RunConfig
    :param settings: Environment settings (endpoint fallback, API key, mock table fallback).
    :type settings: Settings
    :return: A ready backend; the caller closes it.
    :rtype: OracleBackend
    :raises ConfigError: If the mock backend has no table to read.
    """
    if run_config.backend is BackendKind.constant:
        return ConstantBackend(run_config.constant_prior)
    if run_config.backend is BackendKind.http:
        return HttpBackend(
            endpoint=run_config.endpoint or settings.ORACLE_ENDPOINT,
            timeout=run_config.timeout,
            retries=run_config.retries,
            api_key=settings.ORACLE_API_KEY or None,
        )
    table_path = run_config.mock_table or settings.MOCK_TABLE
    if not table_path:
        raise ConfigError("the mock backend needs a table (mock_table or MOCK_TABLE)")
    table, file_default = load_mock_table(table_path)
    default = run_config.mock_default
    if default is None:
        default = file_default if file_default is not None else settings.MOCK_DEFAULT
    return MockBackend(table, default=default)


async def score_entity(
        query: QuerySpec,
        entity: Entity,
        backend: OracleBackend,
        options: PipelineOptions = PipelineOptions(),
        ledger: Optional[CostLedger] = None,
        semaphore: Optional[asyncio.Semaphore] = None,
) -> PosteriorScore:
    """
    Elicit one plausibility per predicate and compute the entity's posterior.

    A predicate whose oracle call fails gets the prior 0.5 and marks the score
    (and the ledger pair) as degraded; the failed call is not counted.

    :param query: The decomposed query.
    :type query: QuerySpec
    :param entity: The candidate entity.
    :type entity: Entity
    :param backend: The plausibility source.
    :type backend: OracleBackend
    :param options: Prompt settings.
    :type options: PipelineOptions
    :param ledger: Cost ledger updated with every successful call.
    :type ledger: CostLedger | None
    :param semaphore: Bounds the number of oracle calls in flight.
    :type semaphore: asyncio.Semaphore | None
    :return: The posterior and whether any prior was a fallback.
    :rtype: PosteriorScore
    """
    priors: dict[str, float] = {}
    degraded = False
    for template in query.predicates:
        prompt = build_prompt(entity, template, options.mode, options.suffix, options.context_cap)
        try:
            if semaphore is None:
                priors[template.id] = await elicit(backend, prompt, ledger, query.qid)
            else:
                async with semaphore:
                    priors[template.id] = await elicit(backend, prompt, ledger, query.qid)
        except OracleError as e:
            logger.warning("query %s, entity %s, predicate %s: %s; using prior %.1f",
                           query.qid, entity.id, template.id, e, FALLBACK_PRIOR)
            priors[template.id] = FALLBACK_PRIOR
            degraded = True
            if ledger is not None:
                ledger.mark_degraded(query.qid, entity.id)
    return PosteriorScore(posterior(query.form, priors), degraded)


def rerank(
        candidates: Iterable[ScoredCandidate],
        posteriors: Mapping[str, PosteriorScore | float],
        qid: str = "",
) -> RerankedList:
    """
    Order candidates by descending posterior; equal posteriors keep base-rank order.

    :param candidates: The base-retriever candidates.
    :type candidates: Iterable[ScoredCandidate]
    :param posteriors: Posterior per entity id (a bare float counts as non-degraded).
    :type posteriors: Mapping[str, PosteriorScore | float]
    :param qid: Query id stored on the list.
    :type qid: str
    :return: The reranked list.
    :rtype: RerankedList
    :raises MissingPosterior: If a candidate has no posterior.
    """
    entries = []
    for candidate in candidates:
        if candidate.entity_id not in posteriors:
            raise MissingPosterior(candidate.entity_id)
        score = posteriors[candidate.entity_id]
        if not isinstance(score, PosteriorScore):
            score = PosteriorScore(float(score))
        entries.append(RerankedEntry(
            entity_id=candidate.entity_id,
            posterior=score.posterior,
            base_rank=candidate.base_rank,
            base_score=candidate.base_score,
            degraded=score.degraded,
        ))
    entries.sort(key=lambda entry: (-entry.posterior, entry.base_rank))
    return RerankedList(qid=qid, entries=entries)


def _candidates_for(
        query: QuerySpec,
        options: PipelineOptions,
        index: Optional[InvertedIndex],
        imported: Optional[Mapping[str, list[ScoredCandidate]]],
) -> list[ScoredCandidate]:
    if imported is not None:
        return list(imported.get(query.qid, ()))[:options.k]
    if index is None:
        raise ConfigError("no index and no candidate run to rerank")
    return retrieve_topk(index, query.raw, options.k, options.k1, options.b)


async def _rerank_query(
        query: QuerySpec,
        candidates: list[ScoredCandidate],
        entities: Mapping[str, Entity],
        backend: OracleBackend,
        options: PipelineOptions,
        ledger: CostLedger,
        semaphore: asyncio.Semaphore,
) -> RerankedList:
    for candidate in candidates:
        if candidate.entity_id not in entities:
            raise UnknownEntityId(candidate.entity_id)
    ledger.set_parse_cost(query.qid, query.parse_token_cost)
    for candidate in candidates:
        ledger.register_pair(query.qid, candidate.entity_id)
    scores = await asyncio.gather(*(
        score_entity(query, entities[candidate.entity_id], backend, options, ledger, semaphore)
        for candidate in candidates
    ))
    posteriors = {candidate.entity_id: score for candidate, score in zip(candidates, scores)}
    return rerank(candidates, posteriors, query.qid)


async def run_pipeline(
        queries: Iterable[QuerySpec],
        corpus: Mapping[str, Entity] | Iterable[Entity],
        backend: OracleBackend,
        options: PipelineOptions = PipelineOptions(),
        index: Optional[InvertedIndex] = None,
        imported: Optional[Mapping[str, list[ScoredCandidate]]] = None,
) -> PipelineResult:
    """
    Candidates, plausibility elicitation, posterior inference and reranking for a batch of queries.

    Candidates come from ``imported`` when given, otherwise from BM25 over ``index``.
    A query that fails (no searchable terms, unknown candidate ids, ...) is logged,
    recorded in ``failures`` and skipped; the rest of the batch still runs.

    :param queries: Decomposed queries.
    :type queries: Iterable[QuerySpec]
    :param corpus: Entities, as a list or keyed by id.
    :type corpus: Mapping[str, Entity] | Iterable[Entity]
    :param backend: The plausibility source.
    :type backend: OracleBackend
    :param options: Retrieval depth, prompt settings and the in-flight call limit.
    :type options: PipelineOptions
    :param index: BM25 index for candidate generation.
    :type index: InvertedIndex | None
    :param imported: Externally produced candidate lists per qid.
    :type imported: Mapping[str, list[ScoredCandidate]] | None
    :return: Reranked lists per qid, the cost ledger and per-query failures.
    :rtype: PipelineResult
    """
    entities = corpus if isinstance(corpus, Mapping) else {entity.id: entity for entity in corpus}
    semaphore = asyncio.Semaphore(options.concurrency)
    result = PipelineResult()
    queries = list(queries)

    async def run_one(query: QuerySpec) -> None:
        try:
            candidates = _candidates_for(query, options, index, imported)
            result.candidates[query.qid] = candidates
            result.runs[query.qid] = await _rerank_query(
                query, candidates, entities, backend, options, result.ledger, semaphore)
        except OrLogError as e:
            logger.warning("query %s skipped: %s", query.qid, e)
            result.failures[query.qid] = str(e)
        except Exception as e:
            logger.exception("query %s failed unexpectedly", query.qid)
            result.failures[query.qid] = repr(e)

    await asyncio.gather(*(run_one(query) for query in queries))
    degraded = sum(entry.degraded for entry in result.ledger.entries())
    logger.info("reranked %d of %d queries (%d degraded pairs)", len(result.runs), len(queries), degraded)
    return result


def total_predicate_calls(ledger: CostLedger) -> int:
    return sum(entry.predicate_calls for entry in ledger.entries())


def cost_per_pair(ledger: CostLedger) -> float:
    """
    Average token cost per (query, entity) pair.

    Each pair costs one generated token per predicate call plus its share of the
    query's one-off decomposition cost.

    :param ledger: The cost ledger.
    :type ledger: CostLedger
    :return: The mean cost per pair.
    :rtype: float
    :raises EmptyLedger: If no pair was recorded.
    """
    entries = ledger.entries()
    if not entries:
        raise EmptyLedger("cost per pair is undefined for an empty ledger")
    counts = Counter(entry.qid for entry in entries)
    costs = [
        entry.predicate_calls + ledger.parse_token_cost.get(entry.qid, 0) / counts[entry.qid]
        for entry in entries
    ]
    return math.fsum(costs) / len(costs)
