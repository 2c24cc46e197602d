import asyncio
import itertools
import tempfile
import unittest
from pathlib import Path
from unittest.mock import AsyncMock

import pytest

from src.conf.config import RunConfig, Settings
from src.entity.errors import BackendUnavailable, ConfigError, EmptyLedger, MissingPosterior
from src.entity.models import (BackendKind, CostLedger, Entity, KnowledgeMode, PredicateTemplate, QuerySpec,
                               ScoredCandidate)
from src.repository.oracle_table import save_mock_table
from src.repository.trec import write_reranked_run
from src.services.evaluation import evaluate_run
from src.services.logic_form import parse_formula
from src.services.oracle import ConstantBackend, HttpBackend, MockBackend, OracleBackend
from src.services.pipeline import (PipelineOptions, PosteriorScore, cost_per_pair, make_backend, rerank, run_pipeline,
                                   score_entity, total_predicate_calls)
from src.services.retrieval import build_index

ENTITY = Entity(id="E1", title="The Princess Bride", description="A fantasy romance novel.")


def _query(form: str, qid: str = "Q1", parse_cost: int = 0) -> QuerySpec:
    parsed = parse_formula(form)
    return QuerySpec(
        qid=qid,
        raw=form,
        predicates=[PredicateTemplate(id=atom, text=f"{{e}} satisfies {atom}") for atom in parsed.atoms()],
        form=parsed,
        parse_token_cost=parse_cost,
    )


def _candidates(*entity_ids: str) -> list[ScoredCandidate]:
    return [ScoredCandidate(entity_id, float(10 - rank), rank) for rank, entity_id in enumerate(entity_ids, start=1)]


class TestScoreEntity(unittest.IsolatedAsyncioTestCase):

    async def test_all_predicates_hold(self):
        backend = MockBackend({("E1", "A"): 1.0, ("E1", "B"): 1.0, ("E1", "C"): 1.0, ("E1", "D"): 0.0})
        score = await score_entity(_query("A & B & C & !D"), ENTITY, backend)
        self.assertEqual(score, PosteriorScore(1.0, False))

    async def test_partial_plausibilities(self):
        backend = MockBackend({("E1", "A"): 0.9, ("E1", "B"): 0.8, ("E1", "C"): 1.0, ("E1", "D"): 0.5})
        score = await score_entity(_query("A & B & C & !D"), ENTITY, backend)
        self.assertAlmostEqual(score.posterior, 0.36, places=12)

    async def test_disjunction_of_false_predicates(self):
        backend = MockBackend({("E1", "A"): 0.0, ("E1", "B"): 0.0})
        score = await score_entity(_query("A | B"), ENTITY, backend)
        self.assertEqual(score.posterior, 0.0)

    async def test_one_call_per_predicate(self):
        backend = AsyncMock(spec=OracleBackend)
        backend.score.return_value = 0.5
        ledger = CostLedger()
        await score_entity(_query("A & (B | !C)"), ENTITY, backend, ledger=ledger)
        self.assertEqual(backend.score.await_count, 3)
        self.assertEqual(ledger.entries()[0].predicate_calls, 3)

    async def test_prompts_follow_the_knowledge_mode(self):
        backend = AsyncMock(spec=OracleBackend)
        backend.score.return_value = 0.5
        await score_entity(_query("A"), ENTITY, backend, PipelineOptions(mode=KnowledgeMode.parametric))
        prompt = backend.score.await_args.args[0]
        self.assertIsNone(prompt.context)
        self.assertEqual(prompt.predicate_text, "The Princess Bride satisfies A")
        await score_entity(_query("A"), ENTITY, backend, PipelineOptions(mode=KnowledgeMode.parametric_plus))
        self.assertEqual(backend.score.await_args.args[0].context, "A fantasy romance novel.")

    async def test_failed_call_falls_back_to_half(self):
        backend = AsyncMock(spec=OracleBackend)
        backend.score.side_effect = [0.8, BackendUnavailable("down")]
        ledger = CostLedger()
        with self.assertLogs("src.services.pipeline", level="WARNING"):
            score = await score_entity(_query("A & B"), ENTITY, backend, ledger=ledger)
        self.assertAlmostEqual(score.posterior, 0.4, places=12)
        self.assertTrue(score.degraded)
        entry, = ledger.entries()
        self.assertEqual(entry.predicate_calls, 1)
        self.assertTrue(entry.degraded)

    async def test_unexpected_backend_error_falls_back_to_half(self):
        backend = AsyncMock(spec=OracleBackend)
        backend.score.side_effect = [0.8, RuntimeError("backend bug")]
        with self.assertLogs("src.services.pipeline", level="WARNING"):
            score = await score_entity(_query("A & B"), ENTITY, backend)
        self.assertAlmostEqual(score.posterior, 0.4, places=12)
        self.assertTrue(score.degraded)


class TestRerank(unittest.TestCase):

    def test_orders_by_posterior_then_base_rank(self):
        reranked = rerank(_candidates("E1", "E2", "E3"), {"E1": 0.2, "E2": 0.9, "E3": 0.2}, "Q1")
        self.assertEqual(reranked.entity_ids(), ["E2", "E1", "E3"])
        self.assertEqual([entry.base_rank for entry in reranked.entries], [2, 1, 3])
        self.assertEqual(reranked.qid, "Q1")

    def test_equal_posteriors_keep_base_order(self):
        reranked = rerank(_candidates("E3", "E1", "E2"), {"E1": 0.5, "E2": 0.5, "E3": 0.5})
        self.assertEqual(reranked.entity_ids(), ["E3", "E1", "E2"])

    def test_every_candidate_list_up_to_six(self):
        levels = (0.0, 0.25, 0.5)
        for n in range(1, 7):
            ids = [f"E{i}" for i in range(n)]
            for base_order in itertools.permutations(ids):
                candidates = _candidates(*base_order)
                posteriors = {entity_id: levels[int(entity_id[1:]) % 3] for entity_id in ids}
                reranked = rerank(candidates, posteriors)
                entries = reranked.entries
                self.assertEqual(sorted(reranked.entity_ids()), sorted(ids))
                for first, second in zip(entries, entries[1:]):
                    self.assertGreaterEqual(first.posterior, second.posterior)
                    if first.posterior == second.posterior:
                        self.assertLess(first.base_rank, second.base_rank)

    def test_carries_degraded_flag_and_base_score(self):
        reranked = rerank(_candidates("E1", "E2"), {"E1": PosteriorScore(0.5, True), "E2": 0.7})
        self.assertEqual([(e.entity_id, e.degraded) for e in reranked.entries], [("E2", False), ("E1", True)])
        self.assertEqual(reranked.entries[1].base_score, 9.0)

    def test_missing_posterior(self):
        with self.assertRaises(MissingPosterior) as cm:
            rerank(_candidates("E1", "E2"), {"E1": 0.5})
        self.assertEqual(cm.exception.entity_id, "E2")


class TestCostPerPair(unittest.TestCase):

    def test_four_predicates_twenty_candidates(self):
        ledger = CostLedger()
        ledger.set_parse_cost("Q1", 30)
        for i in range(20):
            for _ in range(4):
                ledger.record_call("Q1", f"E{i}")
        self.assertEqual(cost_per_pair(ledger), 5.5)
        self.assertEqual(total_predicate_calls(ledger), 80)

    def test_queries_of_different_size(self):
        ledger = CostLedger()
        ledger.set_parse_cost("Q1", 10)
        ledger.set_parse_cost("Q2", 0)
        ledger.record_call("Q1", "E1")
        ledger.record_call("Q1", "E2")
        for _ in range(3):
            ledger.record_call("Q2", "E1")
        # Q1 pairs cost 1 + 5 each, the Q2 pair 3
        self.assertEqual(cost_per_pair(ledger), 5.0)

    def test_empty_ledger(self):
        with self.assertRaises(EmptyLedger):
            cost_per_pair(CostLedger())


class TestMakeBackend(unittest.TestCase):

    def test_constant(self):
        backend = make_backend(RunConfig(backend=BackendKind.constant, constant_prior=0.3), Settings())
        self.assertIsInstance(backend, ConstantBackend)
        self.assertEqual(backend.value, 0.3)

    def test_http_uses_settings_endpoint(self):
        backend = make_backend(RunConfig(backend=BackendKind.http), Settings(ORACLE_ENDPOINT="http://oracle:9000"))
        self.assertIsInstance(backend, HttpBackend)
        self.assertEqual((backend.client.base_url.host, backend.client.base_url.port), ("oracle", 9000))
        asyncio.run(backend.aclose())

    def test_mock_without_table(self):
        with self.assertRaises(ConfigError):
            make_backend(RunConfig(backend=BackendKind.mock), Settings(MOCK_TABLE=""))

    def test_mock_default_precedence(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "oracle.tsv"
            save_mock_table({("E1", "A"): 0.9}, path, default=0.2)
            from_file = make_backend(RunConfig(mock_table=path), Settings(MOCK_DEFAULT=0.7))
            self.assertEqual((from_file.table[("E1", "A")], from_file.default), (0.9, 0.2))
            explicit = make_backend(RunConfig(mock_table=path, mock_default=0.4), Settings(MOCK_DEFAULT=0.7))
            self.assertEqual(explicit.default, 0.4)
            save_mock_table({("E1", "A"): 0.9}, path)
            from_env = make_backend(RunConfig(mock_table=path), Settings(MOCK_DEFAULT=0.7))
            self.assertEqual(from_env.default, 0.7)


@pytest.fixture(scope="module")
def perfect_run(fixture):
    index = build_index(fixture.corpus)
    backend = MockBackend(fixture.mock_table)
    return asyncio.run(run_pipeline(fixture.queries, fixture.corpus, backend, PipelineOptions(k=20), index))


def test_perfect_oracle_puts_gold_first(fixture, perfect_run):
    assert not perfect_run.failures
    for query in fixture.queries:
        gold = fixture.qrels[query.qid]
        ids = perfect_run.runs[query.qid].entity_ids()
        flags = [entity_id in gold for entity_id in ids]
        # every retrieved gold entity precedes every retrieved non-gold entity
        assert flags == sorted(flags, reverse=True)
        if any(flags):
            assert flags[0]


def test_perfect_oracle_precision_at_one(fixture, perfect_run):
    rankings = {qid: run.entity_ids() for qid, run in perfect_run.runs.items()}
    covered = [qid for qid, candidates in perfect_run.candidates.items()
               if any(c.entity_id in fixture.qrels[qid] for c in candidates)]
    assert covered
    report = evaluate_run({qid: rankings[qid] for qid in covered}, {qid: fixture.qrels[qid] for qid in covered})
    assert report.means["P@1"] == 1.0


def test_ledger_counts_every_predicate_of_every_candidate(fixture, perfect_run):
    queries = {query.qid: query for query in fixture.queries}
    expected = sum(len(queries[qid].predicates) * len(candidates)
                   for qid, candidates in perfect_run.candidates.items())
    assert total_predicate_calls(perfect_run.ledger) == expected
    assert len(perfect_run.ledger) == sum(len(c) for c in perfect_run.candidates.values())


def test_concurrency_does_not_change_the_run(fixture, tmp_path):
    index = build_index(fixture.corpus)
    queries = fixture.queries[:12]
    for concurrency in (1, 8):
        result = asyncio.run(run_pipeline(queries, fixture.corpus, MockBackend(fixture.mock_table),
                                          PipelineOptions(concurrency=concurrency), index))
        write_reranked_run(result.runs, tmp_path / f"c{concurrency}.run", "orlog-param+")
    assert (tmp_path / "c1.run").read_bytes() == (tmp_path / "c8.run").read_bytes()


def test_imported_candidates(fixture):
    query = fixture.queries[0]
    gold = sorted(fixture.qrels[query.qid])[0]
    other = next(item.entity.id for item in fixture.entities if item.entity.id not in fixture.qrels[query.qid])
    imported = {query.qid: _candidates(other, gold)}
    result = asyncio.run(run_pipeline([query], fixture.corpus, MockBackend(fixture.mock_table),
                                      imported=imported))
    assert result.runs[query.qid].entity_ids() == [gold, other]


def test_failing_query_does_not_stop_the_batch(fixture):
    first, second = fixture.queries[:2]
    imported = {first.qid: _candidates("E9999"), second.qid: _candidates("E0000")}
    result = asyncio.run(run_pipeline([first, second], fixture.corpus, ConstantBackend(0.5), imported=imported))
    assert list(result.failures) == [first.qid]
    assert list(result.runs) == [second.qid]


def test_without_index_or_candidates(fixture):
    result = asyncio.run(run_pipeline(fixture.queries[:1], fixture.corpus, ConstantBackend(0.5)))
    assert fixture.queries[0].qid in result.failures


class _FailsForOneEntity(OracleBackend):
    """Raises a plain RuntimeError for one entity and answers 0.5 otherwise."""

    def __init__(self, entity_id: str):
        self.entity_id = entity_id

    async def score(self, prompt):
        if prompt.entity_id == self.entity_id:
            raise RuntimeError("backend bug")
        return 0.5


def test_backend_bug_degrades_only_its_pairs(fixture):
    first, second = fixture.queries[:2]
    broken, healthy = (item.entity.id for item in fixture.entities[:2])
    imported = {first.qid: _candidates(broken, healthy), second.qid: _candidates(healthy)}
    result = asyncio.run(run_pipeline([first, second], fixture.corpus, _FailsForOneEntity(broken),
                                      imported=imported))
    assert not result.failures
    assert set(result.runs) == {first.qid, second.qid}
    degraded = {(entry.qid, entry.entity_id) for entry in result.ledger.entries() if entry.degraded}
    assert degraded == {(first.qid, broken)}
