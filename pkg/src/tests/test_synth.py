import asyncio
import unittest
from collections import Counter

import numpy as np
import pytest

from src.entity.errors import ConfigError
from src.entity.models import And, Atom, Or
from src.repository.corpus import load_corpus
from src.repository.oracle_table import load_mock_table
from src.repository.queries import load_queries
from src.repository.trec import read_qrels
from src.services.evaluation import evaluate_run
from src.services.inference import posterior
from src.services.oracle import MockBackend
from src.services.pipeline import PipelineOptions, run_pipeline
from src.services.retrieval import build_index
from src.services.synth import (TEMPLATES, SyntheticEntity, generate_entities, generate_fixture, generate_queries,
                                gold_entities, noisy_prior)


class TestGenerateFixture(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.fixture = generate_fixture(seed=13)

    def test_sizes(self):
        self.assertEqual(len(self.fixture.entities), 240)
        self.assertGreaterEqual(len(self.fixture.queries), 60)
        self.assertEqual(Counter(q.template_label for q in self.fixture.queries), {t: 12 for t in TEMPLATES})

    def test_ids_are_unique(self):
        self.assertEqual(len({e.id for e in self.fixture.corpus}), 240)
        self.assertEqual(len({q.qid for q in self.fixture.queries}), len(self.fixture.queries))

    def test_every_query_has_gold(self):
        for query in self.fixture.queries:
            gold = self.fixture.qrels[query.qid]
            self.assertTrue(gold)
            self.assertEqual(gold, gold_entities(query.form, self.fixture.entities))

    def test_descriptions_state_the_facts(self):
        for item in self.fixture.entities[:20]:
            self.assertIn(item.kind, item.entity.description)
            for genre in item.genres:
                self.assertIn(genre, item.entity.description)

    def test_noise_free_table_holds_gold_labels(self):
        for (entity_id, predicate_id), prior in self.fixture.mock_table.items():
            self.assertIn(prior, (0.0, 1.0))
        item = self.fixture.entities[0]
        for (entity_id, predicate_id), prior in self.fixture.mock_table.items():
            if entity_id == item.entity.id:
                self.assertEqual(prior == 1.0, predicate_id in item.facts)

    def test_deterministic(self):
        again = generate_fixture(seed=13)
        self.assertEqual(again.queries, self.fixture.queries)
        self.assertEqual(again.corpus, self.fixture.corpus)
        self.assertEqual(again.mock_table, self.fixture.mock_table)
        self.assertNotEqual(generate_fixture(seed=14).corpus, self.fixture.corpus)

    def test_noise_keeps_gold_data(self):
        noisy = generate_fixture(seed=13, noise=0.3)
        self.assertEqual(noisy.queries, self.fixture.queries)
        self.assertEqual(noisy.qrels, self.fixture.qrels)
        self.assertEqual(noisy.mock_table.keys(), self.fixture.mock_table.keys())
        self.assertNotEqual(noisy.mock_table, self.fixture.mock_table)

    def test_noise_out_of_range(self):
        with self.assertRaises(ValueError):
            generate_fixture(noise=0.6)

    def test_too_many_queries_per_template(self):
        rng = np.random.default_rng(1)
        entities = generate_entities(rng, 200)
        with self.assertRaises(ConfigError):
            generate_queries(rng, entities, 500)


class TestNoisyPrior(unittest.TestCase):

    def test_no_noise(self):
        self.assertEqual(noisy_prior(True, 0.0, 0.9), 1.0)
        self.assertEqual(noisy_prior(False, 0.0, 0.9), 0.0)

    def test_pulled_toward_half(self):
        self.assertEqual(noisy_prior(True, 0.25, 0.5), 0.875)
        self.assertEqual(noisy_prior(False, 0.25, 0.5), 0.125)

    def test_full_noise_reaches_half(self):
        self.assertEqual(noisy_prior(True, 0.5, 1.0), 0.5)
        self.assertEqual(noisy_prior(False, 0.5, 1.0), 0.5)

    def test_label_side_is_kept_below_half_noise(self):
        for u in np.linspace(0.0, 0.99, 50):
            self.assertGreater(noisy_prior(True, 0.4, float(u)), 0.5)
            self.assertLess(noisy_prior(False, 0.4, float(u)), 0.5)


class TestDisjunctionSemantics(unittest.TestCase):
    """A disjunctive query must not be scored as if it were a conjunction."""

    def test_or_accepts_entities_a_conjunction_rejects(self):
        fixture = generate_fixture(seed=13)
        for query in (q for q in fixture.queries if q.template_label == "A∨B"):
            gold = fixture.qrels[query.qid]
            conjunction = And(query.form.children)
            self.assertIsInstance(query.form, Or)
            for entity_id in gold:
                priors = {atom: fixture.mock_table[(entity_id, atom)] for atom in query.form.atoms()}
                self.assertEqual(posterior(query.form, priors), 1.0)
                # each entity has one country, so exactly one disjunct holds
                self.assertEqual(posterior(conjunction, priors), 0.0)


def test_written_files_load_back(fixture, fixture_dir):
    assert load_corpus(fixture_dir / "corpus.jsonl") == fixture.corpus
    assert load_queries(fixture_dir / "queries.jsonl") == fixture.queries
    assert read_qrels(fixture_dir / "qrels.txt") == fixture.qrels
    table, default = load_mock_table(fixture_dir / "oracle.tsv")
    assert table == fixture.mock_table
    assert default is None


def _precision_at_1(fixture) -> float:
    index = build_index(fixture.corpus)
    result = asyncio.run(run_pipeline(fixture.queries, fixture.corpus, MockBackend(fixture.mock_table),
                                      PipelineOptions(k=20), index))
    rankings = {qid: run.entity_ids() for qid, run in result.runs.items()}
    return evaluate_run(rankings, fixture.qrels).means["P@1"]


@pytest.mark.parametrize("seed", [13, 21, 34, 55, 89])
def test_precision_does_not_improve_with_noise(seed):
    scores = [_precision_at_1(generate_fixture(seed=seed, noise=noise)) for noise in (0.0, 0.2, 0.4)]
    assert scores[0] >= scores[1] >= scores[2]


def test_single_synthetic_entity_facts():
    item = SyntheticEntity(entity=generate_entities(np.random.default_rng(0), 1)[0].entity,
                           kind="film", genres=("comedy", "drama"), country="japan")
    assert item.facts == {"kind_film", "country_japan", "kind_film__country_japan", "genre_comedy", "genre_drama"}
    assert gold_entities(Atom("genre_drama"), [item]) == {item.entity.id}
