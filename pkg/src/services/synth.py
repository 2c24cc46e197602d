"""
Seeded synthetic fixtures: a small entity corpus, constraint queries over six
structural templates, qrels obtained by exact evaluation of each logical form,
and a mock-oracle table holding the gold predicate labels (optionally pulled
toward 0.5 by calibration noise).
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from src.entity.errors import ConfigError
from src.entity.models import And, Atom, Entity, Formula, Not, Or, PredicateTemplate, QuerySpec
from src.repository.corpus import save_corpus
from src.repository.oracle_table import save_mock_table
from src.repository.queries import save_queries
from src.repository.trec import write_qrels
from src.services.inference import eval_assignment

logger = logging.getLogger(__name__)

KINDS = ("novel", "film", "album")
GENRES = ("comedy", "drama", "horror", "mystery", "romance", "western")
COUNTRIES = {
    "france": "France",
    "japan": "Japan",
    "brazil": "Brazil",
    "canada": "Canada",
    "india": "India",
    "egypt": "Egypt",
}
TEMPLATES = ("A∧B", "A∧B∧C", "A∧¬B", "A∧B∧¬C", "A∨B", "A∨B∨C")

_SYLLABLES = ("ka", "lo", "mir", "ten", "va", "shi", "dor", "el", "ru", "po", "zan", "qui", "bel", "tor", "ny", "sa")
_REMARKS = (
    "It received mixed reviews.",
    "Critics praised its structure.",
    "It was restored in recent years.",
    "It is rarely discussed today.",
    "Its reputation grew slowly.",
    "",
)
_MAX_ATTEMPTS = 2000

FILE_NAMES = {
    "corpus": "corpus.jsonl",
    "queries": "queries.jsonl",
    "qrels": "qrels.txt",
    "mock_table": "oracle.tsv",
}


@dataclass
class SyntheticEntity:
    entity: Entity
    kind: str
    genres: tuple[str, ...]
    country: str

    @property
    def facts(self) -> frozenset[str]:
        """Ids of every predicate true of the entity."""
        return frozenset((
            f"kind_{self.kind}",
            f"country_{self.country}",
            f"kind_{self.kind}__country_{self.country}",
            *(f"genre_{genre}" for genre in self.genres),
        ))


@dataclass
class SyntheticFixture:
    entities: list[SyntheticEntity]
    queries: list[QuerySpec]
    qrels: dict[str, set[str]]
    mock_table: dict[tuple[str, str], float] = field(default_factory=dict)

    @property
    def corpus(self) -> list[Entity]:
        return [item.entity for item in self.entities]


def kind_predicate(kind: str) -> PredicateTemplate:
    return PredicateTemplate(id=f"kind_{kind}", text=f"{{e}} is a {kind}")


def genre_predicate(genre: str) -> PredicateTemplate:
    return PredicateTemplate(id=f"genre_{genre}", text=f"{{e}} is a {genre}")


def country_predicate(country: str) -> PredicateTemplate:
    return PredicateTemplate(id=f"country_{country}", text=f"{{e}} is from {COUNTRIES[country]}")


def kind_country_predicate(kind: str, country: str) -> PredicateTemplate:
    return PredicateTemplate(id=f"kind_{kind}__country_{country}",
                             text=f"{{e}} is a {kind} from {COUNTRIES[country]}")


def _title(rng: np.random.Generator) -> str:
    words = []
    for _ in range(2):
        n = int(rng.integers(2, 4))
        words.append("".join(rng.choice(_SYLLABLES, size=n)).capitalize())
    return " ".join(words)


def generate_entities(rng: np.random.Generator, n_entities: int) -> list[SyntheticEntity]:
    """Entities with one kind, one or two genres and one country, described in plain text."""
    countries = sorted(COUNTRIES)
    entities = []
    for index in range(n_entities):
        kind = KINDS[int(rng.integers(len(KINDS)))]
        n_genres = int(rng.integers(1, 3))
        genres = tuple(sorted(GENRES[i] for i in rng.choice(len(GENRES), size=n_genres, replace=False)))
        country = countries[int(rng.integers(len(countries)))]
        title = _title(rng)
        remark = _REMARKS[int(rng.integers(len(_REMARKS)))]
        description = f"{title} is a {' and '.join(genres)} {kind} from {COUNTRIES[country]}. {remark}".strip()
        entities.append(SyntheticEntity(
            entity=Entity(id=f"E{index:04d}", title=title, description=description),
            kind=kind,
            genres=genres,
            country=country,
        ))
    return entities


# each builder draws attribute values and returns (raw text, predicates, form)
QueryParts = tuple[str, list[PredicateTemplate], Formula]


def _pick(rng: np.random.Generator, values: Iterable[str], n: int = 1) -> list[str]:
    values = sorted(values)
    return [values[i] for i in rng.choice(len(values), size=n, replace=False)]


def _conjunction(rng: np.random.Generator) -> QueryParts:
    kind, = _pick(rng, KINDS)
    genre, = _pick(rng, GENRES)
    a, b = kind_predicate(kind), genre_predicate(genre)
    return f"{genre} {kind}", [a, b], And((Atom(a.id), Atom(b.id)))


def _triple_conjunction(rng: np.random.Generator) -> QueryParts:
    kind, = _pick(rng, KINDS)
    genre, = _pick(rng, GENRES)
    country, = _pick(rng, COUNTRIES)
    a, b, c = kind_predicate(kind), genre_predicate(genre), country_predicate(country)
    raw = f"{genre} {kind} from {COUNTRIES[country]}"
    return raw, [a, b, c], And((Atom(a.id), Atom(b.id), Atom(c.id)))


def _exclusion(rng: np.random.Generator) -> QueryParts:
    kind, = _pick(rng, KINDS)
    genre, = _pick(rng, GENRES)
    a, b = kind_predicate(kind), genre_predicate(genre)
    return f"{kind} that is not a {genre}", [a, b], And((Atom(a.id), Not(Atom(b.id))))


def _conjunction_with_exclusion(rng: np.random.Generator) -> QueryParts:
    kind, = _pick(rng, KINDS)
    country, = _pick(rng, COUNTRIES)
    genre, = _pick(rng, GENRES)
    a, b, c = kind_predicate(kind), country_predicate(country), genre_predicate(genre)
    raw = f"{kind} from {COUNTRIES[country]} that is not a {genre}"
    return raw, [a, b, c], And((Atom(a.id), Atom(b.id), Not(Atom(c.id))))


def _disjunction(n: int) -> Callable[[np.random.Generator], QueryParts]:
    def build(rng: np.random.Generator) -> QueryParts:
        kind, = _pick(rng, KINDS)
        countries = sorted(_pick(rng, COUNTRIES, n))
        predicates = [kind_country_predicate(kind, country) for country in countries]
        names = [COUNTRIES[country] for country in countries]
        raw = f"{kind} from {', '.join(names[:-1])} or {names[-1]}"
        return raw, predicates, Or(tuple(Atom(p.id) for p in predicates))
    return build


_BUILDERS: dict[str, Callable[[np.random.Generator], QueryParts]] = {
    "A∧B": _conjunction,
    "A∧B∧C": _triple_conjunction,
    "A∧¬B": _exclusion,
    "A∧B∧¬C": _conjunction_with_exclusion,
    "A∨B": _disjunction(2),
    "A∨B∨C": _disjunction(3),
}


def gold_entities(form: Formula, entities: Iterable[SyntheticEntity]) -> set[str]:
    """Entities whose facts satisfy the formula."""
    atoms = form.atoms()
    return {
        item.entity.id for item in entities
        if eval_assignment(form, {atom: atom in item.facts for atom in atoms})
    }


def generate_queries(
        rng: np.random.Generator,
        entities: list[SyntheticEntity],
        queries_per_template: int,
) -> tuple[list[QuerySpec], dict[str, set[str]]]:
    """
    Distinct queries per template, each with at least one gold entity.

    :raises ConfigError: If a template cannot produce enough distinct answerable queries.
    """
    queries: list[QuerySpec] = []
    qrels: dict[str, set[str]] = {}
    for template in TEMPLATES:
        seen: set[str] = set()
        attempts = 0
        while len(seen) < queries_per_template:
            attempts += 1
            if attempts > _MAX_ATTEMPTS:
                raise ConfigError(f"template {template}: only {len(seen)} distinct answerable queries")
            raw, predicates, form = _BUILDERS[template](rng)
            if raw in seen:
                continue
            gold = gold_entities(form, entities)
            if not gold:
                continue
            seen.add(raw)
            qid = f"Q{len(queries) + 1:03d}"
            queries.append(QuerySpec(qid=qid, raw=raw, predicates=predicates, form=form, template_label=template))
            qrels[qid] = gold
    return queries, qrels


def noisy_prior(gold: bool, noise: float, u: float) -> float:
    """Move a 0/1 gold label toward 0.5 by a fraction ``min(1, 2 * noise * u)`` of the distance."""
    label = 1.0 if gold else 0.0
    return label + (0.5 - label) * min(1.0, 2.0 * noise * u)


def build_mock_table(
        entities: list[SyntheticEntity],
        predicate_ids: Iterable[str],
        noise: float = 0.0,
        rng: Optional[np.random.Generator] = None,
) -> dict[tuple[str, str], float]:
    """
    Mock-oracle priors for every (entity, predicate) pair.

    :param entities: The synthetic entities.
    :type entities: list[SyntheticEntity]
    :param predicate_ids: Predicates to cover.
    :type predicate_ids: Iterable[str]
    :param noise: Calibration noise in [0, 0.5]; 0 gives the exact gold labels.
    :type noise: float
    :param rng: Source of the per-pair noise draws.
    :type rng: numpy.random.Generator | None
    :return: Prior per (entity id, predicate id).
    :rtype: dict[tuple[str, str], float]
    """
    if not 0.0 <= noise <= 0.5:
        raise ValueError(f"noise outside [0, 0.5]: {noise}")
    predicate_ids = sorted(set(predicate_ids))
    draws = None
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        draws = rng.random((len(entities), len(predicate_ids)))
    table = {}
    for row, item in enumerate(entities):
        for column, predicate_id in enumerate(predicate_ids):
            gold = predicate_id in item.facts
            u = float(draws[row, column]) if draws is not None else 0.0
            table[(item.entity.id, predicate_id)] = noisy_prior(gold, noise, u)
    return table


def generate_fixture(
        seed: int = 13,
        n_entities: int = 240,
        queries_per_template: int = 12,
        noise: float = 0.0,
) -> SyntheticFixture:
    """
    Build a complete synthetic fixture.

    The corpus and queries depend on ``seed`` only; the noise draws come from a
    separate stream, so fixtures for different noise levels share their gold data.

    :param seed: Random seed.
    :type seed: int
    :param n_entities: Corpus size.
    :type n_entities: int
    :param queries_per_template: Queries generated per structural template.
    :type queries_per_template: int
    :param noise: Calibration noise of the mock table.
    :type noise: float
    :return: The fixture.
    :rtype: SyntheticFixture
    """
    rng = np.random.default_rng(seed)
    entities = generate_entities(rng, n_entities)
    queries, qrels = generate_queries(rng, entities, queries_per_template)
    predicate_ids = {p.id for query in queries for p in query.predicates}
    table = build_mock_table(entities, predicate_ids, noise, np.random.default_rng([seed, 1]))
    logger.info("generated %d entities, %d queries, %d oracle rows (seed %d, noise %.2f)",
                len(entities), len(queries), len(table), seed, noise)
    return SyntheticFixture(entities=entities, queries=queries, qrels=qrels, mock_table=table)


def write_fixture(fixture: SyntheticFixture, output_dir: str | Path) -> Mapping[str, Path]:
    """
    Write the fixture files into ``output_dir``.

    :return: Path per file role (``corpus``, ``queries``, ``qrels``, ``mock_table``).
    :rtype: Mapping[str, Path]
    """
    output_dir = Path(output_dir)
    paths = {role: output_dir / name for role, name in FILE_NAMES.items()}
    save_corpus(fixture.corpus, paths["corpus"])
    save_queries(fixture.queries, paths["queries"])
    write_qrels(fixture.qrels, paths["qrels"])
    save_mock_table(fixture.mock_table, paths["mock_table"])
    return paths
