import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator, model_validator

from src.entity.errors import InvalidQuerySpec

PREDICATE_ID_PATTERN = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
ENTITY_PLACEHOLDER = "{e}"


class KnowledgeMode(str, enum.Enum):
    """How much entity knowledge the oracle prompt carries."""
    parametric: str = "parametric"
    parametric_plus: str = "parametric_plus"


class FieldPolicy(str, enum.Enum):
    """Which entity fields the BM25 index covers."""
    title_only: str = "title_only"
    title_plus_description: str = "title_plus_description"


class BackendKind(str, enum.Enum):
    """Available plausibility backends."""
    mock: str = "mock"
    http: str = "http"
    constant: str = "constant"


# --- logical form AST -------------------------------------------------------

class Formula:
    """Base class of the boolean AST over atomic predicate identifiers."""
    __slots__ = ()

    def walk(self) -> Iterator["Formula"]:
        """Yield every node in pre-order, left to right."""
        yield self
        for child in self.children_of():
            yield from child.walk()

    def children_of(self) -> tuple["Formula", ...]:
        return ()

    def atoms(self) -> tuple[str, ...]:
        """Deduplicated atom identifiers in first-occurrence order."""
        return tuple(dict.fromkeys(node.id for node in self.walk() if isinstance(node, Atom)))


@dataclass(frozen=True, slots=True)
class Atom(Formula):
    id: str

    def __post_init__(self):
        if not isinstance(self.id, str) or not PREDICATE_ID_PATTERN.fullmatch(self.id):
            raise ValueError(f"invalid predicate id {self.id!r}")

    def __repr__(self):
        return f"Atom({self.id})"


@dataclass(frozen=True, slots=True)
class Not(Formula):
    child: Formula

    def children_of(self) -> tuple[Formula, ...]:
        return (self.child,)

    def __repr__(self):
        return f"Not({self.child!r})"


@dataclass(frozen=True, slots=True)
class _NaryFormula(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        children = tuple(self.children)
        if len(children) < 2:
            raise ValueError(f"{type(self).__name__} needs at least two children, got {len(children)}")
        object.__setattr__(self, "children", children)

    def children_of(self) -> tuple[Formula, ...]:
        return self.children

    def __repr__(self):
        return f"{type(self).__name__}[{', '.join(repr(c) for c in self.children)}]"


@dataclass(frozen=True, slots=True, repr=False)
class And(_NaryFormula):
    pass


@dataclass(frozen=True, slots=True, repr=False)
class Or(_NaryFormula):
    pass


# --- corpus and queries -----------------------------------------------------

class Entity(BaseModel):
    """A corpus member: identifier, title and (possibly empty) description."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: str = Field(min_length=1)
    title: str = Field(min_length=1)
    description: str = Field(default="", validation_alias=AliasChoices("description", "text"))


class PredicateTemplate(BaseModel):
    """Natural-language predicate statement with one ``{e}`` entity placeholder."""
    model_config = ConfigDict(frozen=True)

    id: str
    text: str

    @field_validator("id")
    @classmethod
    def check_id(cls, value: str) -> str:
        if not PREDICATE_ID_PATTERN.fullmatch(value):
            raise ValueError(f"predicate id {value!r} must match {PREDICATE_ID_PATTERN.pattern}")
        return value

    @field_validator("text")
    @classmethod
    def check_placeholder(cls, value: str) -> str:
        if value.count(ENTITY_PLACEHOLDER) != 1:
            raise ValueError(f"predicate text must contain exactly one {ENTITY_PLACEHOLDER} placeholder")
        return value

    def instantiate(self, title: str) -> str:
        """Substitute the entity title for the placeholder, verbatim."""
        return self.text.replace(ENTITY_PLACEHOLDER, title)


class QuerySpec(BaseModel):
    """A query together with its decomposition into predicates and a logical form."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    qid: str = Field(min_length=1)
    raw: str
    predicates: list[PredicateTemplate]
    form: Formula
    template_label: Optional[str] = None
    parse_token_cost: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_predicates_cover_form(self) -> "QuerySpec":
        declared = [p.id for p in self.predicates]
        if len(set(declared)) != len(declared):
            raise InvalidQuerySpec(f"query {self.qid}: duplicate predicate ids")
        atoms = set(self.form.atoms())
        undeclared = atoms - set(declared)
        if undeclared:
            raise InvalidQuerySpec(f"query {self.qid}: form uses undeclared predicates {sorted(undeclared)}")
        unused = set(declared) - atoms
        if unused:
            raise InvalidQuerySpec(f"query {self.qid}: predicates {sorted(unused)} do not appear in the form")
        return self

    def predicate(self, predicate_id: str) -> PredicateTemplate:
        return next(p for p in self.predicates if p.id == predicate_id)


# --- retrieval --------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ScoredCandidate:
    """One entry of a base-retriever candidate list."""
    entity_id: str
    base_score: float
    base_rank: int


@dataclass
class InvertedIndex:
    """
    In-memory BM25 index.

    ``postings`` maps a term to ``(entity ordinal, term frequency)`` pairs sorted by ordinal.
    """
    entity_ids: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_len: float
    field_policy: FieldPolicy = FieldPolicy.title_plus_description
    stopwords: frozenset[str] = frozenset()

    @property
    def doc_count(self) -> int:
        return len(self.entity_ids)


# --- reranking and accounting ----------------------------------------------

@dataclass(frozen=True, slots=True)
class RerankedEntry:
    entity_id: str
    posterior: float
    base_rank: int
    base_score: float = 0.0
    degraded: bool = False


@dataclass
class RerankedList:
    """Candidates of one query ordered by posterior, ties kept in base order."""
    qid: str
    entries: list[RerankedEntry] = field(default_factory=list)

    def entity_ids(self) -> list[str]:
        return [entry.entity_id for entry in self.entries]


@dataclass
class LedgerEntry:
    qid: str
    entity_id: str
    predicate_calls: int = 0
    degraded: bool = False


class CostLedger:
    """
    Token-cost bookkeeping for one reranking run.

    Every (query, entity) pair counts the oracle calls made for it; every query
    carries the one-off cost of producing its decomposition.
    """

    def __init__(self):
        self._pairs: dict[tuple[str, str], LedgerEntry] = {}
        self.parse_token_cost: dict[str, int] = {}

    def register_pair(self, qid: str, entity_id: str) -> LedgerEntry:
        return self._pairs.setdefault((qid, entity_id), LedgerEntry(qid, entity_id))

    def record_call(self, qid: str, entity_id: str) -> None:
        self.register_pair(qid, entity_id).predicate_calls += 1

    def mark_degraded(self, qid: str, entity_id: str) -> None:
        self.register_pair(qid, entity_id).degraded = True

    def set_parse_cost(self, qid: str, cost: int) -> None:
        self.parse_token_cost[qid] = cost

    def candidate_count(self, qid: str) -> int:
        return sum(1 for q, _ in self._pairs if q == qid)

    def entries(self) -> list[LedgerEntry]:
        """Entries sorted by (qid, entity id) so dumps are deterministic."""
        return [self._pairs[key] for key in sorted(self._pairs)]

    def __len__(self):
        return len(self._pairs)


PriorAssignment = dict[str, float]
Assignment = dict[str, bool]
Residual = Union[Formula, bool]
