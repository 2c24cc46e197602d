from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class PredicateRecord(BaseModel):
    """One predicate of a query file line."""
    id: str
    text: str


class QueryRecord(BaseModel):
    """Pydantic model for one line of a query JSONL file."""
    model_config = ConfigDict(extra="forbid")

    qid: str = Field(min_length=1)
    text: str
    form: str = Field(description="Logical form in the DSL, e.g. 'A & B & !C'")
    predicates: list[PredicateRecord]
    template: Optional[str] = None
    parse_tokens: Optional[int] = Field(default=None, ge=0)


class CorpusRecord(BaseModel):
    """Pydantic model for one line of a corpus JSONL file."""
    id: str = Field(min_length=1)
    title: str = Field(min_length=1)
    text: str = ""


class LedgerRecord(BaseModel):
    """One (query, entity) line of a cost-ledger dump."""
    qid: str
    entity_id: str
    predicate_calls: int = Field(ge=0)
    parse_token_cost: int = Field(ge=0)
    candidate_count: int = Field(ge=1)
    degraded: bool = False
