from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TruthPrompt(BaseModel):
    """Truth-valuation prompt: optional context, entity title, instantiated predicate and suffix."""
    model_config = ConfigDict(frozen=True)

    context: Optional[str] = None
    entity_title: str = Field(min_length=1)
    predicate_text: str = Field(min_length=1)
    suffix: str
    entity_id: Optional[str] = Field(default=None, description="Lookup key for table-backed oracles")
    predicate_id: Optional[str] = Field(default=None, description="Lookup key for table-backed oracles")
    context_missing: bool = Field(default=False, description="Parametric+ requested but no description")

    def render(self) -> str:
        """Concatenate the prompt parts into the text a causal model would read."""
        parts = [self.context] if self.context else []
        parts += [f"Entity: {self.entity_title}", f"Predicate: {self.predicate_text}", self.suffix]
        return "\n".join(parts)

    def to_request(self) -> "TruthEvalRequest":
        return TruthEvalRequest(
            context=self.context,
            entity_title=self.entity_title,
            predicate=self.predicate_text,
            suffix=self.suffix,
            entity_id=self.entity_id,
            predicate_id=self.predicate_id,
        )


class TruthEvalRequest(BaseModel):
    """Body of ``POST /truth-eval``."""
    context: Optional[str] = None
    entity_title: str = Field(min_length=1)
    predicate: str = Field(min_length=1)
    suffix: str = ""
    entity_id: Optional[str] = None
    predicate_id: Optional[str] = None

    def to_prompt(self) -> TruthPrompt:
        return TruthPrompt(
            context=self.context,
            entity_title=self.entity_title,
            predicate_text=self.predicate,
            suffix=self.suffix,
            entity_id=self.entity_id,
            predicate_id=self.predicate_id,
        )


class TruthEvalResponse(BaseModel):
    """Answer of ``POST /truth-eval``: either a logit pair or a probability."""
    logit_true: Optional[float] = None
    logit_false: Optional[float] = None
    prob_true: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_shape(self) -> "TruthEvalResponse":
        has_logits = self.logit_true is not None and self.logit_false is not None
        if not has_logits and self.prob_true is None:
            raise ValueError("response needs logit_true and logit_false, or prob_true")
        if (self.logit_true is None) != (self.logit_false is None):
            raise ValueError("logit_true and logit_false must be given together")
        return self


class TranslationResponse(BaseModel):
    """Answer of an external query translator."""

    class Predicate(BaseModel):
        id: str
        text: str

    predicates: list[Predicate]
    form: str
    parse_token_cost: int = Field(default=0, ge=0)
