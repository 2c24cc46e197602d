from pydantic import BaseModel, Field


class SignTestResult(BaseModel):
    """Outcome of a paired two-tailed sign test."""
    p_value: float = Field(ge=0.0, le=1.0, description="Exact tail as a float; 0.0 once it underflows")
    wins: int = Field(ge=0, description="Queries where the first run scores higher")
    losses: int = Field(ge=0)
    ties: int = Field(ge=0, description="Discarded pairs")
    all_ties: bool = False


class MetricsReport(BaseModel):
    """Macro-averaged metrics of one run, with the per-query values they were averaged from."""
    run_name: str
    evaluated_queries: int
    covered_queries: int = Field(description="Queries with at least one gold entity in the ranking")
    means: dict[str, float]
    per_query: dict[str, dict[str, float]] = Field(description="metric -> qid -> value")
    templates: dict[str, dict[str, float]] = Field(default_factory=dict, description="template -> metric -> mean")


class RunComparison(BaseModel):
    """Difference between a run and one baseline on one metric."""
    baseline: str
    metric: str
    mean_run: float
    mean_baseline: float
    delta: float
    test: SignTestResult
    significant: bool
    direction: str = Field(description="'better', 'worse' or 'same'")


class TemplateDelta(BaseModel):
    """Per-template mean difference between two runs."""
    template: str
    count: int
    mean_a: float
    mean_b: float
    delta: float
    test: SignTestResult
