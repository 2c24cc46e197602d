import tomllib
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings

from src.entity.models import BackendKind, FieldPolicy, KnowledgeMode


class Settings(BaseSettings):
    """Process-level settings read from the environment and ``.env``."""
    ORACLE_ENDPOINT: str = 'http://localhost:8000'
    ORACLE_API_KEY: str = ''
    MOCK_TABLE: str = ''
    MOCK_DEFAULT: float = 0.5
    LOG_LEVEL: str = 'INFO'

    model_config = ConfigDict(extra='ignore', env_file=".env", env_file_encoding="utf-8")  # noqa


config = Settings()


class RunConfig(BaseModel):
    """Everything one CLI invocation needs; unknown keys are rejected."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    # paths
    corpus: Optional[Path] = None
    queries: Optional[Path] = None
    qrels: Optional[Path] = None
    run: Optional[Path] = None
    baseline_runs: list[Path] = Field(default_factory=list)
    candidates_run: Optional[Path] = None
    ledger: Optional[Path] = None
    index_path: Optional[Path] = None
    output_dir: Path = Path('out')
    mock_table: Optional[Path] = None

    # retriever
    k: int = Field(default=20, ge=1)
    k1: float = Field(default=1.2, gt=0)
    b: float = Field(default=0.75, ge=0, le=1)
    field_policy: FieldPolicy = FieldPolicy.title_plus_description
    stopwords: list[str] = Field(default_factory=list)

    # oracle
    backend: BackendKind = BackendKind.mock
    endpoint: Optional[str] = None
    mode: KnowledgeMode = KnowledgeMode.parametric_plus
    concurrency: int = Field(default=8, ge=1)
    retries: int = Field(default=2, ge=0)
    timeout: float = Field(default=30.0, gt=0)
    context_cap: int = Field(default=2000, ge=0)
    suffix: str = 'Is this predicate True or False?'
    constant_prior: float = Field(default=0.5, ge=0, le=1)
    mock_default: Optional[float] = Field(default=None, ge=0, le=1)
    tag: Optional[str] = None

    # evaluation
    metric: str = 'P@1'
    alpha: float = Field(default=0.05, gt=0, lt=1)

    # synthetic fixtures
    seed: int = 13
    n_entities: int = Field(default=240, ge=200)
    queries_per_template: int = Field(default=12, ge=1)
    noise: float = Field(default=0.0, ge=0, le=0.5)

    @property
    def run_tag(self) -> str:
        """Default tag: method plus knowledge mode, e.g. ``orlog-param+``."""
        if self.tag:
            return self.tag
        return 'orlog-param+' if self.mode is KnowledgeMode.parametric_plus else 'orlog-param'


def load_run_config(path: Optional[str | Path] = None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """
    Build a :class:`RunConfig` from an optional TOML file and explicit overrides.

    Overrides win over file values; ``None`` overrides are ignored so unset CLI flags
    keep the file value or the default.

    :param path: TOML file with flat ``key = value`` pairs.
    :type path: str | Path | None
    :param overrides: Values from the command line.
    :type overrides: dict[str, Any] | None
    :return: The validated configuration.
    :rtype: RunConfig
    :raises pydantic.ValidationError: On unknown keys or out-of-range values.
    """
    values: dict[str, Any] = {}
    if path is not None:
        with open(path, 'rb') as f:
            values.update(tomllib.load(f))
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return RunConfig.model_validate(values)
