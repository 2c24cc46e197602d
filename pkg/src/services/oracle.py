import abc
import asyncio
import logging
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Optional

import httpx
from pydantic import ValidationError

from src.entity.errors import BackendUnavailable, MalformedResponse, NonFiniteLogit, OrLogError
from src.entity.models import CostLedger, Entity, KnowledgeMode, PredicateTemplate
from src.schemas.oracle import TruthEvalResponse, TruthPrompt

logger = logging.getLogger(__name__)

DEFAULT_SUFFIX = "Is this predicate True or False?"
DEFAULT_CONTEXT_CAP = 2000
FALLBACK_PRIOR = 0.5
TRUTH_EVAL_PATH = "/truth-eval"


@dataclass(frozen=True, slots=True)
class LogitPair:
    """Final-layer logits of the tokens True and False."""
    z_true: float
    z_false: float


def build_prompt(
        entity: Entity,
        template: PredicateTemplate,
        mode: KnowledgeMode,
        suffix: str = DEFAULT_SUFFIX,
        context_cap: int = DEFAULT_CONTEXT_CAP,
) -> TruthPrompt:
    """
    Assemble the truth-valuation prompt for one (entity, predicate) pair.

    In parametric+ mode an entity without a description falls back to a
    parametric prompt flagged with ``context_missing``.

    :param entity: The candidate entity.
    :type entity: Entity
    :param template: The predicate template; its placeholder gets the entity title verbatim.
    :type template: PredicateTemplate
    :param mode: Knowledge mode.
    :type mode: KnowledgeMode
    :param suffix: Truth-inquiry text.
    :type suffix: str
    :param context_cap: Maximum context length in characters.
    :type context_cap: int
    :return: The prompt.
    :rtype: TruthPrompt
    """
    context = None
    context_missing = False
    if mode is KnowledgeMode.parametric_plus:
        if entity.description.strip():
            context = entity.description[:context_cap]
        else:
            context_missing = True
            logger.warning("entity %s has no description; sending a parametric prompt", entity.id)
    return TruthPrompt(
        context=context,
        entity_title=entity.title,
        predicate_text=template.instantiate(entity.title),
        suffix=suffix,
        entity_id=entity.id,
        predicate_id=template.id,
        context_missing=context_missing,
    )


def score_from_logits(z: LogitPair) -> float:
    """
    Softmax probability of the True token, computed from the logit difference.

    ``1 / (1 + exp(z_false - z_true))``, evaluated so that no exponential overflows.

    :param z: The logit pair.
    :type z: LogitPair
    :return: Plausibility in [0, 1].
    :rtype: float
    :raises NonFiniteLogit: If a logit is NaN or infinite.
    """
    if not (math.isfinite(z.z_true) and math.isfinite(z.z_false)):
        raise NonFiniteLogit(f"non-finite logits ({z.z_true}, {z.z_false})")
    diff = z.z_false - z.z_true
    if diff > 0:
        tail = math.exp(-diff)
        return tail / (1.0 + tail)
    return 1.0 / (1.0 + math.exp(diff))


class OracleBackend(abc.ABC):
    """A plausibility source answering one truth-valuation prompt per call."""
    name: str = "backend"

    @abc.abstractmethod
    async def score(self, prompt: TruthPrompt) -> LogitPair | float:
        """Return either True/False logits or a probability for the prompt."""

    async def aclose(self) -> None:
        pass


class MockBackend(OracleBackend):
    """
    Table lookup keyed by (entity id, predicate id).

    :param table: Probability per (entity id, predicate id).
    :type table: Mapping[tuple[str, str], float]
    :param default: Returned for pairs missing from the table; ``None`` makes a miss an error.
    :type default: float | None
    """
    name = "mock"

    def __init__(self, table: Mapping[tuple[str, str], float], default: Optional[float] = FALLBACK_PRIOR):
        self.table = MappingProxyType(dict(table))
        self.default = default

    async def score(self, prompt: TruthPrompt) -> float:
        value = self.table.get((prompt.entity_id, prompt.predicate_id))
        if value is None:
            if self.default is None:
                raise MalformedResponse(f"no table entry for ({prompt.entity_id}, {prompt.predicate_id})")
            return self.default
        return value


class ConstantBackend(OracleBackend):
    """Answers every prompt with the same probability."""
    name = "constant"

    def __init__(self, value: float = FALLBACK_PRIOR):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"constant prior outside [0, 1]: {value}")
        self.value = value

    async def score(self, prompt: TruthPrompt) -> float:
        return self.value


class HttpBackend(OracleBackend):
    """
    Client for the ``POST /truth-eval`` wire protocol.

    Transport errors and 5xx answers are retried with exponential backoff; other
    non-2xx answers and unparseable bodies are reported as malformed.

    :param endpoint: Base URL of the oracle server.
    :type endpoint: str
    :param timeout: Per-request timeout in seconds.
    :type timeout: float
    :param retries: Extra attempts after the first failure.
    :type retries: int
    :param api_key: Optional bearer token.
    :type api_key: str | None
    :param backoff: Initial backoff in seconds.
    :type backoff: float
    :param transport: Optional httpx transport (in-process app or mock transport in tests).
    :type transport: httpx.AsyncBaseTransport | None
    """
    name = "http"

    def __init__(
            self,
            endpoint: str,
            timeout: float = 30.0,
            retries: int = 2,
            api_key: Optional[str] = None,
            backoff: float = 0.5,
            transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.retries = retries
        self.backoff = backoff
        self.client = httpx.AsyncClient(base_url=endpoint, timeout=timeout, headers=headers, transport=transport)

    async def score(self, prompt: TruthPrompt) -> LogitPair | float:
        body = prompt.to_request().model_dump(exclude_none=True)
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                await asyncio.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = await self.client.post(TRUTH_EVAL_PATH, json=body)
            except httpx.TransportError as e:
                last_error = e
                logger.debug("oracle request failed (attempt %d): %s", attempt + 1, e)
                continue
            if response.status_code >= 500:
                last_error = httpx.HTTPStatusError(
                    f"server error {response.status_code}", request=response.request, response=response)
                logger.debug("oracle answered %d (attempt %d)", response.status_code, attempt + 1)
                continue
            if response.status_code != 200:
                raise MalformedResponse(f"oracle answered {response.status_code}: {response.text[:200]}")
            return self._parse(response)
        raise BackendUnavailable(f"oracle unreachable after {self.retries + 1} attempts", cause=last_error)

    @staticmethod
    def _parse(response: httpx.Response) -> LogitPair | float:
        try:
            payload = TruthEvalResponse.model_validate_json(response.content)
        except ValidationError as e:
            raise MalformedResponse(f"unexpected oracle payload: {e.errors()[0]['msg']}") from e
        if payload.logit_true is not None:
            return LogitPair(payload.logit_true, payload.logit_false)
        return payload.prob_true

    async def aclose(self) -> None:
        await self.client.aclose()


async def elicit(
        backend: OracleBackend,
        prompt: TruthPrompt,
        ledger: Optional[CostLedger] = None,
        qid: Optional[str] = None,
) -> float:
    """
    One scoring call: ask the backend once and turn its answer into a plausibility.

    :param backend: The plausibility source.
    :type backend: OracleBackend
    :param prompt: The truth-valuation prompt.
    :type prompt: TruthPrompt
    :param ledger: When given with ``qid``, the call is recorded against (qid, entity).
    :type ledger: CostLedger | None
    :param qid: Query id for the ledger.
    :type qid: str | None
    :return: Plausibility in [0, 1].
    :rtype: float
    :raises BackendUnavailable: If the backend could not be reached or failed unexpectedly.
    :raises MalformedResponse: If the answer is not a usable score.
    """
    try:
        answer = await backend.score(prompt)
    except OrLogError:
        raise
    except Exception as e:
        raise BackendUnavailable(f"{type(backend).__name__} failed: {e!r}", cause=e) from e
    try:
        value = score_from_logits(answer) if isinstance(answer, LogitPair) else float(answer)
    except (NonFiniteLogit, TypeError, ValueError) as e:
        raise MalformedResponse(f"unusable oracle answer {answer!r}") from e
    if not 0.0 <= value <= 1.0:
        raise MalformedResponse(f"oracle probability outside [0, 1]: {value}")
    if ledger is not None and qid is not None:
        ledger.record_call(qid, prompt.entity_id)
    logger.debug("pi(%s, %s) = %.6f", prompt.entity_id, prompt.predicate_id, value)
    return value
