import logging
from typing import Optional

import httpx
from pydantic import ValidationError

from src.entity.errors import BackendUnavailable, MalformedResponse
from src.entity.models import PredicateTemplate, QuerySpec
from src.schemas.oracle import TranslationResponse
from src.services.logic_form import parse_formula

logger = logging.getLogger(__name__)

TRANSLATE_PATH = "/translate"


async def translate(
        qid: str,
        text: str,
        endpoint: str,
        timeout: float = 30.0,
        template_label: Optional[str] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
) -> QuerySpec:
    """
    Ask an external translator for a query's predicates and logical form.

    The translator answers ``{"predicates": [{"id", "text"}], "form", "parse_token_cost"}``.

    :param qid: Query id.
    :type qid: str
    :param text: Natural-language query.
    :type text: str
    :param endpoint: Base URL of the translator.
    :type endpoint: str
    :param timeout: Request timeout in seconds.
    :type timeout: float
    :param template_label: Optional structural template label for the query.
    :type template_label: str | None
    :param transport: Optional httpx transport.
    :type transport: httpx.AsyncBaseTransport | None
    :return: The decomposed query, carrying the translator's token cost.
    :rtype: QuerySpec
    :raises BackendUnavailable: If the translator cannot be reached or answers 5xx.
    :raises MalformedResponse: On any other non-200 answer or an unusable payload.
    :raises FormulaSyntaxError: If the returned form does not parse.
    :raises InvalidQuerySpec: If the returned predicates and form disagree.
    """
    async with httpx.AsyncClient(base_url=endpoint, timeout=timeout, transport=transport) as client:
        try:
            response = await client.post(TRANSLATE_PATH, json={"qid": qid, "text": text})
        except httpx.TransportError as e:
            raise BackendUnavailable(f"translator unreachable: {e}", cause=e) from e
    if response.status_code >= 500:
        raise BackendUnavailable(f"translator answered {response.status_code}")
    if response.status_code != 200:
        raise MalformedResponse(f"translator answered {response.status_code}: {response.text[:200]}")
    try:
        payload = TranslationResponse.model_validate_json(response.content)
        predicates = [PredicateTemplate(id=p.id, text=p.text) for p in payload.predicates]
    except ValidationError as e:
        raise MalformedResponse(f"unexpected translator payload: {e.errors()[0]['msg']}") from e
    logger.debug("translated %s into %s (%d tokens)", qid, payload.form, payload.parse_token_cost)
    return QuerySpec(
        qid=qid,
        raw=text,
        predicates=predicates,
        form=parse_formula(payload.form),
        template_label=template_label,
        parse_token_cost=payload.parse_token_cost,
    )
