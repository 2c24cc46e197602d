from functools import lru_cache

from fastapi import APIRouter, Depends, HTTPException, status

from src.conf.config import config
from src.entity.errors import OracleError
from src.repository.oracle_table import load_mock_table
from src.schemas.oracle import TruthEvalRequest, TruthEvalResponse
from src.services.oracle import ConstantBackend, LogitPair, MockBackend, OracleBackend

router = APIRouter(tags=['oracle'])


@lru_cache
def get_backend() -> OracleBackend:
    """
    Backend served by the app: the ``MOCK_TABLE`` lookup table when configured,
    otherwise a constant ``MOCK_DEFAULT`` answer.

    :return: The plausibility backend.
    :rtype: OracleBackend
    """
    if config.MOCK_TABLE:
        table, default = load_mock_table(config.MOCK_TABLE)
        return MockBackend(table, default=default if default is not None else config.MOCK_DEFAULT)
    return ConstantBackend(config.MOCK_DEFAULT)


@router.post('/truth-eval', response_model=TruthEvalResponse, response_model_exclude_none=True)
async def truth_eval(body: TruthEvalRequest, backend: OracleBackend = Depends(get_backend)):
    """
    Endpoint answering one truth-valuation prompt.

    :param body: Context, entity title, instantiated predicate and suffix.
    :type body: TruthEvalRequest
    :param backend: The plausibility backend (dependency injection).
    :type backend: OracleBackend
    :return: A logit pair or a probability, whichever the backend produces.
    :rtype: TruthEvalResponse
    :raises HTTPException 503: If the backend fails.
    """
    try:
        answer = await backend.score(body.to_prompt())
    except OracleError as e:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e))
    if isinstance(answer, LogitPair):
        return TruthEvalResponse(logit_true=answer.z_true, logit_false=answer.z_false)
    return TruthEvalResponse(prob_true=answer)
