import logging
from collections import Counter
from pathlib import Path

from src.entity.models import CostLedger
from src.repository.files import read_jsonl, write_jsonl
from src.schemas.queries import LedgerRecord

logger = logging.getLogger(__name__)


def dump_ledger(ledger: CostLedger, path: str | Path) -> int:
    """
    Write the ledger as JSONL, one line per (query, entity) pair.

    :param ledger: The ledger.
    :type ledger: CostLedger
    :param path: Output file.
    :type path: str | Path
    :return: Number of lines written.
    :rtype: int
    """
    entries = ledger.entries()
    counts = Counter(entry.qid for entry in entries)
    count = write_jsonl(path, (
        LedgerRecord(
            qid=entry.qid,
            entity_id=entry.entity_id,
            predicate_calls=entry.predicate_calls,
            parse_token_cost=ledger.parse_token_cost.get(entry.qid, 0),
            candidate_count=counts[entry.qid],
            degraded=entry.degraded,
        )
        for entry in entries
    ))
    logger.info("wrote ledger of %d pairs to %s", count, path)
    return count


def load_ledger(path: str | Path) -> CostLedger:
    """Rebuild a :class:`CostLedger` from a dump written by :func:`dump_ledger`."""
    ledger = CostLedger()
    for record in read_jsonl(path, LedgerRecord):
        entry = ledger.register_pair(record.qid, record.entity_id)
        entry.predicate_calls = record.predicate_calls
        entry.degraded = record.degraded
        ledger.set_parse_cost(record.qid, record.parse_token_cost)
    return ledger
