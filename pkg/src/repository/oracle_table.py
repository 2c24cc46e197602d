import csv
import logging
from pathlib import Path
from typing import Mapping, Optional

from src.entity.errors import MalformedRecord

logger = logging.getLogger(__name__)

WILDCARD = "*"
HEADER = ("entity_id", "predicate_id", "prob")


def load_mock_table(path: str | Path) -> tuple[dict[tuple[str, str], float], Optional[float]]:
    """
    Read a mock-oracle table (TSV ``entity_id predicate_id prob``).

    A ``* * <prob>`` row sets the default returned for missing pairs; an optional
    header row is skipped.

    :param path: Table file.
    :type path: str | Path
    :return: The (entity id, predicate id) -> probability table and the default, if any.
    :rtype: tuple[dict[tuple[str, str], float], float | None]
    :raises MalformedRecord: On a bad row or a probability outside [0, 1].
    """
    table: dict[tuple[str, str], float] = {}
    default = None
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_number, row in enumerate(csv.reader(f, delimiter="\t"), start=1):
            if not row or not "".join(row).strip():
                continue
            if tuple(row) == HEADER:
                continue
            if len(row) != 3:
                raise MalformedRecord(str(path), line_number, f"expected 3 columns, found {len(row)}")
            entity_id, predicate_id, raw = row
            try:
                prob = float(raw)
            except ValueError:
                raise MalformedRecord(str(path), line_number, f"probability {raw!r} is not a number")
            if not 0.0 <= prob <= 1.0:
                raise MalformedRecord(str(path), line_number, f"probability {prob} outside [0, 1]")
            if entity_id == WILDCARD and predicate_id == WILDCARD:
                default = prob
            else:
                table[(entity_id, predicate_id)] = prob
    logger.info("loaded mock oracle table with %d rows from %s", len(table), path)
    return table, default


def save_mock_table(table: Mapping[tuple[str, str], float], path: str | Path, default: Optional[float] = None) -> int:
    """Write a mock-oracle table sorted by (entity id, predicate id); returns the row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(HEADER)
        for key in sorted(table):
            writer.writerow([*key, repr(float(table[key]))])
        if default is not None:
            writer.writerow([WILDCARD, WILDCARD, repr(float(default))])
    return len(table)
