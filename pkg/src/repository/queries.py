import logging
from pathlib import Path
from typing import Iterable

from src.entity.errors import FormulaSyntaxError, EmptyFormula, InvalidQuerySpec, MalformedRecord
from src.entity.models import PredicateTemplate, QuerySpec
from src.repository.files import iter_jsonl, write_jsonl
from src.schemas.queries import PredicateRecord, QueryRecord
from src.services.logic_form import format_formula, parse_formula

logger = logging.getLogger(__name__)


def record_to_query(record: QueryRecord) -> QuerySpec:
    """
    Turn a validated query-file record into a :class:`QuerySpec`.

    :param record: One line of the query file.
    :type record: QueryRecord
    :return: The query with its parsed logical form.
    :rtype: QuerySpec
    :raises FormulaSyntaxError: If the form does not parse.
    :raises InvalidQuerySpec: If predicates and form disagree.
    """
    return QuerySpec(
        qid=record.qid,
        raw=record.text,
        predicates=[PredicateTemplate(id=p.id, text=p.text) for p in record.predicates],
        form=parse_formula(record.form),
        template_label=record.template,
        parse_token_cost=record.parse_tokens or 0,
    )


def query_to_record(query: QuerySpec) -> QueryRecord:
    return QueryRecord(
        qid=query.qid,
        text=query.raw,
        form=format_formula(query.form),
        predicates=[PredicateRecord(id=p.id, text=p.text) for p in query.predicates],
        template=query.template_label,
        parse_tokens=query.parse_token_cost or None,
    )


def load_queries(path: str | Path) -> list[QuerySpec]:
    """
    Load queries with their decompositions from JSONL.

    :param path: Query file.
    :type path: str | Path
    :return: Queries in file order.
    :rtype: list[QuerySpec]
    :raises MalformedRecord: On schema, logical-form or predicate errors, with the line number.
    """
    queries = []
    for line_number, record in iter_jsonl(path, QueryRecord):
        try:
            queries.append(record_to_query(record))
        except (FormulaSyntaxError, EmptyFormula, InvalidQuerySpec, ValueError) as e:
            raise MalformedRecord(str(path), line_number, f"query {record.qid}: {e}") from e
    qids = [q.qid for q in queries]
    if len(set(qids)) != len(qids):
        raise MalformedRecord(str(path), 0, "duplicate qid")
    logger.info("loaded %d queries from %s", len(queries), path)
    return queries


def save_queries(queries: Iterable[QuerySpec], path: str | Path) -> int:
    """Write queries as JSONL with their forms printed in the DSL."""
    return write_jsonl(path, (query_to_record(q) for q in queries))


def read_raw_queries(path: str | Path) -> list[tuple[str, str]]:
    """
    Read undecomposed queries from a ``qid<TAB>text`` file.

    Only the first tab separates the fields; the text keeps any further tabs. Blank lines are skipped.

    :param path: TSV file.
    :type path: str | Path
    :return: (qid, text) pairs in file order.
    :rtype: list[tuple[str, str]]
    :raises MalformedRecord: On a line without a tab, or with an empty qid or text.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            qid, sep, text = line.partition("\t")
            if not sep or not qid.strip() or not text.strip():
                raise MalformedRecord(str(path), line_number, "expected 'qid<TAB>text'")
            rows.append((qid.strip(), text.strip()))
    return rows
