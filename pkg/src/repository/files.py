import json
from pathlib import Path
from typing import Iterable, Iterator, TypeVar

from pydantic import BaseModel, ValidationError

from src.entity.errors import MalformedRecord

ModelT = TypeVar("ModelT", bound=BaseModel)


def iter_jsonl(path: str | Path, model: type[ModelT]) -> Iterator[tuple[int, ModelT]]:
    """
    Read a JSONL file, validating every non-blank line against a pydantic model.

    :param path: File to read.
    :type path: str | Path
    :param model: Schema for one line.
    :type model: type[BaseModel]
    :return: (line number, validated record) pairs, in file order.
    :rtype: Iterator[tuple[int, BaseModel]]
    :raises MalformedRecord: On invalid JSON or a failed validation, with the line number.
    """
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, model.model_validate_json(line)
            except ValidationError as e:
                first = e.errors()[0]
                where = ".".join(str(part) for part in first["loc"]) or "record"
                raise MalformedRecord(str(path), line_number, f"{where}: {first['msg']}") from e


def read_jsonl(path: str | Path, model: type[ModelT]) -> Iterator[ModelT]:
    """Validated records of a JSONL file, without line numbers."""
    for _, record in iter_jsonl(path, model):
        yield record


def write_jsonl(path: str | Path, records: Iterable[BaseModel | dict]) -> int:
    """
    Write records one JSON object per line, creating parent directories.

    :return: Number of lines written.
    :rtype: int
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            data = record.model_dump(mode="json", exclude_none=True) if isinstance(record, BaseModel) else record
            f.write(json.dumps(data, ensure_ascii=False) + "\n")
            count += 1
    return count
