import logging
from pathlib import Path
from typing import Iterable

from src.entity.errors import DuplicateEntityId
from src.entity.models import Entity
from src.repository.files import read_jsonl, write_jsonl
from src.schemas.queries import CorpusRecord

logger = logging.getLogger(__name__)


def load_corpus(path: str | Path) -> list[Entity]:
    """
    Load an entity corpus from JSONL (``{"id", "title", "text"}`` per line).

    :param path: Corpus file.
    :type path: str | Path
    :return: Entities in file order.
    :rtype: list[Entity]
    :raises DuplicateEntityId: If an id occurs twice.
    """
    entities = []
    seen = set()
    for record in read_jsonl(path, CorpusRecord):
        if record.id in seen:
            raise DuplicateEntityId(record.id)
        seen.add(record.id)
        entities.append(Entity(id=record.id, title=record.title, description=record.text))
    logger.info("loaded %d entities from %s", len(entities), path)
    return entities


def save_corpus(entities: Iterable[Entity], path: str | Path) -> int:
    """Write entities as corpus JSONL; returns the number of lines."""
    return write_jsonl(path, (CorpusRecord(id=e.id, title=e.title, text=e.description) for e in entities))
