import json
import logging
from pathlib import Path

from src.entity.errors import SnapshotFormatError
from src.entity.models import FieldPolicy, InvertedIndex

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = "orlog-bm25-index"
SNAPSHOT_VERSION = 1


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """
    Serialize an index to a versioned JSON snapshot.

    :param index: The index.
    :type index: InvertedIndex
    :param path: Output file.
    :type path: str | Path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "magic": SNAPSHOT_MAGIC,
        "version": SNAPSHOT_VERSION,
        "field_policy": index.field_policy.value,
        "stopwords": sorted(index.stopwords),
        "entity_ids": index.entity_ids,
        "doc_lengths": index.doc_lengths,
        "avg_doc_len": index.avg_doc_len,
        "postings": {term: [list(p) for p in index.postings[term]] for term in sorted(index.postings)},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, ensure_ascii=False, separators=(",", ":"))
    logger.info("saved index of %d entities, %d terms to %s", index.doc_count, len(index.postings), path)


def load_index(path: str | Path) -> InvertedIndex:
    """
    Load an index snapshot written by :func:`save_index`.

    :param path: Snapshot file.
    :type path: str | Path
    :return: The index.
    :rtype: InvertedIndex
    :raises SnapshotFormatError: On a foreign file or an unsupported version.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise SnapshotFormatError(f"{path}: not a JSON snapshot ({e})") from e
    if not isinstance(payload, dict) or payload.get("magic") != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: missing '{SNAPSHOT_MAGIC}' header")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported snapshot version {payload.get('version')}")
    return InvertedIndex(
        entity_ids=list(payload["entity_ids"]),
        postings={term: [(int(o), int(tf)) for o, tf in plist] for term, plist in payload["postings"].items()},
        doc_lengths=[int(n) for n in payload["doc_lengths"]],
        avg_doc_len=float(payload["avg_doc_len"]),
        field_policy=FieldPolicy(payload["field_policy"]),
        stopwords=frozenset(payload["stopwords"]),
    )
