class OrLogError(Exception):
    """Base class for every error raised by the toolkit."""


class FormulaSyntaxError(OrLogError, ValueError):
    """
    Raised when a logical-form string does not match the DSL grammar.

    :param message: Human readable description of the problem.
    :type message: str
    :param offset: UTF-8 byte offset in the source text where the problem was found.
    :type offset: int
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.message = message
        self.offset = offset


class EmptyFormula(OrLogError, ValueError):
    """Raised when a logical-form string is blank."""


class InvalidQuerySpec(OrLogError):
    """Raised when a query's predicates and logical form disagree."""


class MissingPrior(OrLogError, KeyError):
    def __init__(self, predicate_id: str):
        super().__init__(predicate_id)
        self.predicate_id = predicate_id

    def __str__(self):
        return f"no prior for predicate '{self.predicate_id}'"


class MissingAssignment(OrLogError, KeyError):
    def __init__(self, predicate_id: str):
        super().__init__(predicate_id)
        self.predicate_id = predicate_id

    def __str__(self):
        return f"no truth value for predicate '{self.predicate_id}'"


class TooManyAtoms(OrLogError, ValueError):
    """Raised when brute-force enumeration is asked for more atoms than it allows."""


class MissingDescription(OrLogError, UserWarning):
    """Parametric+ prompt requested for an entity without a description."""


class NonFiniteLogit(OrLogError, ValueError):
    """Raised when a backend returns NaN or infinite logits."""


class OracleError(OrLogError):
    """Base class for failures talking to a plausibility backend."""


class BackendUnavailable(OracleError):
    """
    Raised when a backend could not be reached after the configured retries.

    :param cause: The last underlying exception.
    :type cause: Exception | None
    """

    def __init__(self, message: str, cause: Exception | None = None):
        super().__init__(message)
        self.cause = cause


class MalformedResponse(OracleError):
    """Raised when a backend answers with a payload that is not a score."""


class DuplicateEntityId(OrLogError, ValueError):
    def __init__(self, entity_id: str):
        super().__init__(f"duplicate entity id '{entity_id}'")
        self.entity_id = entity_id


class UnknownEntityId(OrLogError, KeyError):
    def __init__(self, entity_id: str, line_number: int | None = None):
        super().__init__(entity_id)
        self.entity_id = entity_id
        self.line_number = line_number

    def __str__(self):
        where = f" (line {self.line_number})" if self.line_number else ""
        return f"unknown entity id '{self.entity_id}'{where}"


class EmptyQuery(OrLogError, ValueError):
    """Raised when a query has no terms left after tokenization."""


class MalformedRunLine(OrLogError, ValueError):
    """
    Raised for a line of a TREC run or qrels file that cannot be parsed.

    :param line_number: 1-based line number in the file.
    :type line_number: int
    """

    def __init__(self, line_number: int, line: str, reason: str = "malformed line"):
        super().__init__(f"{reason} at line {line_number}: {line.strip()!r}")
        self.line_number = line_number


class MalformedRecord(OrLogError, ValueError):
    """Raised for a JSONL or TSV record that fails validation."""

    def __init__(self, path: str, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


class MissingPosterior(OrLogError, KeyError):
    def __init__(self, entity_id: str):
        super().__init__(entity_id)
        self.entity_id = entity_id

    def __str__(self):
        return f"no posterior for candidate '{self.entity_id}'"


class EmptyLedger(OrLogError, ValueError):
    """Raised when cost accounting is asked for over an empty ledger."""


class SnapshotFormatError(OrLogError, ValueError):
    """Raised when an index snapshot has the wrong header or version."""


class ConfigError(OrLogError, ValueError):
    """Raised when a run configuration is valid on its own but cannot be acted on."""
