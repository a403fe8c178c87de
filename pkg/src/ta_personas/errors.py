"""Exception hierarchy shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


# corpus
class CorpusEmpty(PipelineError):
    pass


class IoError(PipelineError):
    """File could not be read or written; message names the file."""


class ChunkOverflow(PipelineError):
    """A single sentence exceeds the chunk budget; never truncate silently."""


# gateway
class TokenBudgetExceeded(PipelineError):
    pass


class ProviderUnavailable(PipelineError):
    pass


class ConfigError(PipelineError):
    pass


class MockMiss(PipelineError):
    pass


class DuplicateRegistration(PipelineError):
    pass


# parsing / coding
class ParseError(PipelineError):
    """Model output could not be parsed. Carries the raw response text."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class DimensionMismatch(PipelineError):
    pass


class EmptyCodebook(PipelineError):
    pass


# theming / review
class LineageGap(PipelineError):
    pass


class IncompleteDecision(PipelineError):
    pass


class UnknownTheme(PipelineError):
    pass


class EmptyThemeBook(PipelineError):
    pass


class EmptyPairSet(PipelineError):
    pass


# store
class SchemaError(PipelineError):
    pass


class ManifestCorruption(PipelineError):
    pass
