"""Exception and warning types shared across the package.

Every domain error derives from :class:`EvocopyError` and carries an
``exit_code`` used by the CLI: 3 for data/state problems, 4 for backend
(generator / scorer / HTTP endpoint) problems.
"""


class EvocopyError(Exception):
    """Base class for all domain errors."""

    exit_code = 3


# --- genome ---------------------------------------------------------------

class InvalidKeyword(EvocopyError):
    """Keyword text is empty after trimming."""


class MissingFitness(EvocopyError):
    """Operation requires a fitness score that is not set."""


# --- evolve ---------------------------------------------------------------

class PopulationTooSmall(EvocopyError):
    """Selection needs at least two scored members with non-empty genomes."""


class DegenerateFitness(EvocopyError):
    """All fitness scores are zero; proportional selection is undefined."""


# --- textgen / llmclient --------------------------------------------------

class BackendError(EvocopyError):
    """Base for failures of pluggable generator/judge/extractor backends."""

    exit_code = 4


class InvalidPromptSpec(EvocopyError):
    """Prompt spec violates its invariants (e.g. no keywords)."""


class GenerationFailed(BackendError):
    """Copy generator backend raised."""


class ExtractionFailed(BackendError):
    """Keyword extractor backend raised."""


class MalformedOutput(BackendError):
    """Backend output could not be parsed into the expected structure."""


# --- reward ---------------------------------------------------------------

class ScoreFailed(BackendError):
    """Judge backend raised while scoring."""


class MalformedJudgeOutput(BackendError):
    """Judge output lacked three parseable criterion scores after a retry."""


class MissingScore(EvocopyError):
    """Pairwise evaluation found a corpus member without a score."""


# --- llmclient ------------------------------------------------------------

class MissingCredential(BackendError):
    """API key environment variable is unset or empty."""


class EndpointUnavailable(BackendError):
    """Retries exhausted against the completion endpoint."""


class RequestRejected(BackendError):
    """Endpoint returned a non-retryable 4xx response."""


# --- simenv ---------------------------------------------------------------

class UnknownCopy(EvocopyError):
    """Feedback references a copy id absent from the campaign record."""


class DuplicateWave(EvocopyError):
    """Feedback for this wave index was already ingested."""


# --- store ----------------------------------------------------------------

class UnsupportedSchema(EvocopyError):
    """Campaign file was written with an incompatible schema version."""


class CorruptRecord(EvocopyError):
    """Campaign file is unreadable or structurally invalid."""


# --- cli ------------------------------------------------------------------

class EmptyInitialPopulation(EvocopyError):
    """Initial copies file contained no usable rows."""


# --- warnings -------------------------------------------------------------

class SegmentTruncated(UserWarning):
    """Crossover had to drop guaranteed-segment keywords to honor the size cap."""


class ScoreOutOfRange(UserWarning):
    """A judge criterion score fell outside [0, 1] and was clamped."""
