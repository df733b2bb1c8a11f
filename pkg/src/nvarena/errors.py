"""Exception taxonomy shared across the engine.

The CLI maps these onto its exit codes, so every user-facing failure mode
has exactly one class here.
"""


class NvArenaError(Exception):
    """Base class for all engine errors."""


# --- sheet / prompt parsing ------------------------------------------------

class SheetSyntaxError(NvArenaError):
    """Malformed sheet text (bad header, row, or cell)."""


class RefError(NvArenaError):
    """Cell reference points forward or out of range."""


class UnsupportedTypeError(NvArenaError):
    """Value outside the closed semantic type set."""


class PromptParseError(NvArenaError):
    """Prompt has no recognizable signature line."""


class DoctestParseError(NvArenaError):
    """Doctest-style call line without a result line, or unparseable call."""


# --- matrix / persistence ---------------------------------------------------

class DuplicateIdError(NvArenaError):
    """version_id or sheet_id repeated within one matrix."""


class SignatureMismatchError(NvArenaError):
    """Sheet signature differs from the matrix signature."""


class SrmFormatError(NvArenaError):
    """Persisted SRM file is malformed."""


class FormatVersionError(SrmFormatError):
    """Persisted file carries an unknown format tag."""


# --- worker protocol / arena -------------------------------------------------

class ProtocolError(NvArenaError):
    """Malformed wire message, missing field, or task_id mismatch."""


class SpawnError(NvArenaError):
    """Worker process could not be launched."""


class WorkerUnavailableError(NvArenaError):
    """No usable worker for a language tag required by the matrix."""


class AbortedError(NvArenaError):
    """Run cancelled before completion."""


# --- oracle ------------------------------------------------------------------

class EmptyMatrixError(NvArenaError):
    """Voting requires at least one test and one version."""


class MissingAssertionError(NvArenaError):
    """Prompt oracle requires each sheet to assert at least one row."""


class UndecidedOracleError(NvArenaError):
    """Kill matrix needs an oracle decided on every test."""


# --- analysis ------------------------------------------------------------------

class UnknownVersionError(NvArenaError):
    """Referenced version_id not present in the matrix."""


class NoSurvivorsError(NvArenaError):
    """No version passed all prompt assertions; there is honestly nothing to recommend."""


class InvalidWeightsError(NvArenaError):
    """Ranking weights negative or not summing to 1."""


# --- providers -----------------------------------------------------------------

class ProviderUnavailableError(NvArenaError):
    """Provider endpoint or transcript not reachable."""


class QuotaError(NvArenaError):
    """Provider refused the request for quota reasons."""


class EmptyGenerationError(NvArenaError):
    """Provider produced no usable items."""


# --- pipeline / cli --------------------------------------------------------------

class DslSyntaxError(NvArenaError):
    """Pipeline script line does not match the DSL grammar."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}" + (f", column {column}" if column is not None else "") + f": {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class DataflowError(NvArenaError):
    """Pipeline verb appears before its prerequisite step."""


class PipelineStepError(NvArenaError):
    """Step failure, annotated with the step index."""

    def __init__(self, step_index, verb, cause):
        super().__init__(f"step {step_index} ({verb}): {cause}")
        self.step_index = step_index
        self.verb = verb
        self.cause = cause


class UsageError(NvArenaError):
    """Bad command-line invocation."""
