"""Exception hierarchy shared across the package."""


class CoopError(Exception):
    """Base class for all package errors."""

    code = "error"


# --- data loading / generation ---

class ParseError(CoopError):
    """Malformed dataset row or file; carries a line number when known."""

    code = "parse_error"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(CoopError):
    """Row violates the concept-space schema (arity, label range, normalization)."""

    code = "schema_error"


class ConfigError(CoopError):
    code = "config_error"


class MissingDifficultyError(CoopError):
    """Systematic cost model requested without a complete difficulty file."""

    code = "missing_difficulty"


# --- model / calibration / metrics ---

class ArityError(CoopError):
    code = "arity_error"


class DimensionError(CoopError):
    code = "dimension_error"


class EmptyInputError(CoopError):
    code = "empty_input"


class AucUndefinedError(CoopError):
    """AUC requested on a single-class label list."""

    code = "auc_undefined"


class DegenerateDataError(CoopError):
    """All training instances share one label."""

    code = "degenerate_data"


# --- policies ---

class AlreadyRevealedError(CoopError):
    code = "already_revealed"


class NothingToSelectError(CoopError):
    code = "nothing_to_select"


# --- rollout / tuning ---

class MetricMismatchError(CoopError):
    """AUC requested on a task with more than two classes."""

    code = "metric_mismatch"


class EmptyGridError(CoopError):
    code = "empty_grid"


class FractionError(CoopError):
    code = "fraction_error"


# --- session service ---

class UnknownPolicyError(CoopError):
    code = "unknown_policy"


class UnknownInstanceError(CoopError):
    code = "unknown_instance"


class BadBudgetError(CoopError):
    code = "bad_budget"


class UnknownSessionError(CoopError):
    code = "unknown_session"


class WrongConceptError(CoopError):
    """Answer submitted for a concept other than the pending query."""

    code = "wrong_concept"


class SessionFinishedError(CoopError):
    code = "session_finished"


# --- cli ---

class FlagError(CoopError):
    code = "flag_error"


class ArtifactMissingError(CoopError):
    code = "artifact_missing"


class HashMismatchError(CoopError):
    code = "hash_mismatch"
