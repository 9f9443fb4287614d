"""Exception hierarchy. Each class carries the process exit code used by the CLI."""


class ScanError(Exception):
    exit_code = 1


# 2 is reserved for command-line usage errors (argparse), 5 for missing files.


class ValidationError(ScanError, ValueError):
    """Bad argument or violated precondition."""

    exit_code = 4


class ConfigError(ScanError):
    exit_code = 3


class FormatError(ScanError):
    """Base class for binary file format problems."""

    exit_code = 10


class BadMagicError(FormatError):
    exit_code = 11


class BadVersionError(FormatError):
    exit_code = 12


class TruncatedFileError(FormatError):
    exit_code = 13


class CorruptPayloadError(FormatError):
    """NaN/Inf features, out-of-range ids and similar payload defects."""

    exit_code = 14


class SynthesisError(ScanError):
    exit_code = 20


class TrainingError(ScanError):
    exit_code = 30


class NoAugmentationSourceError(TrainingError):
    exit_code = 31


class NoConfidentSamplesError(TrainingError):
    exit_code = 32


class StageError(ScanError):
    """Failure inside a pipeline stage; wraps the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
