"""Exception types shared across the package."""


class DecodeError(ValueError):
    """A binary artifact could not be decoded."""


class BadMagicError(DecodeError):
    """The file does not start with the expected magic bytes."""


class TruncatedError(DecodeError):
    """The file ended before the declared content."""


class VersionError(DecodeError):
    """The file carries an unsupported format version."""


class ConfigError(ValueError):
    """A configuration file or override is missing or malformed."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite loss {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


class StageError(RuntimeError):
    """A pipeline stage failed; the stage name and cause are preserved."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
