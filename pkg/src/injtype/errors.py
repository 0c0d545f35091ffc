"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """A value lies outside the domain of an operation (log of 0, NaN loss...)."""


class ContractError(ValueError):
    """A caller broke a documented precondition."""


class ValidationError(ValueError):
    """A corpus record violates the entity-order invariants."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class CorpusParseError(ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class CheckpointFormatError(ValueError):
    """A checkpoint file is truncated, corrupted or otherwise unreadable."""


class VocabularyMismatchError(ValueError):
    def __init__(self, expected, found):
        super().__init__(f"vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {found}")
        self.expected = expected
        self.found = found


class TrainingError(RuntimeError):
    """Non-finite gradients or losses during optimisation."""


class TrainingDiverged(TrainingError):
    def __init__(self, message, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint
