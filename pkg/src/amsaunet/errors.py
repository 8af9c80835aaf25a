"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shape or size constraint violated; message names the offending axis."""


class ContractError(ValueError):
    """A call precondition was violated (bad argument, wrong usage)."""


class ParseError(ValueError):
    """Malformed image file. Carries the byte offset where parsing failed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DatasetError(RuntimeError):
    """Dataset directory inconsistency; message names the file involved."""


class CheckpointError(RuntimeError):
    """Corrupt or incompatible checkpoint file."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite gradient or loss)."""
