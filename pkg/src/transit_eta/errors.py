"""Exception types shared across the package."""


class TransitEtaError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(TransitEtaError):
    """A required CSV column is missing or the column map is invalid."""


class UnknownLineError(TransitEtaError, KeyError):
    """A bus line name was not present in the fitted line vocabulary."""

    def __init__(self, line_name: str):
        super().__init__(line_name)
        self.line_name = line_name

    def __str__(self) -> str:
        return f"unknown bus line: {self.line_name!r}"


class TrainingDivergedError(TransitEtaError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class IntegrityError(TransitEtaError):
    """A model file is truncated or its checksum does not match."""


class VersionMismatchError(TransitEtaError):
    """A model file was written with an unsupported format version."""

    def __init__(self, have: int, found: int):
        super().__init__(f"unsupported model format version: have={have}, found={found}")
        self.have = have
        self.found = found
