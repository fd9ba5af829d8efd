"""Exception types shared across the package.

Kept deliberately small: anything that is a plain programming error stays a
ValueError; these classes exist so the CLI can map failure families to exit
codes without string matching.
"""


class ToacnnError(Exception):
    """Base class for package-specific failures."""


class FormatError(ToacnnError):
    """A file or byte stream does not conform to one of the on-disk formats."""


class SolverFailure(ToacnnError):
    """A linear solve or optimization run did not meet its accuracy contract."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class TrainingDiverged(ToacnnError):
    """A non-finite value appeared during training.

    Carries enough location info (epoch, batch, layer) to reproduce the event
    with the same seed.
    """

    def __init__(self, epoch: int, batch: int, layer: str):
        super().__init__(
            f"non-finite value at epoch {epoch}, batch {batch}, layer {layer}"
        )
        self.epoch = epoch
        self.batch = batch
        self.layer = layer
