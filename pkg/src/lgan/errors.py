"""Exception types raised across the package."""


class LganError(Exception):
    """Base class for every error this package raises on bad user input."""


class InvalidPixel(LganError, ValueError):
    pass


class ShapeError(LganError, ValueError):
    pass


class SpecError(LganError, ValueError):
    pass


class WiringError(LganError, ValueError):
    pass


class ManifestError(LganError, ValueError):
    """A manifest record could not be parsed or validated."""


class EmptyManifest(ManifestError):
    pass


class MissingFile(ManifestError, FileNotFoundError):
    pass


class EmptyMask(LganError, ValueError):
    """Hausdorff distance is undefined when either point set is empty."""


class EmptyReport(LganError, ValueError):
    pass


class CheckpointError(LganError):
    pass


class TrainingDiverged(LganError, FloatingPointError):
    pass
