"""Exception hierarchy shared across the package."""


class VesselmarkError(Exception):
    """Base class for all package-specific errors."""


class OutOfBoundsError(VesselmarkError):
    """A point or seed lies outside the volume's sampling domain."""


class InvalidWindowError(VesselmarkError):
    """Intensity window has lo >= hi."""


class GeometryMismatchError(VesselmarkError):
    """Two volumes that must share a grid do not."""


class InvalidSigmaError(VesselmarkError):
    """Gaussian sigma must be positive."""


class VolumeTooSmallError(VesselmarkError):
    """Operation needs at least 3 voxels per axis."""


class InvalidParamsError(VesselmarkError):
    """Filter parameters violate their invariants."""


class SeedBelowThresholdError(VesselmarkError):
    """Region-growing seed voxel fails the acceptance predicate."""


class EmptySupportError(VesselmarkError):
    """No voxel lies inside the current sphere."""


class InvalidDiameterError(VesselmarkError):
    """Vessel diameters must be positive."""


class NoConvergenceError(VesselmarkError):
    """Fixed-point inversion of a synthetic transform failed to converge."""


class MissingFileError(VesselmarkError):
    """A required input file is absent."""


class MalformedRowError(VesselmarkError):
    """A landmark-table row could not be parsed."""

    def __init__(self, row_number, message):
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


class UnitMismatchError(VesselmarkError):
    """Landmark table header declares non-mm coordinate units."""


class EmptySelectionError(VesselmarkError):
    """No landmark pairs remain after filtering."""


class LengthMismatchError(VesselmarkError):
    """Paired samples must have equal lengths."""


class UndefinedStatisticError(VesselmarkError):
    """Test statistic is undefined (zero variance and zero mean difference)."""
