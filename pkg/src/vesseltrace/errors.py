"""Exception hierarchy shared by all vesseltrace modules."""


class VesselTraceError(Exception):
    """Base class for all errors raised by this package."""


class DataError(VesselTraceError):
    """Bad input data: missing/corrupt files, header mismatches, bad geometry."""


class GeometryMismatchError(DataError):
    """Two volumes that must share dims/spacing/origin do not."""


class OutOfBoundsError(VesselTraceError):
    """A physical point or voxel index falls outside the sampling domain."""


class ComputeError(VesselTraceError):
    """A numerical operation cannot proceed (bad scale, bad seed, no path)."""
