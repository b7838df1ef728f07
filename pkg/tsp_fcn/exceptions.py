class TspFcnError(Exception):
    """
    base class of tsp_fcn exceptions

    exit_code is what the command line returns when the error escapes a command
    """

    exit_code = 2


class ConfigError(TspFcnError):
    exit_code = 1


class InvalidInstanceError(TspFcnError):
    pass


class InvalidTourError(TspFcnError):
    pass


class RasterError(TspFcnError):
    pass


class MalformedFileError(TspFcnError):
    pass


class DimensionMismatchError(TspFcnError):
    pass


class SizeLimitError(TspFcnError):
    pass


class ShapeError(TspFcnError):
    pass


class NumericGuardError(TspFcnError):
    exit_code = 3


class CheckpointError(TspFcnError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class GradientCheckError(TspFcnError):
    exit_code = 3


class EmptySetError(TspFcnError):
    pass


class DatasetError(TspFcnError):
    pass


class SampleNotExistError(DatasetError, KeyError):
    pass


class SplitNameError(DatasetError):
    exit_code = 1


class SplitRemoveDefaultError(DatasetError):
    exit_code = 1
