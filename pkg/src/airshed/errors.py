"""Exception hierarchy.

Every error raised by the library derives from :class:`AirshedError`.  The
three intermediate classes map onto the CLI exit codes (config 2, data 3,
algorithm 4).
"""


class AirshedError(Exception):
    exit_code = 1


class ConfigError(AirshedError):
    exit_code = 2


class DataError(AirshedError):
    exit_code = 3


class AlgorithmError(AirshedError):
    exit_code = 4


# raster
class MalformedHeader(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonNumericCell(DataError):
    pass


class MissingQaBand(DataError):
    pass


class GeoreferenceMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


# geometry
class NotAFeatureCollection(DataError):
    pass


class UnsupportedGeometryType(DataError):
    pass


class MissingNameProperty(DataError):
    pass


class DuplicateRegionName(DataError):
    pass


class InvalidRing(DataError):
    pass


# feature table
class EmptyResult(DataError):
    pass


class NullCellsPresent(DataError):
    pass


class TooFewRows(DataError):
    pass


class HeaderMismatch(DataError):
    pass


class RaggedRow(DataError):
    pass


class NonNumericField(DataError):
    pass


# clustering / model selection / signatures
class KTooLarge(AlgorithmError):
    pass


class DegenerateData(AlgorithmError):
    pass


class InvalidParams(AlgorithmError):
    pass


class AllNoise(AlgorithmError):
    pass


class SingleCluster(AlgorithmError):
    pass


class TooFewPoints(AlgorithmError):
    pass


class RowMismatch(AlgorithmError):
    pass


class LengthMismatch(AlgorithmError):
    pass


# rendering
class UnknownRegionName(DataError):
    pass
