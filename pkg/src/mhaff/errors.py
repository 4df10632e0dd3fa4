"""Exception hierarchy for the pipeline.

Data/format problems raise MhaffError subclasses; the CLI maps them to
exit code 2. Programming errors (bad shapes passed between our own
modules) still raise the specific subclass so tests can pin behavior.
"""


class MhaffError(Exception):
    """Base class for all pipeline errors."""


class MissingKey(MhaffError):
    def __init__(self, key: str):
        super().__init__(f"missing required header key: {key}")
        self.key = key


class HeaderParseError(MhaffError):
    pass


class UnsupportedElementType(MhaffError):
    pass


class SizeMismatch(MhaffError):
    pass


class OutOfRangeHU(MhaffError):
    pass


class DuplicateNodule(MhaffError):
    pass


class AnnotationParseError(MhaffError):
    pass


class BadMagic(MhaffError):
    pass


class TruncatedPayload(MhaffError):
    pass


class NonFiniteTensor(MhaffError):
    pass


class EmptyMask(MhaffError):
    pass


class EmptyForeground(MhaffError):
    pass


class NoValidPairs(MhaffError):
    pass


class SingleClassLabels(MhaffError):
    pass


class CategoryStarved(MhaffError):
    pass


class ShapeMismatch(MhaffError):
    pass


class OddSpatialDims(MhaffError):
    pass


class NonScalarLoss(MhaffError):
    pass


class ConfigMismatch(MhaffError):
    pass


class InvalidFeatureValue(MhaffError):
    pass


class EmptySplit(MhaffError):
    pass


class LabelOutOfRange(MhaffError):
    pass


class ConfigError(MhaffError):
    pass


class EvenSliceCount(ConfigError):
    pass
