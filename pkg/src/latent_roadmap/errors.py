"""Exception hierarchy shared by all modules."""


class LatentRoadmapError(Exception):
    """Base class for every error raised by this package."""


class InvalidState(LatentRoadmapError):
    pass


class IllegalAction(LatentRoadmapError):
    pass


class DimensionMismatch(LatentRoadmapError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NotFitted(LatentRoadmapError):
    pass


class DegenerateData(LatentRoadmapError):
    pass


class ZeroVector(LatentRoadmapError, ValueError):
    pass


class EmptyBatch(LatentRoadmapError):
    pass


class NoSimilarPairsInBatch(LatentRoadmapError):
    pass


class Diverged(LatentRoadmapError):
    pass


class UnknownState(LatentRoadmapError, KeyError):
    pass


class TooFewPoints(LatentRoadmapError, ValueError):
    pass


class NoClusters(LatentRoadmapError):
    pass


class EmptyRoadmap(LatentRoadmapError):
    pass


class EmptyInput(LatentRoadmapError, ValueError):
    pass


class OneCluster(LatentRoadmapError):
    pass


class EmptyHoldout(LatentRoadmapError):
    pass


class ConfigError(LatentRoadmapError):
    pass


class IoError(LatentRoadmapError, OSError):
    pass
