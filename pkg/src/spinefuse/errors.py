"""Exception types shared across the toolkit."""


class SpinefuseError(Exception):
    """Base class for all toolkit errors."""


class InvalidImage(SpinefuseError):
    """Depth image has the wrong dtype, shape, or value range."""


class InvalidThresholds(SpinefuseError):
    """Mask thresholds violate 0 <= lo < hi <= 1."""


class EmptyCloud(SpinefuseError):
    """An operation received or produced a point cloud with no points."""


class NormalsRequired(SpinefuseError):
    """The operation needs per-point normals and the cloud has none."""


class InsufficientCorrespondences(SpinefuseError):
    """Feature matching yielded fewer pairs than the RANSAC minimum."""


class NoConsensus(SpinefuseError):
    """Every RANSAC hypothesis was rejected by the validation checks."""


class MeshFailure(SpinefuseError):
    """Surface reconstruction could not produce a usable mesh."""


class EnsembleTooSmall(SpinefuseError):
    """Fewer than three candidates were offered to the ensemble vote."""


class ImplausibleSkeleton(SpinefuseError):
    """Skeleton geometry is outside plausible human proportions."""


class DegenerateLandmarks(SpinefuseError):
    """Landmarks are missing or collapse to degenerate geometry."""


class DegenerateSample(SpinefuseError):
    """A statistical sample has no usable variation."""


class InvalidBody(SpinefuseError):
    """Synthetic body parameters are outside the supported ranges."""


class EmptyRender(SpinefuseError):
    """A synthetic depth render produced no foreground pixels."""


class ConfigError(SpinefuseError):
    """Configuration file or override is malformed."""
