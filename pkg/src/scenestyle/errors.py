"""Exception hierarchy for the stylization pipeline."""


class SceneStyleError(Exception):
    """Base class for all library errors."""


class ConfigError(SceneStyleError):
    """Bad or unresolvable configuration."""


class InvalidMesh(SceneStyleError):
    """Mesh violates a structural invariant (bad index, NaN, degenerate face)."""


class EmptyScene(SceneStyleError):
    """Scene contains neither structure elements nor objects."""


class OutOfRange(SceneStyleError):
    """Numeric input outside its documented domain."""


class SegmentationFailure(SceneStyleError):
    """Mesh cannot be segmented at the requested granularity."""


class LabelMismatch(SceneStyleError):
    """Labeling does not cover the mesh (or colors do not cover the labeling)."""


class NumericalFailure(SceneStyleError):
    """An iterative numerical routine did not converge."""


class KTooLarge(SceneStyleError):
    """More eigenpairs requested than the mesh supports."""


class EmptyRender(SceneStyleError):
    """No face projected inside the frame."""


class CoverageFailure(SceneStyleError):
    """Some object is invisible from every scene camera."""


class DegenerateImage(SceneStyleError):
    """Every pixel was excluded from the color histogram."""


class BackendFailure(SceneStyleError):
    """Embedding backend could not be constructed or evaluated."""


class ZeroVector(SceneStyleError):
    """An embedding had (numerically) zero norm."""


class NonFiniteLoss(SceneStyleError):
    """Optimization produced a NaN/inf loss."""


class EmptyLibrary(SceneStyleError):
    """Texture library is empty or has no eligible texture for an element."""


class MissingBaseColor(SceneStyleError):
    """A segment has no entry in the base color table."""


class GradientUnsupported(SceneStyleError):
    """Rasterizer cannot provide position gradients for this input."""


class MissingUpstream(SceneStyleError):
    """A stage was invoked before its upstream artifact exists."""

    def __init__(self, artifact: str):
        super().__init__(f"missing upstream artifact: {artifact}")
        self.artifact = artifact


class StageError(SceneStyleError):
    """A pipeline stage failed; partial state has been persisted."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
