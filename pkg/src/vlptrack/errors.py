"""Exception types shared across the package."""


class VlpError(Exception):
    """Base class for all package-specific errors."""


class DegenerateGeometryError(VlpError, ValueError):
    """Lamp geometry does not admit a solution (e.g. coincident image points)."""


class InvalidHeightError(VlpError, ValueError):
    """A camera-to-lamp distance that must be positive was not."""


class OutOfFrameError(VlpError, ValueError):
    """A window or region has no usable overlap with the frame."""


class IncompatibleHistogramError(VlpError, ValueError):
    """Two histograms cannot be compared (different bin counts)."""


class LostTargetError(VlpError, RuntimeError):
    """Mean shift found no weight mass; the target has left the search area."""


class NumericalDegeneracyError(VlpError, RuntimeError):
    """Covariance factorization failed even after jitter."""


class SceneValidationError(VlpError, ValueError):
    """A scene description violates a simulator constraint."""


class SchemaError(VlpError, ValueError):
    """A configuration document failed validation.

    ``path`` names the offending key, e.g. ``"scene.lamps[0].position"``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
