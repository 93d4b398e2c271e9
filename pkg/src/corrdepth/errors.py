"""Exception types shared across the package.

The CLI maps these onto distinct process exit codes (see ``cli.EXIT_CODES``).
"""


class CorrDepthError(Exception):
    """Base class for all package errors."""


class ShapeError(CorrDepthError):
    """Array shapes or channel sizes are inconsistent."""


class ConfigError(CorrDepthError):
    """A parameter is outside its allowed range or a required input is missing."""


class GeometryError(CorrDepthError):
    """Base class for geometric failure conditions."""


class InvalidPoseError(GeometryError):
    """Rotation is not orthonormal with determinant one."""


class InvalidDepthError(GeometryError):
    """A depth value is non-positive or not finite where one is required."""


class BehindCameraError(GeometryError):
    """A reprojected point lies on or behind the source camera plane."""


class DegenerateGeometryError(GeometryError):
    """Triangulation has no baseline (pure rotation or coincident centers)."""


class NegativeDepthError(GeometryError):
    """The triangulated depth minimizer is non-positive."""


class EmptyResultError(CorrDepthError):
    """An operation produced no valid output for any pixel."""


class EmptyMaskError(CorrDepthError):
    """No pixel is valid in every input of a masked reduction."""


class FormatError(CorrDepthError):
    """A file does not conform to its format; carries byte/line context."""

    def __init__(self, message: str, *, offset: int | None = None,
                 line: int | None = None):
        where = ""
        if offset is not None:
            where = f" (byte offset {offset})"
        elif line is not None:
            where = f" (line {line})"
        super().__init__(message + where)
        self.offset = offset
        self.line = line
