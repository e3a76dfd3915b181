"""Exception types shared across the package."""


class XposeError(Exception):
    """Base class for all package errors."""


class NonInvertibleHomography(XposeError):
    pass


class DegenerateElevation(XposeError):
    """Viewpoint elevation at or beyond +/-90 deg: look-at upvector undefined."""


class DegeneratePole(XposeError):
    """Camera center on the +/-z axis: azimuth/inplane not recoverable."""


class EmptyMask(XposeError):
    pass


class ZeroTranslation(XposeError):
    pass


class EmptyList(XposeError):
    pass


class InsufficientCorrespondences(XposeError):
    pass


class NearPiRotation(XposeError):
    """SO(3) log requested for a rotation within tolerance of 180 deg."""


class DisconnectedGraph(XposeError):
    pass


class IoFailure(XposeError):
    pass


class ConfigError(XposeError):
    pass


class InconclusiveCalibration(XposeError):
    pass


class GeneratorFailure(XposeError):
    """Novel-view backend failure.

    ``kind`` is one of: "timeout", "http_status", "decode", "count_mismatch",
    "backend".
    """

    def __init__(self, kind, message):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message
