"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class GeometryError(ValueError):
    code = "geometry-error"


class UnsupportedDimension(GeometryError):
    code = "unsupported-dimension"


class LengthMismatch(GeometryError):
    code = "length-mismatch"


class UnboundedBody(GeometryError):
    code = "unbounded-body"


class DegenerateBody(GeometryError):
    code = "degenerate-body"


class OriginNotInterior(GeometryError):
    code = "origin-not-interior"


class OriginOutside(GeometryError):
    code = "origin-outside"


class IntegrabilityViolation(GeometryError):
    code = "integrability-violation"


class HemisphereViolation(GeometryError):
    code = "hemisphere-violation"


class NegativeSupport(GeometryError):
    code = "negative-h"


class BoundaryBlowup(GeometryError):
    code = "boundary-blowup"


class OutOfPatch(GeometryError):
    code = "out-of-patch"


class SingularAtZero(GeometryError):
    code = "singular-at-zero"


class PointOutsideCone(GeometryError):
    code = "point-outside-cone"


class InvalidParameters(GeometryError):
    code = "invalid-parameters"


class UnknownExperiment(GeometryError):
    code = "unknown-experiment"
