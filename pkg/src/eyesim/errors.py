"""Exception hierarchy shared across the engine."""


class EyesimError(Exception):
    """Base class for all engine errors."""


# geometry
class TooFewPixels(EyesimError):
    """Mask has fewer foreground pixels than the fit requires."""


class DegenerateRegion(EyesimError):
    """Pixel mass is (near-)collinear; no ellipse is defined."""


class RankDeficient(EyesimError):
    """Source landmarks coincide; similarity fit is underdetermined."""


# kinex
class EmptySequence(EyesimError):
    """An operation received a zero-length frame sequence."""


class AllFramesDegenerate(EyesimError):
    """No frame in the sequence yields a valid pupil fit."""


class LengthMismatch(EyesimError):
    """Per-frame sequences disagree in length."""


class InvariantViolation(EyesimError):
    """A state or script violates a type invariant."""


# simulator
class UnknownToolClass(EyesimError):
    """Action references a tool that is neither present nor being spawned."""


class BoundsTooSmall(EyesimError):
    """Scenario bounds cannot host a tool entry point outside the iris."""


# renderer
class FrameGap(EyesimError):
    """Flow requested between states whose frame indices are not consecutive."""


# scenegraph
class DimensionMismatch(EyesimError):
    """Raster and flow field dimensions disagree."""


class CapacityExceeded(EyesimError):
    """Graph has more nodes than the requested feature capacity."""


class UnknownClassId(EyesimError):
    """A class id has no entry in the class-name map."""


# dataio
class Corrupt(EyesimError):
    """File failed to parse or is internally inconsistent."""


class SchemaVersionMismatch(EyesimError):
    """File carries an unsupported format major version."""


class ScriptTooShort(EyesimError):
    """Script has fewer frames than one export window."""


class MissingLabels(EyesimError):
    """Motion source carries no phase labels."""


# server
class UnknownSession(EyesimError):
    """No session with the given id."""
