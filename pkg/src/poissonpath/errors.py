"""Exception hierarchy shared by all modules."""


class ToolpathError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ToolpathError):
    """A mesh or artifact file could not be parsed."""


class TopologyError(ToolpathError):
    """Non-manifold, degenerate or otherwise unusable mesh connectivity."""


class InvalidParamError(ToolpathError, ValueError):
    """A parameter is outside its admissible range."""


class InvalidConfigError(InvalidParamError):
    """A cutter or job configuration is inconsistent."""


class DegenerateFrameError(ToolpathError):
    """A face tangent frame cannot be constructed."""


class DegenerateTriangleError(ToolpathError):
    """A triangle is too degenerate for the discrete operators."""


class GougeError(ToolpathError):
    """Concave curvature exceeds the effective cutter curvature.

    ``faces`` lists the offending face indices when known.
    """

    def __init__(self, message, faces=None):
        super().__init__(message)
        self.faces = [] if faces is None else [int(f) for f in faces]


class NotAdjacentError(ToolpathError):
    """Two faces were expected to share an edge but do not."""


class NoSeedError(ToolpathError):
    """Orientation propagation has nothing to start from."""


class DisconnectedGraphError(ToolpathError):
    """The similarity graph has more components than the mesh."""


class EigenSolveError(ToolpathError):
    """An eigenproblem has no usable solution."""


class InvalidKError(InvalidParamError):
    """Cluster count is out of range."""


class SolveError(ToolpathError):
    """A linear solve failed or missed its residual bound."""


class DisconnectedMeshError(SolveError):
    """The mesh has several components where one was required."""


class NoConvergenceError(ToolpathError):
    """An iterative method stopped before meeting its tolerance.

    The best iterate found so far travels with the exception.
    """

    def __init__(self, message, best=None, violation=None, history=None):
        super().__init__(message)
        self.best = best
        self.violation = violation
        self.history = [] if history is None else list(history)


class OutOfRangeError(ToolpathError, ValueError):
    """A requested level lies outside the range of the scalar field."""


class DegenerateFieldError(ToolpathError):
    """The scalar field is (numerically) constant."""


class NoIntersectionError(ToolpathError):
    """Adjacent cutter circles do not intersect: the gap is left uncut."""


class MissingArtifactError(ToolpathError):
    """A pipeline stage was asked to run without its input artifacts."""
