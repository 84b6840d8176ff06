"""Exception types raised across the package."""


class GCFlowError(Exception):
    """Base class for all package errors."""


class ConeViolation(GCFlowError, ValueError):
    """A curvature vector lies outside the admissible cone where it must not."""


class EnvelopeError(GCFlowError, RuntimeError):
    """The envelope minimization found no feasible candidate."""


class StencilError(GCFlowError, IndexError):
    """A finite-difference stencil reaches outside the grid."""


class CFLViolation(GCFlowError, ValueError):
    pass


class NonFiniteValue(GCFlowError, FloatingPointError):
    """A time step produced NaN or inf; ``cell`` holds the first offending index."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class NonConvergence(GCFlowError, RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class DegenerateFront(GCFlowError, ValueError):
    """Every front sample was rejected (vanishing gradient)."""


class ConfigError(GCFlowError, ValueError):
    """Invalid experiment configuration; ``problems`` lists every offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
