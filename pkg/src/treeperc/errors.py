"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid or out-of-range model parameters."""


class OutOfSlabError(ValueError):
    """A vertex was addressed outside the height-(k-1) window slab."""


class SizeCapError(RuntimeError):
    """A configured size cap (cluster, population, or type space) was exceeded."""


class ConsistencyError(RuntimeError):
    """Input data violates a structural invariant it was promised to satisfy."""


class FeasibilityError(RuntimeError):
    """A construction's feasibility condition does not hold for the given inputs."""


class NonConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance within the iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
