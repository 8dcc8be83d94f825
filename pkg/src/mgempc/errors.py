"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent caller-supplied inputs."""


class DataError(ValueError):
    """Invalid time-series data or configuration file contents."""


class DynamicsError(ValueError):
    """A state or input bound was violated while advancing the system."""


class BuildError(ValueError):
    """A horizon problem could not be assembled from the given ingredients."""


class SolveError(RuntimeError):
    """The solver failed or reported an unusable status."""


class InfeasibleError(SolveError):
    """A problem that should be feasible was reported infeasible."""
