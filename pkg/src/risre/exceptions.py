"""Exception hierarchy shared by the solvers."""


class SolverError(RuntimeError):
    """A numerical sub-solver failed."""


class BacktrackingError(SolverError):
    """Step-size search did not reach the sufficient-descent condition."""
