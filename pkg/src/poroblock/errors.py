"""Exception types shared across the package."""


class PoroblockError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PoroblockError):
    """Invalid user input: bad mesh parameters, unknown tags, missing data."""


class MeshError(PoroblockError):
    """Degenerate or inconsistent mesh geometry."""


class FactorizationError(PoroblockError):
    """Incomplete Cholesky broke down even after diagonal shifting."""


class InnerSolverError(PoroblockError):
    """An inner (preconditioner block) solve failed to converge."""


class PreconditionerError(PoroblockError):
    """A preconditioner application failed; wraps the inner failure."""


class SolverError(PoroblockError):
    """An outer Krylov solve aborted."""
