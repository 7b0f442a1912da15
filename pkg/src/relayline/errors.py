"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (bad node count, zero horizon, malformed config file)."""


class InfeasibleEnvironmentError(RuntimeError):
    """No horizon satisfies the workable-link rule in this radio environment."""


class InfeasibleConstraintsError(RuntimeError):
    """The requested (outage, relay-rate) target pair cannot be met by any policy."""


class SolverError(RuntimeError):
    """Internal solver failure; carries a residual report."""
