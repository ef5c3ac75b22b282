"""Exception types shared across the package."""


class KasnerLabError(Exception):
    """Base class for all package errors."""


class DomainError(KasnerLabError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigError(KasnerLabError, ValueError):
    """A configuration is malformed or inconsistent.

    ``violations`` collects every problem found, each prefixed with the
    offending key path.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvalidStateError(KasnerLabError, ValueError):
    """A field state violates its invariants (non-SPD metric, n <= 0, ...)."""


class LapseSolveError(KasnerLabError, RuntimeError):
    """The elliptic lapse solve failed.

    ``final_residual`` carries the last discrete residual when available;
    ``definiteness_lost`` is set when t^-2 + Sc changes sign somewhere,
    i.e. the run has left the perturbative regime.
    """

    def __init__(self, message, final_residual=None, definiteness_lost=False):
        super().__init__(message)
        self.final_residual = final_residual
        self.definiteness_lost = definiteness_lost
