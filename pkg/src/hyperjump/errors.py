"""Exception hierarchy shared by all modules.

The harness maps these onto process exit codes: ``ConfigError`` gives 2,
every ``ContractError`` subclass gives 3.
"""


class HyperJumpError(Exception):
    """Base class for package errors."""


class InputError(HyperJumpError, ValueError):
    """Malformed arguments (wrong shapes, inconsistent parameters)."""


class ConfigError(HyperJumpError):
    """Invalid experiment configuration."""


class ContractError(HyperJumpError):
    """A numerical precondition or postcondition did not hold."""


class NotHyperbolicError(ContractError):
    def __init__(self, xi, detail=""):
        self.xi = xi
        super().__init__(f"not hyperbolic at xi={list(map(float, xi))} {detail}".strip())


class NotDiagonalizableError(ContractError):
    def __init__(self, xi, cond):
        self.xi = xi
        self.cond = cond
        super().__init__(
            f"not strongly diagonalizable at xi={list(map(float, xi))} "
            f"(eigenvector condition number {cond:.3g})"
        )


class NotCharacteristicError(ContractError):
    """The hyperplane x1 = 0 is not characteristic (A1 invertible)."""


class SheetError(ContractError):
    def __init__(self, xi, detail=""):
        self.xi = xi
        super().__init__(
            "smooth variety hypothesis fails on requested cone at "
            f"xi={list(map(float, xi))} {detail}".strip()
        )


class DomainError(ContractError):
    def __init__(self, message, required=None):
        self.required = required
        super().__init__(message)


class ResolutionError(ContractError):
    """Grid too coarse for the requested derivatives."""


class AccuracyError(ContractError):
    def __init__(self, message, achieved):
        self.achieved = achieved
        super().__init__(f"{message} (achieved error bound {achieved:.3g})")


class StationaryRayError(ContractError):
    def __init__(self, xi, gradient):
        self.xi = xi
        super().__init__(
            f"ray is stationary near xi={list(map(float, xi))} "
            f"(|grad psi| = {gradient:.3g})"
        )
