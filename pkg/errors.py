"""
Exception hierarchy shared by the simulator modules.

The CLI maps these classes onto exit codes, the same way an HTTP layer maps
service exceptions onto status codes.
"""
from typing import Optional


class CptSimError(Exception):
    """Base class for all simulator errors"""


class QuantumNumberError(CptSimError, ValueError):
    """Invalid (manifold, F, m_F) combination or sublevel index"""


class InvalidLambdaSystem(CptSimError, ValueError):
    """Ground pair shares no excited sublevel with nonzero couplings"""


class ConfigError(CptSimError):
    """Configuration could not be parsed or validated"""

    def __init__(self, message: str, line: Optional[int] = None,
                 column: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.column = column
        self.key = key
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})" if column is not None else f" (line {line})"
        super().__init__(f"{message}{location}")


class SolverError(CptSimError):
    """Singular or ill-conditioned Liouvillian, or a steady state violating its invariants"""

    def __init__(self, message: str, condition_estimate: Optional[float] = None):
        self.condition_estimate = condition_estimate
        if condition_estimate is not None:
            message = f"{message} (condition estimate {condition_estimate:.3e})"
        super().__init__(message)


class IntegrationError(SolverError):
    """Time integration failed or became unstable"""


class ScanError(SolverError):
    """A solver failure at one scan point"""

    def __init__(self, message: str, delta_r_hz: float):
        self.delta_r_hz = delta_r_hz
        super().__init__(f"{message} at Raman detuning {delta_r_hz:.6f} Hz")


class FitError(CptSimError):
    """Relaxation-ratio fit refused"""
