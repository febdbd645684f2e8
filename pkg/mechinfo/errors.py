from __future__ import annotations

from typing import Any, Dict, Optional


class MechInfoError(Exception):
    """Root of every error raised by mechinfo."""


# --- Configuration (exit code 2) ---
class ConfigError(MechInfoError):
    pass


class InvalidParameterError(ConfigError):
    pass


class GeometryError(ConfigError):
    pass


class HoleOutsideDomainError(GeometryError):
    pass


class LigamentTooThinError(GeometryError):
    pass


class DegenerateStressError(MechInfoError):
    """eta / theta_bar requested at zero equivalent stress."""


# --- Numerics (exit code 1) ---
class NumericalError(MechInfoError):
    pass


class ReturnMappingError(NumericalError):
    def __init__(self, message: str, n_failed: int = 0) -> None:
        super().__init__(message)
        self.n_failed = n_failed


class SolverDivergenceError(NumericalError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({detail})"


class LocusError(NumericalError):
    pass
