"""
Shared exception hierarchy for the coin certifier.

Every module raises from this family so the CLI can map failures onto its
exit-code contract without inspecting messages. Validation errors always name
the violated invariant in their message ("trace", "completeness", ...), which
is what `coincert.py validate` prints.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


# =============================================================================
# Base
# =============================================================================

class CertifierError(Exception):
    """Base exception for coin certifier operations."""
    pass


class DomainError(CertifierError, ValueError):
    """Raised when a parameter is outside its domain or dimensions disagree."""
    def __init__(self, parameter: str, reason: str):
        super().__init__(f"Invalid {parameter}: {reason}")
        self.parameter = parameter
        self.reason = reason


# =============================================================================
# Invariant violations
# =============================================================================

class ValidationError(CertifierError):
    """Raised when a value or file violates one of its invariants."""
    invariant = "invariant"

    def __init__(self, subject: str, detail: str):
        super().__init__(f"{subject} violates {self.invariant}: {detail}")
        self.subject = subject
        self.detail = detail


class HermiticityError(ValidationError):
    invariant = "Hermiticity"


class TraceError(ValidationError):
    invariant = "unit trace"


class PositivityError(ValidationError):
    invariant = "positivity"


class CompletenessError(ValidationError):
    invariant = "completeness (elements must sum to identity)"


class NormalizationError(ValidationError):
    invariant = "normalization"


class StochasticityError(ValidationError):
    invariant = "column sum (stochasticity)"


class BornRuleError(ValidationError):
    invariant = "Born-rule nonnegativity"


# =============================================================================
# Files and analysis
# =============================================================================

class FileFormatError(CertifierError):
    """Raised when an input file cannot be parsed into the expected structure."""
    def __init__(self, file_path: Union[str, Path], reason: str):
        name = Path(file_path).name if file_path else "<memory>"
        super().__init__(f"Malformed input in {name}: {reason}")
        self.file_path = Path(file_path) if file_path else None
        self.reason = reason


class AnalysisError(CertifierError):
    """Raised when data cannot support the requested analysis."""
    def __init__(self, reason: str, counts_total: Optional[int] = None):
        super().__init__(reason)
        self.reason = reason
        self.counts_total = counts_total
