"""
Error types shared by every jonesexpand module.

Validation problems (bad input, malformed files, unknown knots) derive from
ValidationError; failures of a well-posed computation derive from
ComputationError. The CLI maps the two families to exit codes 1 and 2.
"""

from typing import Any, Dict, Optional


class JonesExpandError(Exception):
    """Base error with a machine-readable code and structured details."""

    code = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, "details": self.details}


class ValidationError(JonesExpandError, ValueError):
    code = "validation"


class ParseError(ValidationError):
    code = "parse"

    def __init__(self, message: str, line: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        if line is not None:
            details["line"] = line
            message = f"line {line}: {message}"
        super().__init__(message, details)
        self.line = line


class UnknownKnotError(ValidationError):
    code = "unknown-knot"


class OperatorRequiredError(ValidationError):
    code = "operator-required"


class SequenceTooShortError(ValidationError):
    code = "sequence-too-short"


class MismatchedRadicandError(ValidationError):
    code = "mismatched-radicand"


class ComputationError(JonesExpandError):
    code = "computation"


class DegenerateBranchError(ComputationError):
    code = "degenerate-branch"


class ResidualError(ComputationError):
    code = "residual"


class NonElementaryLogError(ComputationError):
    code = "non-elementary-log"


class PrecisionLossError(ComputationError):
    code = "precision-loss"


class IllConditionedFitError(ComputationError):
    code = "ill-conditioned-fit"


class UnsupportedBranchError(ComputationError):
    code = "unsupported-branch"


class NonPolynomialError(ComputationError):
    code = "non-polynomial"


class VanishingLeadingCoefficientError(ComputationError):
    code = "vanishing-leading-coefficient"
