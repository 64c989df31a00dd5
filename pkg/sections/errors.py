"""Exception types raised by the sections package.

Every exception carries a short machine-readable ``reason`` that the
orchestrator copies into its ``{"ok": False, ...}`` result dicts.
"""


class SectionError(Exception):
    reason = "section_error"

    def __init__(self, message: str, reason: str = None):
        super().__init__(message)
        if reason is not None:
            self.reason = reason


class PreconditionError(SectionError, ValueError):
    reason = "precondition"


class WeightError(SectionError, ValueError):
    reason = "invalid_weights"


class NonConvergenceError(SectionError):
    reason = "non_convergence"


class BracketError(SectionError):
    reason = "bracket_failure"


class ExtremalError(SectionError):
    reason = "extremal_failure"


class QuadratureError(SectionError):
    reason = "quadrature_failure"
