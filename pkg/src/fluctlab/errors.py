"""Exception types shared across modules (mapped to CLI exit codes)."""

from __future__ import annotations

from .scenario.specs import ConfigError


class NumericalAbort(RuntimeError):
    """Non-finite values or blow-up; the CLI maps this to exit code 3."""


class StabilityError(NumericalAbort):
    """Explicit part of a splitting step went unstable."""


__all__ = ["ConfigError", "NumericalAbort", "StabilityError"]
