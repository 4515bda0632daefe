"""Shared error types for numerical services."""
from __future__ import annotations


class NumericalError(Exception):
    """Raised when a numerical computation cannot produce a trustworthy value."""


class DomainError(NumericalError, ValueError):
    """Raised when a parameter lies outside its mathematical domain."""
