"""Numerical toolkit for k-Hessian operators and their measures."""

from .errors import DomainError, IntegrityError, PreconditionError

__version__ = "0.1.0"

__all__ = ["DomainError", "IntegrityError", "PreconditionError", "__version__"]
