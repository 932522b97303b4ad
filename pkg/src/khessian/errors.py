"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class PreconditionError(ValueError):
    """A documented precondition of an operation does not hold."""


class IntegrityError(RuntimeError):
    """A computed object violates an invariant it must satisfy.

    Raised e.g. when a discrete Hessian measure has cells that are more
    negative than the declared tolerance, which signals a non k-convex input
    or a grid too coarse for the mollification radius.
    """
