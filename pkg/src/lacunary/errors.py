"""Exception types raised by the toolkit."""


class LacunaryError(Exception):
    pass


class DomainError(LacunaryError, ValueError):
    """Input outside an operation's domain (bad lattice, negative argument, ...)."""


class ResolutionError(LacunaryError, ValueError):
    """A circle or cap is too small to resolve at the given grain."""


class DomainOverflowError(LacunaryError, ValueError):
    """A convolution or Minkowski sum would leave the lattice."""


class ConfigError(LacunaryError, ValueError):
    pass


class InconsistencyError(LacunaryError, RuntimeError):
    """An internal invariant failed (e.g. zero length carrying nonzero mass)."""
