"""Exception hierarchy shared by every layer of the package."""


class TowerCertError(Exception):
    """Base class for all errors raised by towercert."""


class StructuralError(TowerCertError, ValueError):
    """Mismatched shapes, levels or primes; ill-defined maps or pairings."""


class DomainError(TowerCertError, ArithmeticError):
    """A mathematical precondition does not hold (non-unit, divisible element, ...)."""


class NotUnimodularError(DomainError):
    """A Gram matrix has no unit entry where the dual-basis induction needs one."""


class PrecisionError(TowerCertError, ArithmeticError):
    """Not enough precision is left to answer honestly."""


class InconclusiveError(TowerCertError):
    """Stabilization could not be certified within the available horizon."""
