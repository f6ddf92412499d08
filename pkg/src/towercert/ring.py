"""Arithmetic in the truncations Z/l^n of the l-adic integers.

Two kinds of scalars live here:

* :class:`TruncatedScalar` -- an element of ``Lambda_n = Z/l^n``.
* :class:`ApproxScalar` -- an l-adic integer known modulo ``l^N``.

Residues are plain Python ints, so there is no overflow at any precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import DomainError, PrecisionError, StructuralError


@lru_cache(maxsize=256)
def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def vp(x: int, p: int, cap: int) -> int:
    """Return ``min(v_p(x), cap)``; ``vp(0, p, cap) == cap``."""
    if x == 0:
        return cap
    v = 0
    while v < cap and x % p == 0:
        x //= p
        v += 1
    return v


def inv_mod(x: int, p: int, n: int) -> int:
    """Inverse of ``x`` modulo ``p**n``; raises DomainError on non-units."""
    q = p**n
    if x % p == 0:
        raise DomainError(f"{x % q} is not a unit at level {n}")
    return pow(x, -1, q)


@dataclass(frozen=True)
class RingContext:
    """Fixes the prime l; the uniformizer is always l itself."""

    prime: int

    def __post_init__(self):
        if not isinstance(self.prime, int) or not is_prime(self.prime):
            raise StructuralError(f"{self.prime!r} is not a prime")

    def modulus(self, n: int) -> int:
        return self.prime**n

    def scalar(self, residue: int, n: int) -> TruncatedScalar:
        return TruncatedScalar(self, n, residue)

    def approx(self, residue: int, precision: int) -> ApproxScalar:
        return ApproxScalar(self, precision, residue)


@dataclass(frozen=True)
class TruncatedScalar:
    context: RingContext
    level: int
    residue: int

    def __post_init__(self):
        if self.level < 1:
            raise StructuralError(f"level must be positive, got {self.level}")
        object.__setattr__(self, "residue", self.residue % self.context.prime**self.level)

    @property
    def modulus(self) -> int:
        return self.context.prime**self.level

    def _check(self, other: TruncatedScalar) -> None:
        if not isinstance(other, TruncatedScalar):
            raise StructuralError(f"cannot combine TruncatedScalar with {type(other).__name__}")
        if other.context.prime != self.context.prime:
            raise StructuralError(f"prime mismatch: {self.context.prime} vs {other.context.prime}")
        if other.level != self.level:
            raise StructuralError(f"level mismatch: {self.level} vs {other.level}")

    def __add__(self, other: TruncatedScalar) -> TruncatedScalar:
        self._check(other)
        return TruncatedScalar(self.context, self.level, self.residue + other.residue)

    def __sub__(self, other: TruncatedScalar) -> TruncatedScalar:
        self._check(other)
        return TruncatedScalar(self.context, self.level, self.residue - other.residue)

    def __mul__(self, other: TruncatedScalar) -> TruncatedScalar:
        self._check(other)
        return TruncatedScalar(self.context, self.level, self.residue * other.residue)

    def __neg__(self) -> TruncatedScalar:
        return TruncatedScalar(self.context, self.level, -self.residue)

    def valuation(self) -> tuple[int, bool]:
        """``(v, exact)``; zero reports ``(level, False)`` since v is only a floor."""
        return vp(self.residue, self.context.prime, self.level), self.residue != 0

    def is_unit(self) -> bool:
        return self.residue % self.context.prime != 0

    def inverse(self) -> TruncatedScalar:
        return TruncatedScalar(
            self.context, self.level, inv_mod(self.residue, self.context.prime, self.level)
        )

    def reduce(self, m: int) -> TruncatedScalar:
        if not 1 <= m <= self.level:
            raise StructuralError(f"cannot reduce level {self.level} to level {m}")
        return TruncatedScalar(self.context, m, self.residue)


def scalar_add(x: TruncatedScalar, y: TruncatedScalar) -> TruncatedScalar:
    return x + y


def scalar_mul(x: TruncatedScalar, y: TruncatedScalar) -> TruncatedScalar:
    return x * y


def scalar_neg(x: TruncatedScalar) -> TruncatedScalar:
    return -x


def valuation(x: TruncatedScalar) -> tuple[int, bool]:
    return x.valuation()


def invert_unit(x: TruncatedScalar) -> TruncatedScalar:
    return x.inverse()


def reduce_level(x: TruncatedScalar, m: int) -> TruncatedScalar:
    """Transition map Lambda_n -> Lambda_m of the projective system."""
    return x.reduce(m)


def cyclic_dual_embed(context: RingContext, n: int, j: int, lam: TruncatedScalar) -> TruncatedScalar:
    """Image of ``lam`` under Lambda_n ~= Hom(Lambda_n, Lambda_j).

    The homomorphism is multiplication by the returned scalar of Lambda_j,
    namely ``l^(j-n) * lift(lam)``; it kills ``l^n`` so it is well defined on
    Lambda_n.
    """
    if j < n:
        raise StructuralError(f"target level {j} is below source level {n}")
    if lam.level != n or lam.context.prime != context.prime:
        raise StructuralError("lambda must live at the source level")
    return TruncatedScalar(context, j, context.prime ** (j - n) * lam.residue)


@dataclass(frozen=True)
class ApproxScalar:
    """An element of Z_l known modulo ``l^precision``."""

    context: RingContext
    precision: int
    residue: int

    def __post_init__(self):
        if self.precision < 1:
            raise PrecisionError(f"precision must be positive, got {self.precision}")
        object.__setattr__(self, "residue", self.residue % self.context.prime**self.precision)

    def _join(self, other: ApproxScalar) -> int:
        if other.context.prime != self.context.prime:
            raise StructuralError("prime mismatch")
        return min(self.precision, other.precision)

    def __add__(self, other: ApproxScalar) -> ApproxScalar:
        return ApproxScalar(self.context, self._join(other), self.residue + other.residue)

    def __sub__(self, other: ApproxScalar) -> ApproxScalar:
        return ApproxScalar(self.context, self._join(other), self.residue - other.residue)

    def __mul__(self, other: ApproxScalar) -> ApproxScalar:
        return ApproxScalar(self.context, self._join(other), self.residue * other.residue)

    def __neg__(self) -> ApproxScalar:
        return ApproxScalar(self.context, self.precision, -self.residue)

    def valuation(self) -> tuple[int, bool]:
        return vp(self.residue, self.context.prime, self.precision), self.residue != 0

    def divide_exact(self, k: int) -> ApproxScalar:
        """Divide by ``l^k``; precision drops by k."""
        v, _ = self.valuation()
        if v < k:
            raise DomainError(f"valuation {v} < {k}: not divisible by l^{k}")
        if k >= self.precision:
            raise PrecisionError(f"dividing by l^{k} leaves no precision")
        return ApproxScalar(
            self.context, self.precision - k, self.residue // self.context.prime**k
        )
