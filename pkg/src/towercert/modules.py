"""Finite modules over Z/l^n in invariant-factor form.

A module ``M = (+)_i Lambda_{e_i}`` is stored as its exponent list; an
element is a coordinate vector with ``x_i`` read modulo ``l^{e_i}``.  Every
structural computation (kernels, images, cokernels, submodule bases) goes
through :func:`~towercert.linalg.snf_local` on a lifted matrix.

Presentation convention: rows are generators, columns are relations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .errors import DomainError, StructuralError
from .linalg import Matrix, matmul, snf_local, snf_integer, transpose
from .ring import RingContext, cyclic_dual_embed, vp

Vector = list[int]


@dataclass(frozen=True)
class InvariantFactorModule:
    prime: int
    level: int
    exponents: tuple[int, ...] = ()

    def __post_init__(self):
        RingContext(self.prime)
        exps = tuple(int(e) for e in self.exponents)
        object.__setattr__(self, "exponents", exps)
        if self.level < 1:
            raise StructuralError(f"level must be positive, got {self.level}")
        if any(not 1 <= e <= self.level for e in exps):
            raise StructuralError(f"exponents {exps} must lie in [1, {self.level}]")
        if any(a < b for a, b in zip(exps, exps[1:])):
            raise StructuralError(f"exponents {exps} must be nonincreasing")

    @property
    def rank(self) -> int:
        """Number of cyclic summands."""
        return len(self.exponents)

    @property
    def orders(self) -> list[int]:
        return [self.prime**e for e in self.exponents]

    def cardinality(self) -> int:
        return self.prime ** sum(self.exponents)

    def canonical(self, x: Sequence[int]) -> Vector:
        if len(x) != self.rank:
            raise StructuralError(f"element has {len(x)} coordinates, module has {self.rank}")
        return [xi % o for xi, o in zip(x, self.orders)]

    def is_zero(self, x: Sequence[int]) -> bool:
        return not any(self.canonical(x))

    def scale(self, c: int, x: Sequence[int]) -> Vector:
        return self.canonical([c * xi for xi in x])

    def elements(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(o) for o in self.orders))

    def at_level(self, n: int) -> InvariantFactorModule:
        return InvariantFactorModule(self.prime, n, self.exponents)


def cardinality(m: InvariantFactorModule) -> int:
    return m.cardinality()


@dataclass(frozen=True)
class ModuleMap:
    """Homomorphism given by the codomain coordinates of generator images."""

    domain: InvariantFactorModule
    codomain: InvariantFactorModule
    matrix: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.domain.prime != self.codomain.prime:
            raise StructuralError("prime mismatch between domain and codomain")
        rows = tuple(
            tuple(int(x) % o for x in row)
            for row, o in zip(self.matrix, self.codomain.orders)
        )
        if len(self.matrix) != self.codomain.rank or any(
            len(r) != self.domain.rank for r in self.matrix
        ):
            raise StructuralError(
                f"map matrix must be {self.codomain.rank}x{self.domain.rank}"
            )
        object.__setattr__(self, "matrix", rows)
        bad = self.violation()
        if bad is not None:
            i, j, need = bad
            raise StructuralError(
                f"ill-defined map: entry ({i},{j}) = {rows[i][j]} needs valuation >= {need}"
            )

    def violation(self) -> tuple[int, int, int] | None:
        p = self.domain.prime
        for i, f in enumerate(self.codomain.exponents):
            for j, e in enumerate(self.domain.exponents):
                need = max(0, f - e)
                if need and vp(self.matrix[i][j], p, need) < need:
                    return i, j, need
        return None

    @property
    def work_level(self) -> int:
        return max(self.domain.level, self.codomain.level)

    def __call__(self, x: Sequence[int]) -> Vector:
        x = self.domain.canonical(x)
        return self.codomain.canonical(
            [sum(a * b for a, b in zip(row, x)) for row in self.matrix]
        )

    def rows(self) -> Matrix:
        return [list(r) for r in self.matrix]


def compose(g: ModuleMap, f: ModuleMap) -> ModuleMap:
    """``g o f``."""
    if f.codomain.exponents != g.domain.exponents:
        raise StructuralError("cannot compose: codomain/domain mismatch")
    prod = matmul(g.rows(), f.rows(), inner=f.codomain.rank, cols=f.domain.rank)
    if not prod:
        prod = []
    return ModuleMap(f.domain, g.codomain, tuple(tuple(r) for r in prod))


def identity_map(m: InvariantFactorModule) -> ModuleMap:
    return ModuleMap(m, m, tuple(tuple(int(i == j) for j in range(m.rank)) for i in range(m.rank)))


# --------------------------------------------------------------------------
# submodules


@dataclass
class Submodule:
    """A submodule of ``ambient`` with an adapted (normal-form) basis.

    ``generators[i]`` has order ``l^exponents[i]`` and the submodule is the
    internal direct sum of the cyclic modules they generate.  When built by
    :func:`submodule`, ``preimages[i]`` gives coefficients over the input
    generating set that combine to ``generators[i]``.
    """

    ambient: InvariantFactorModule
    exponents: tuple[int, ...]
    generators: list[Vector]
    preimages: list[Vector] = field(default_factory=list)
    _uinv: Matrix = field(repr=False, default_factory=list)
    _sigmas: list[int] = field(repr=False, default_factory=list)
    _keep: list[int] = field(repr=False, default_factory=list)
    _n: int = 0

    @property
    def module(self) -> InvariantFactorModule:
        return InvariantFactorModule(self.ambient.prime, self.ambient.level, self.exponents)

    def cardinality(self) -> int:
        return self.ambient.prime ** sum(self.exponents)

    def _scaled(self, x: Sequence[int]) -> Vector:
        p, n = self.ambient.prime, self._n
        return [xi * p ** (n - e) for xi, e in zip(self.ambient.canonical(x), self.ambient.exponents)]

    def coordinates(self, x: Sequence[int]) -> Vector:
        """Coordinates of ``x`` in the adapted basis; DomainError if x is outside."""
        p, n = self.ambient.prime, self._n
        q = p**n
        y = self._scaled(x)
        u = [sum(a * b for a, b in zip(row, y)) % q for row in self._uinv]
        coords = []
        kept = set(self._keep)
        for i, ui in enumerate(u):
            if i in kept:
                s = self._sigmas[i]
                if ui % p**s:
                    raise DomainError("element is not in the submodule")
                coords.append((ui // p**s) % p ** (n - s))
            elif ui:
                raise DomainError("element is not in the submodule")
        return coords

    def contains(self, x: Sequence[int]) -> bool:
        try:
            self.coordinates(x)
        except DomainError:
            return False
        return True

    def element(self, coords: Sequence[int]) -> Vector:
        out = [0] * self.ambient.rank
        for c, g in zip(coords, self.generators):
            out = [a + c * b for a, b in zip(out, g)]
        return self.ambient.canonical(out)


def submodule(ambient: InvariantFactorModule, gens: Sequence[Sequence[int]]) -> Submodule:
    """Adapted basis of the submodule generated by ``gens``.

    ``ambient`` embeds in ``Lambda_n^k`` by scaling coordinate i with
    ``l^(n - e_i)``; the column span is then diagonalized by snf_local.
    """
    p = ambient.prime
    n = max(ambient.exponents, default=1)
    q = p**n
    k = ambient.rank
    scales = [p ** (n - e) for e in ambient.exponents]
    cols = [ambient.canonical(g) for g in gens]
    a = [[cols[c][j] * scales[j] % q for c in range(len(cols))] for j in range(k)]
    s = snf_local(a, p, n, cols=len(cols))
    d = min(k, len(cols))
    keep, exps, generators, pre = [], [], [], []
    for i in range(d):
        sigma = s.exponents[i]
        if sigma >= n:
            continue
        ps = p**sigma
        y = [s.U[j][i] * ps % q for j in range(k)]
        generators.append([(y[j] // scales[j]) % p ** ambient.exponents[j] for j in range(k)])
        exps.append(n - sigma)
        keep.append(i)
        pre.append([s.Vinv[c][i] for c in range(len(cols))])
    sigmas = list(s.exponents) + [n] * (k - d)
    return Submodule(ambient, tuple(exps), generators, pre, s.Uinv, sigmas, keep, n)


def kernel_generators(a: Matrix, p: int, n: int, cols: int) -> list[Vector]:
    """Generators of ``{z : a z = 0 mod p^n}`` inside ``(Z/p^n)^cols``."""
    q = p**n
    s = snf_local(a, p, n, cols=cols)
    d = min(s.rows, cols)
    gens = []
    for i in range(cols):
        if i < d:
            sigma = s.exponents[i]
            if sigma == 0:
                continue
            mult = p ** (n - sigma)
        else:
            mult = 1
        gens.append([s.Vinv[j][i] * mult % q for j in range(cols)])
    return gens


def kernel_of_map(f: ModuleMap) -> Submodule:
    p, n = f.domain.prime, f.work_level
    m, k = f.domain.rank, f.codomain.rank
    a = [list(f.matrix[i]) + [-(p**fe) if c == i else 0 for c in range(k)]
         for i, fe in enumerate(f.codomain.exponents)]
    gens = kernel_generators(a, p, n, m + k)
    return submodule(f.domain, [g[:m] for g in gens])


def image_of_map(f: ModuleMap) -> Submodule:
    cols = transpose(f.rows(), f.domain.rank)
    return submodule(f.codomain, cols)


def is_injective(f: ModuleMap) -> bool:
    return kernel_of_map(f).cardinality() == 1


# --------------------------------------------------------------------------
# cokernels


@dataclass
class Cokernel:
    """``(+) Lambda_{o_j} / relations`` in invariant-factor form.

    ``basis[i]`` expresses normal-form generator i in the original
    generators; :meth:`coordinates` maps original coordinates to normal ones.
    """

    module: InvariantFactorModule
    basis: list[Vector]
    _rows: Matrix = field(repr=False, default_factory=list)

    def coordinates(self, x: Sequence[int]) -> Vector:
        return self.module.canonical(
            [sum(a * b for a, b in zip(row, x)) for row in self._rows]
        )

    def lift(self, coords: Sequence[int]) -> Vector:
        out = [0] * (len(self.basis[0]) if self.basis else 0)
        for c, g in zip(coords, self.basis):
            out = [a + c * b for a, b in zip(out, g)]
        return out


def cokernel(orders: Sequence[int], relations: Matrix, p: int, n: int) -> Cokernel:
    """Cokernel of ``relations`` (g rows x c columns) on generators of order
    ``p^orders[j]`` (each at most n)."""
    g = len(orders)
    c = len(relations[0]) if relations and relations[0] else 0
    a = [list(relations[j][:c]) + [p**orders[j] if i == j else 0 for i in range(g)]
         for j in range(g)] if g else []
    s = snf_local(a, p, n, cols=c + g)
    items = [(s.exponents[i], i) for i in range(g) if s.exponents[i] > 0]
    items.sort(key=lambda t: -t[0])
    exps = tuple(e for e, _ in items)
    basis = [[s.U[j][i] for j in range(g)] for _, i in items]
    rows = [list(s.Uinv[i]) for _, i in items]
    return Cokernel(InvariantFactorModule(p, n, exps), basis, rows)


def decompose(presentation: Matrix, p: int, n: int, generators: int | None = None) -> Cokernel:
    """Invariant-factor form of ``Lambda_n^g / span(columns)``.

    The ambient relations ``l^n * g_i`` are implicit; unit invariant
    factors are dropped.
    """
    g = generators if generators is not None else len(presentation)
    rel = presentation if presentation else [[] for _ in range(g)]
    return cokernel([n] * g, rel, p, n)


def quotient(big: Submodule, small_gens: Sequence[Sequence[int]]) -> tuple[Cokernel, Submodule]:
    """``big / <small_gens>``, with ``small_gens`` in ambient coordinates.

    Returns the cokernel in coordinates of ``big``'s adapted basis together
    with ``big`` itself so callers can chain coordinate maps.
    """
    rel_cols = [big.coordinates(v) for v in small_gens]
    g = len(big.exponents)
    rel = [[col[i] for col in rel_cols] for i in range(g)]
    return cokernel(list(big.exponents), rel, big.ambient.prime, big._n), big


# --------------------------------------------------------------------------
# duals


@dataclass(frozen=True)
class DualModule:
    """``Hom(M, Lambda_j)`` with coordinates ``lambda_i`` meaning the
    functional ``g_i -> l^(j - e_i) * lambda_i``."""

    source: InvariantFactorModule
    target_level: int

    @property
    def module(self) -> InvariantFactorModule:
        return InvariantFactorModule(self.source.prime, self.source.level, self.source.exponents)

    def functional_values(self, coords: Sequence[int]) -> Vector:
        ctx = RingContext(self.source.prime)
        j = self.target_level
        return [
            cyclic_dual_embed(ctx, e, j, ctx.scalar(c, e)).residue
            for c, e in zip(coords, self.source.exponents)
        ]

    def coordinates_of(self, values: Sequence[int]) -> Vector:
        p, j = self.source.prime, self.target_level
        out = []
        for v, e in zip(values, self.source.exponents):
            v %= p**j
            shift = p ** (j - e)
            if v % shift:
                raise DomainError("values do not define a homomorphism")
            out.append(v // shift % p**e)
        return out


def dual_module(m: InvariantFactorModule, j: int) -> tuple[DualModule, ModuleMap]:
    """``Hom(M, Lambda_j)`` and the generator-wise isomorphism ``M -> M^*``."""
    if m.exponents and j < m.exponents[0]:
        raise StructuralError(f"target level {j} is below the exponent {m.exponents[0]} of M")
    dual = DualModule(m, j)
    return dual, identity_map(m) if m.rank else ModuleMap(m, m, ())


def dual_map(f: ModuleMap, j: int) -> ModuleMap:
    """``f^* : N^* -> M^*`` in dual coordinates."""
    p = f.domain.prime
    rows = []
    for k, e in enumerate(f.domain.exponents):
        # exact: v(F_ik) >= f_i - e_k by well-definedness of f
        rows.append(tuple(
            f.matrix[i][k] * p ** (j - fe) // p ** (j - e)
            for i, fe in enumerate(f.codomain.exponents)
        ))
    return ModuleMap(f.codomain, f.domain, tuple(rows))


def integer_invariant_factors(a: Matrix, cols: int | None = None) -> list[int]:
    return snf_integer(a, cols=cols, track=False).diag
