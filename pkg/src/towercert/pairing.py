"""Bilinear pairings recorded as Gram matrices.

Finite pairings ``H_n x T_n -> Lambda_n`` are checked for perfectness;
pairings of free modules known modulo ``l^N`` are checked for
unimodularity and, when unimodular, split into explicit dual bases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import DomainError, NotUnimodularError, StructuralError
from .linalg import Matrix, copy, det_mod_prime, identity, mat_mod, matmul, snf_local, transpose
from .modules import (
    InvariantFactorModule,
    ModuleMap,
    Vector,
    dual_module,
    kernel_of_map,
)
from .ring import inv_mod, vp


@dataclass(frozen=True)
class FiniteGramPairing:
    """``gram[i][j] = e(u_i, v_j)`` for generators of ``left`` and ``right``."""

    level: int
    left: InvariantFactorModule
    right: InvariantFactorModule
    gram: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        p, q = self.left.prime, self.left.prime**self.level
        if self.right.prime != p:
            raise StructuralError("prime mismatch between left and right modules")
        if len(self.gram) != self.left.rank or any(len(r) != self.right.rank for r in self.gram):
            raise StructuralError(f"gram must be {self.left.rank}x{self.right.rank}")
        if self.left.exponents and self.left.exponents[0] > self.level or (
            self.right.exponents and self.right.exponents[0] > self.level
        ):
            raise StructuralError("module exponents exceed the pairing level")
        object.__setattr__(self, "gram", tuple(tuple(int(x) % q for x in r) for r in self.gram))
        bad = self.violation()
        if bad is not None:
            i, j, need = bad
            raise StructuralError(
                f"ill-defined pairing: gram[{i}][{j}] needs valuation >= {need}"
            )

    @property
    def prime(self) -> int:
        return self.left.prime

    def violation(self) -> tuple[int, int, int] | None:
        p, n = self.prime, self.level
        for i, a in enumerate(self.left.exponents):
            for j, b in enumerate(self.right.exponents):
                need = n - min(a, b)
                if need and vp(self.gram[i][j], p, need) < need:
                    return i, j, need
        return None

    def value(self, h: Sequence[int], t: Sequence[int]) -> int:
        q = self.prime**self.level
        return sum(
            hi * g * tj for hi, row in zip(h, self.gram) for g, tj in zip(row, t)
        ) % q

    def transposed(self) -> FiniteGramPairing:
        cols = tuple(tuple(r[j] for r in self.gram) for j in range(self.right.rank))
        return FiniteGramPairing(self.level, self.right, self.left, cols)

    def rows(self) -> Matrix:
        return [list(r) for r in self.gram]


def adjoint_left(p: FiniteGramPairing, j: int | None = None) -> ModuleMap:
    """``h -> e(h, .)`` in the dual coordinates of ``Hom(right, Lambda_j)``."""
    j = p.level if j is None else j
    if j < p.level:
        raise StructuralError(f"dual level {j} is below the pairing level {p.level}")
    dual, _ = dual_module(p.right, j)
    ell, n = p.prime, p.level
    rows = []
    for jj, b in enumerate(p.right.exponents):
        shift = ell ** (n - b)
        rows.append(tuple(p.gram[i][jj] // shift for i in range(p.left.rank)))
    return ModuleMap(p.left, dual.module, tuple(rows))


@dataclass
class PerfectnessCertificate:
    verdict: bool
    adjoint: ModuleMap
    kernel_exponents: tuple[int, ...]
    left_cardinality: int
    right_cardinality: int

    def replay(self) -> bool:
        kern = kernel_of_map(self.adjoint)
        same = kern.exponents == self.kernel_exponents
        return same and self.verdict == (
            not kern.exponents and self.left_cardinality == self.right_cardinality
        )


def is_perfect(p: FiniteGramPairing) -> PerfectnessCertificate:
    """Injective left adjoint plus equal orders; the finite modules make the
    right adjoint an isomorphism as well."""
    adj = adjoint_left(p)
    kern = kernel_of_map(adj)
    lc, rc = p.left.cardinality(), p.right.cardinality()
    return PerfectnessCertificate(
        not kern.exponents and lc == rc, adj, kern.exponents, lc, rc
    )


def find_unit_functional(m: InvariantFactorModule, x: Sequence[int]) -> Vector:
    """A homomorphism ``phi: M -> Lambda_n`` with ``phi(x) = 1``.

    Returned as the values ``phi(g_i)``.  Exists iff ``l^(n-1) x != 0``.
    """
    n, ell = m.level, m.prime
    x = m.canonical(x)
    for i, (xi, e) in enumerate(zip(x, m.exponents)):
        if e == n and xi % ell:
            phi = [0] * m.rank
            phi[i] = inv_mod(xi, ell, n)
            return phi
    raise DomainError(f"l^{n - 1} * x = 0, so no functional sends x to 1")


# --------------------------------------------------------------------------
# free pairings


@dataclass(frozen=True)
class FreeGramPairing:
    """``beta: Lambda^r x Lambda^s -> Lambda`` known modulo ``l^precision``."""

    prime: int
    precision: int
    gram: tuple[tuple[int, ...], ...]
    left_rank: int = -1
    right_rank: int = -1

    def __post_init__(self):
        q = self.prime**self.precision
        g = tuple(tuple(int(x) % q for x in r) for r in self.gram)
        object.__setattr__(self, "gram", g)
        if self.left_rank < 0:
            object.__setattr__(self, "left_rank", len(g))
        if self.right_rank < 0:
            object.__setattr__(self, "right_rank", len(g[0]) if g else 0)
        if len(g) != self.left_rank or any(len(r) != self.right_rank for r in g):
            raise StructuralError("gram shape does not match the ranks")

    def rows(self) -> Matrix:
        return [list(r) for r in self.gram]


@dataclass
class UnimodularityCertificate:
    """Attests ``P @ G @ Q^T == I (mod l^N)`` with P, Q invertible mod l."""

    prime: int
    precision: int
    gram: Matrix
    P: Matrix
    Q: Matrix

    def check(self) -> list[str]:
        """Failed conditions; empty when the certificate holds."""
        p, N = self.prime, self.precision
        q = p**N
        r = len(self.gram)
        problems = []
        if any(len(row) != r for row in self.gram + self.P + self.Q) or len(self.P) != r or len(self.Q) != r:
            return ["certificate matrices are not square of a common size"]
        if det_mod_prime(self.P, p) == 0:
            problems.append("det(P) is not a unit mod l")
        if det_mod_prime(self.Q, p) == 0:
            problems.append("det(Q) is not a unit mod l")
        prod = matmul(matmul(self.P, self.gram, mod=q, inner=r, cols=r), transpose(self.Q, r), mod=q, inner=r, cols=r)
        for i in range(r):
            for j in range(r):
                if prod[i][j] != int(i == j):
                    problems.append(f"(P G Q^T)[{i}][{j}] = {prod[i][j]} != {int(i == j)} mod l^{N}")
                    return problems
        return problems

    def replay(self) -> bool:
        return not self.check()


@dataclass
class UnimodularityResult:
    unimodular: bool
    divisor_valuations: list[tuple[int, bool]]
    reason: str = ""
    certificate: UnimodularityCertificate | None = None

    @property
    def determinant_valuation(self) -> tuple[int, bool]:
        v = sum(d for d, _ in self.divisor_valuations)
        return v, all(e for _, e in self.divisor_valuations)


def elementary_divisor_valuations(p: FreeGramPairing) -> list[tuple[int, bool]]:
    s = snf_local(p.rows(), p.prime, p.precision, cols=p.right_rank, track=False)
    return [(e, e < p.precision) for e in s.exponents]


def check_unimodular_free(p: FreeGramPairing) -> UnimodularityResult:
    vals = elementary_divisor_valuations(p)
    if p.left_rank != p.right_rank:
        return UnimodularityResult(
            False, vals, f"rank mismatch: {p.left_rank} vs {p.right_rank}"
        )
    if any(v for v, _ in vals):
        return UnimodularityResult(False, vals, "elementary divisor of positive valuation")
    return UnimodularityResult(True, vals, "", extract_dual_bases(p))


def extract_dual_bases(p: FreeGramPairing) -> UnimodularityCertificate:
    """Dual bases by the orthogonal-splitting induction.

    Repeatedly take the first unit entry ``beta(u0, v0)`` of the remaining
    block, normalize it to 1 and clear its row and column; what is left is
    the pairing on the two orthogonal complements.
    """
    ell, N = p.prime, p.precision
    q = ell**N
    r = p.left_rank
    if r != p.right_rank:
        raise NotUnimodularError(f"rank mismatch: {p.left_rank} vs {p.right_rank}")
    G = copy(p.rows())
    P, Q = identity(r), identity(r)
    for k in range(r):
        hit = next(((i, j) for i in range(k, r) for j in range(k, r) if G[i][j] % ell), None)
        if hit is None:
            raise NotUnimodularError(f"no unit pairing value left in the {r - k}x{r - k} block")
        i, j = hit
        G[k], G[i] = G[i], G[k]
        P[k], P[i] = P[i], P[k]
        for row in G:
            row[k], row[j] = row[j], row[k]
        Q[k], Q[j] = Q[j], Q[k]
        u = inv_mod(G[k][k], ell, N)
        G[k] = [x * u % q for x in G[k]]
        P[k] = [x * u % q for x in P[k]]
        for i2 in range(r):
            c = G[i2][k]
            if i2 != k and c:
                G[i2] = [(x - c * y) % q for x, y in zip(G[i2], G[k])]
                P[i2] = [(x - c * y) % q for x, y in zip(P[i2], P[k])]
        for j2 in range(r):
            c = G[k][j2]
            if j2 != k and c:
                for row in G:
                    row[j2] = (row[j2] - c * row[k]) % q
                Q[j2] = [(x - c * y) % q for x, y in zip(Q[j2], Q[k])]
    return UnimodularityCertificate(ell, N, mat_mod(p.rows(), q), P, Q)
