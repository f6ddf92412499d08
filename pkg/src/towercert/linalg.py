"""Dense integer matrices and Smith normal form.

Matrices are lists of row lists of Python ints.  Two SNF flavours share
one bookkeeping scheme: while the working matrix ``A`` is reduced we keep
``U``, ``U^-1``, ``V``, ``V^-1`` such that ``A_orig = U @ A @ V`` at every
step (exactly over Z, modulo ``p^n`` over the local ring).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import StructuralError
from .ring import inv_mod, vp

Matrix = list[list[int]]


def zeros(r: int, c: int) -> Matrix:
    return [[0] * c for _ in range(r)]


def identity(k: int) -> Matrix:
    m = zeros(k, k)
    for i in range(k):
        m[i][i] = 1
    return m


def shape(a: Matrix, cols: int | None = None) -> tuple[int, int]:
    """Shape of ``a``; ``cols`` disambiguates matrices with zero rows."""
    if not a:
        return 0, (cols or 0)
    return len(a), len(a[0])


def matmul(a: Matrix, b: Matrix, mod: int | None = None, inner: int | None = None,
           cols: int | None = None) -> Matrix:
    ra = len(a)
    k = len(a[0]) if a else (inner or 0)
    cb = len(b[0]) if b else (cols or 0)
    if b and len(b) != k:
        raise StructuralError(f"cannot multiply {ra}x{k} by {len(b)}x{cb}")
    bt = list(zip(*b)) if b else [()] * cb
    out = []
    for row in a:
        if mod is None:
            out.append([sum(x * y for x, y in zip(row, col)) for col in bt])
        else:
            out.append([sum(x * y for x, y in zip(row, col)) % mod for col in bt])
    return out


def transpose(a: Matrix, cols: int = 0) -> Matrix:
    if not a:
        return [[] for _ in range(cols)]
    return [list(r) for r in zip(*a)]


def mat_mod(a: Matrix, mod: int) -> Matrix:
    return [[x % mod for x in row] for row in a]


def copy(a: Matrix) -> Matrix:
    return [list(row) for row in a]


def det_integer(a: Matrix) -> int:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    n = len(a)
    if n == 0:
        return 1
    m = copy(a)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def det_mod_prime(a: Matrix, p: int) -> int:
    """Determinant over GF(p)."""
    n = len(a)
    m = mat_mod(a, p)
    det = 1
    for k in range(n):
        piv = next((i for i in range(k, n) if m[i][k]), None)
        if piv is None:
            return 0
        if piv != k:
            m[k], m[piv] = m[piv], m[k]
            det = -det
        det = det * m[k][k] % p
        inv = pow(m[k][k], -1, p)
        for i in range(k + 1, n):
            f = m[i][k] * inv % p
            if f:
                m[i] = [(x - f * y) % p for x, y in zip(m[i], m[k])]
    return det % p


@dataclass
class SNF:
    """Result of a Smith normal form computation.

    ``diag`` holds the diagonal of ``S``.  For the local flavour
    ``exponents[i]`` is the valuation of ``diag[i]`` (``n`` for zero) and
    ``diag[i] == p**exponents[i] % p**n``.
    """

    U: Matrix
    S: Matrix
    V: Matrix
    Uinv: Matrix
    Vinv: Matrix
    diag: list[int]
    rows: int
    cols: int
    exponents: list[int] = field(default_factory=list)


class _Reducer:
    def __init__(self, a: Matrix, rows: int, cols: int, mod: int | None, track: bool):
        self.A = copy(a)
        self.r, self.c = rows, cols
        self.mod = mod
        self.track = track
        if track:
            self.U, self.Uinv = identity(rows), identity(rows)
            self.V, self.Vinv = identity(cols), identity(cols)

    def _m(self, x: int) -> int:
        return x % self.mod if self.mod is not None else x

    def swap_rows(self, i: int, j: int) -> None:
        if i == j:
            return
        A = self.A
        A[i], A[j] = A[j], A[i]
        if self.track:
            for row in self.U:
                row[i], row[j] = row[j], row[i]
            self.Uinv[i], self.Uinv[j] = self.Uinv[j], self.Uinv[i]

    def swap_cols(self, i: int, j: int) -> None:
        if i == j:
            return
        for row in self.A:
            row[i], row[j] = row[j], row[i]
        if self.track:
            self.V[i], self.V[j] = self.V[j], self.V[i]
            for row in self.Vinv:
                row[i], row[j] = row[j], row[i]

    def add_row(self, i: int, j: int, c: int) -> None:
        """row_i += c * row_j"""
        if c == 0:
            return
        m = self._m
        self.A[i] = [m(x + c * y) for x, y in zip(self.A[i], self.A[j])]
        if self.track:
            for row in self.U:
                row[j] = m(row[j] - c * row[i])
            self.Uinv[i] = [m(x + c * y) for x, y in zip(self.Uinv[i], self.Uinv[j])]

    def add_col(self, j: int, i: int, c: int) -> None:
        """col_j += c * col_i"""
        if c == 0:
            return
        m = self._m
        for row in self.A:
            row[j] = m(row[j] + c * row[i])
        if self.track:
            self.V[i] = [m(x - c * y) for x, y in zip(self.V[i], self.V[j])]
            for row in self.Vinv:
                row[j] = m(row[j] + c * row[i])

    def scale_row(self, i: int, u: int, u_inv: int) -> None:
        m = self._m
        self.A[i] = [m(x * u) for x in self.A[i]]
        if self.track:
            for row in self.U:
                row[i] = m(row[i] * u_inv)
            self.Uinv[i] = [m(x * u) for x in self.Uinv[i]]

    def result(self, diag: list[int], exponents: list[int] | None = None) -> SNF:
        S = zeros(self.r, self.c)
        for i, d in enumerate(diag):
            S[i][i] = d
        if self.track:
            U, V, Ui, Vi = self.U, self.V, self.Uinv, self.Vinv
        else:
            U = V = Ui = Vi = []
        return SNF(U, S, V, Ui, Vi, diag, self.r, self.c, exponents or [])


def snf_integer(a: Matrix, cols: int | None = None, track: bool = True) -> SNF:
    """Smith normal form over Z with ``a == U @ S @ V``, ``det U, det V = +-1``.

    Pivot: smallest nonzero absolute value, topmost then leftmost.
    """
    r, c = shape(a, cols)
    red = _Reducer(a, r, c, None, track)
    A = red.A
    diag = []
    for t in range(min(r, c)):
        best = None
        for i in range(t, r):
            row = A[i]
            for j in range(t, c):
                x = row[j]
                if x and (best is None or abs(x) < best[0]):
                    best = (abs(x), i, j)
        if best is None:
            break
        red.swap_rows(t, best[1])
        red.swap_cols(t, best[2])
        while True:
            p = A[t][t]
            for i in range(t + 1, r):
                if A[i][t]:
                    red.add_row(i, t, -(A[i][t] // p))
            rest = [i for i in range(t + 1, r) if A[i][t]]
            if rest:
                i = min(rest, key=lambda k: (abs(A[k][t]), k))
                if abs(A[i][t]) < abs(p):
                    red.swap_rows(t, i)
                continue
            for j in range(t + 1, c):
                if A[t][j]:
                    red.add_col(j, t, -(A[t][j] // p))
            rest = [j for j in range(t + 1, c) if A[t][j]]
            if rest:
                j = min(rest, key=lambda k: (abs(A[t][k]), k))
                if abs(A[t][j]) < abs(p):
                    red.swap_cols(t, j)
                continue
            bad = next(
                (i for i in range(t + 1, r) for j in range(t + 1, c) if A[i][j] % p),
                None,
            )
            if bad is None:
                break
            red.add_row(t, bad, 1)
        if A[t][t] < 0:
            red.scale_row(t, -1, -1)
        diag.append(A[t][t])
    diag.extend([0] * (min(r, c) - len(diag)))
    return red.result(diag)


def snf_local(a: Matrix, p: int, n: int, cols: int | None = None, track: bool = True) -> SNF:
    """Smith normal form over Z/p^n with ``a == U @ S @ V (mod p^n)``.

    Pivot: minimal p-valuation, topmost then leftmost.  Unit cofactors are
    absorbed into U so every diagonal entry is exactly ``p^e`` (zero when
    ``e == n``).  Divisibility of the diagonal is automatic.
    """
    q = p**n
    r, c = shape(a, cols)
    red = _Reducer(mat_mod(a, q), r, c, q, track)
    A = red.A
    diag, exps = [], []
    for t in range(min(r, c)):
        best = None
        for i in range(t, r):
            row = A[i]
            for j in range(t, c):
                x = row[j]
                if x:
                    v = vp(x, p, n)
                    if best is None or v < best[0]:
                        best = (v, i, j)
                        if v == 0:
                            break
            if best is not None and best[0] == 0:
                break
        if best is None:
            break
        e, i0, j0 = best
        red.swap_rows(t, i0)
        red.swap_cols(t, j0)
        pe = p**e
        u = A[t][t] // pe
        red.scale_row(t, pow(u, -1, q), u)
        for i in range(t + 1, r):
            if A[i][t]:
                red.add_row(i, t, -(A[i][t] // pe))
        for j in range(t + 1, c):
            if A[t][j]:
                red.add_col(j, t, -(A[t][j] // pe))
        diag.append(pe % q)
        exps.append(e)
    k = min(r, c)
    diag.extend([0] * (k - len(diag)))
    exps.extend([n] * (k - len(exps)))
    return red.result(diag, exps)


def unit_inverse_mod(x: int, p: int, n: int) -> int:
    return inv_mod(x, p, n)
