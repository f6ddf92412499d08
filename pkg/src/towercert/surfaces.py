"""Cohomology towers of closed oriented triangulated surfaces.

Level n carries ``H^i(S; Z/l^n)`` and ``H^(2-i)(S; Z/l^n)`` computed from
the ordered simplicial cochain complex, paired by the front/back-face cup
product evaluated on the fundamental class.  Transitions reduce
representatives from ``l^(n+1)`` to ``l^n``.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property

from .errors import StructuralError
from .linalg import Matrix, snf_integer
from .modules import Cokernel, InvariantFactorModule, ModuleMap, Submodule, kernel_of_map, quotient
from .ring import RingContext
from .serialization import enc, enc_vec
from .tower import Level, Tower
from .fixtures import GroundTruth

Triangle = tuple[int, int, int]


def _perm_sign(seq) -> int:
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
    return sign


def sphere() -> list[Triangle]:
    """Boundary of the tetrahedron."""
    return [tuple(f) for f in itertools.combinations(range(4), 3)]


def torus() -> list[Triangle]:
    """The seven-vertex torus."""
    tris = set()
    for i in range(7):
        tris.add(tuple(sorted((i, (i + 1) % 7, (i + 3) % 7))))
        tris.add(tuple(sorted((i, (i + 2) % 7, (i + 3) % 7))))
    return sorted(tris)


def connected_sum(a: list[Triangle], b: list[Triangle]) -> list[Triangle]:
    """Remove the last triangle of ``a`` and the first of ``b`` and glue
    along their boundaries."""
    cut_a = a[-1]
    cut_b = b[0]
    offset = max(max(f) for f in a) + 1
    glue = dict(zip(cut_b, cut_a))
    relabel = {}
    nxt = offset
    for v in sorted({v for f in b for v in f}):
        if v in glue:
            relabel[v] = glue[v]
        else:
            relabel[v] = nxt
            nxt += 1
    out = [f for f in a if f != cut_a]
    out += [tuple(sorted(relabel[v] for v in f)) for f in b if f != cut_b]
    return out


def genus_surface(g: int) -> list[Triangle]:
    if g < 0:
        raise StructuralError("genus must be nonnegative")
    if g == 0:
        return sphere()
    surf = torus()
    for _ in range(g - 1):
        surf = connected_sum(surf, torus())
    return surf


def builtin(name: str) -> list[Triangle]:
    if name == "sphere":
        return sphere()
    if name == "torus":
        return torus()
    if name.startswith("genus-"):
        try:
            g = int(name[len("genus-"):])
        except ValueError:
            raise StructuralError(f"unknown surface {name!r}") from None
        return genus_surface(g)
    raise StructuralError(f"unknown surface {name!r}; use sphere, torus or genus-<g>")


# --------------------------------------------------------------------------
# combinatorics


@dataclass
class Surface:
    """A validated, coherently oriented closed surface."""

    vertices: list[int]
    edges: list[tuple[int, int]]
    triangles: list[Triangle]
    orientation: list[int]

    @property
    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.triangles)

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    def cells(self, k: int) -> list[tuple[int, ...]]:
        return [(v,) for v in self.vertices] if k == 0 else (self.edges if k == 1 else self.triangles)

    @cached_property
    def coboundaries(self) -> tuple[Matrix, Matrix]:
        """Integer matrices of ``d0: C^0 -> C^1`` and ``d1: C^1 -> C^2``."""
        vidx = {v: i for i, v in enumerate(self.vertices)}
        eidx = {e: i for i, e in enumerate(self.edges)}
        d0 = [[0] * len(self.vertices) for _ in self.edges]
        for r, (a, b) in enumerate(self.edges):
            d0[r][vidx[b]] += 1
            d0[r][vidx[a]] -= 1
        d1 = [[0] * len(self.edges) for _ in self.triangles]
        for r, (a, b, c) in enumerate(self.triangles):
            d1[r][eidx[(b, c)]] += 1
            d1[r][eidx[(a, c)]] -= 1
            d1[r][eidx[(a, b)]] += 1
        return d0, d1


def make_surface(triangles) -> Surface:
    """Validate a closed combinatorial surface and orient it."""
    tris = sorted({tuple(sorted(f)) for f in triangles})
    if len(tris) != len(list(triangles)) or any(len(set(f)) != 3 for f in tris):
        raise StructuralError("triangles must be distinct 3-element vertex sets")
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for i, f in enumerate(tris):
        for e in itertools.combinations(f, 2):
            edge_faces.setdefault(e, []).append(i)
    bad = [e for e, fs in edge_faces.items() if len(fs) != 2]
    if bad:
        raise StructuralError(f"edge {bad[0]} lies in {len(edge_faces[bad[0]])} triangles, not 2")
    vertices = sorted({v for f in tris for v in f})
    for v in vertices:
        link = [tuple(x for x in f if x != v) for f in tris if v in f]
        adj: dict[int, list[int]] = {}
        for a, b in link:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        if any(len(n) != 2 for n in adj.values()):
            raise StructuralError(f"link of vertex {v} is not a cycle")
        seen, stack = set(), [link[0][0]]
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(adj[x])
        if len(seen) != len(adj):
            raise StructuralError(f"link of vertex {v} is not a single cycle")
    # orient: an oriented triangle is a cyclic order; neighbours must traverse
    # the shared edge in opposite directions
    oriented: dict[int, Triangle] = {0: tris[0]}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        a, b, c = oriented[i]
        for u, w in ((a, b), (b, c), (c, a)):
            (j,) = [x for x in edge_faces[tuple(sorted((u, w)))] if x != i]
            (z,) = [x for x in tris[j] if x not in (u, w)]
            want = (w, u, z)
            if j in oriented:
                if not _same_cycle(oriented[j], want):
                    raise StructuralError("surface is not orientable")
            else:
                oriented[j] = want
                queue.append(j)
    if len(oriented) != len(tris):
        raise StructuralError("surface is not connected")
    signs = [_perm_sign(oriented[i]) for i in range(len(tris))]
    return Surface(vertices, sorted(edge_faces), tris, signs)


def _same_cycle(x: Triangle, y: Triangle) -> bool:
    return y in (x, (x[1], x[2], x[0]), (x[2], x[0], x[1]))


# --------------------------------------------------------------------------
# cohomology over Z/l^n


@dataclass
class CohomologyGroup:
    degree: int
    level: int
    cocycles: Submodule
    classes: Cokernel

    @property
    def module(self) -> InvariantFactorModule:
        return self.classes.module

    def representative(self, i: int) -> list[int]:
        """A cocycle in class ``i`` of the normal-form basis."""
        return self.cocycles.element(self.classes.basis[i])

    def class_of(self, cocycle) -> list[int]:
        return self.classes.coordinates(self.cocycles.coordinates(cocycle))


def _coboundary_map(s: Surface, k: int, p: int, n: int) -> ModuleMap:
    src = len(s.cells(k))
    dst = len(s.cells(k + 1))
    mat = s.coboundaries[k] if k < 2 else []
    return ModuleMap(
        InvariantFactorModule(p, n, (n,) * src),
        InvariantFactorModule(p, n, (n,) * dst),
        tuple(tuple(r) for r in mat),
    )


def cohomology(s: Surface, k: int, p: int, n: int) -> CohomologyGroup:
    q = p**n
    c = len(s.cells(k))
    ambient = InvariantFactorModule(p, n, (n,) * c)
    if k < 2:
        Z = kernel_of_map(_coboundary_map(s, k, p, n))
    else:
        from .modules import submodule
        Z = submodule(ambient, [[int(i == j) for j in range(c)] for i in range(c)])
    if k > 0:
        prev = s.coboundaries[k - 1]
        B = [[prev[r][col] % q for r in range(c)] for col in range(len(s.cells(k - 1)))]
    else:
        B = []
    coker, _ = quotient(Z, B)
    return CohomologyGroup(k, n, Z, coker)


def cup_on_fundamental_class(s: Surface, i: int, alpha, beta, q: int) -> int:
    """``<alpha cup beta, [S]>`` for an i-cochain and a (2-i)-cochain."""
    eidx = {e: j for j, e in enumerate(s.edges)}
    vidx = {v: j for j, v in enumerate(s.vertices)}
    total = 0
    for t, ((a, b, c), eps) in enumerate(zip(s.triangles, s.orientation)):
        if i == 0:
            val = alpha[vidx[a]] * beta[t]
        elif i == 1:
            val = alpha[eidx[(a, b)]] * beta[eidx[(b, c)]]
        else:
            val = alpha[t] * beta[vidx[c]]
        total += eps * val
    return total % q


@dataclass(frozen=True)
class SurfaceSpec:
    surface: str = "torus"
    prime: int = 5
    degree: int = 1
    horizon: int = 4

    def __post_init__(self):
        RingContext(self.prime)
        if self.degree not in (0, 1, 2):
            raise StructuralError("degree must be 0, 1 or 2")
        if self.horizon < 1:
            raise StructuralError("horizon must be positive")


def surface_tower(spec: SurfaceSpec) -> tuple[Tower, GroundTruth]:
    s = make_surface(builtin(spec.surface))
    p, N, i = spec.prime, spec.horizon, spec.degree
    j = 2 - i
    groups = {n: (cohomology(s, i, p, n), cohomology(s, j, p, n)) for n in range(1, N + 1)}
    levels = []
    for n in range(1, N + 1):
        gH, gT = groups[n]
        q = p**n
        repH = [gH.representative(a) for a in range(gH.module.rank)]
        repT = [gT.representative(b) for b in range(gT.module.rank)]
        gram = tuple(tuple(cup_on_fundamental_class(s, i, x, y, q) for y in repT) for x in repH)
        trans = {"H": None, "T": None}
        if n < N:
            for side, (low, high) in (("H", (gH, groups[n + 1][0])), ("T", (gT, groups[n + 1][1]))):
                cols = []
                for a in range(high.module.rank):
                    rep = [x % q for x in high.representative(a)]
                    cols.append(low.class_of(rep))
                trans[side] = tuple(
                    tuple(cols[a][r] for a in range(len(cols))) for r in range(low.module.rank)
                )
        levels.append(Level(n, gH.module, gT.module, gram, trans["H"], trans["T"]))
    tower = Tower(p, tuple(levels))
    betti = betti_numbers(s)
    truth = GroundTruth(
        "surface", p, betti[i], (), 1, None, 0,
        {
            "surface": spec.surface,
            "degree": enc(i),
            "genus": enc(s.genus),
            "euler_characteristic": enc(s.euler_characteristic),
            "betti": enc_vec(betti),
            "horizon": enc(N),
        },
    )
    return tower, truth


# --------------------------------------------------------------------------
# integral oracle


def _integral_profile(s: Surface) -> list[list[int]]:
    """Nonzero invariant factors (absolute values) of ``d0`` and ``d1``."""
    out = []
    for k, m in enumerate(s.coboundaries):
        diag = snf_integer(m, cols=len(s.cells(k)), track=False).diag
        out.append([abs(d) for d in diag if d])
    return out


def betti_numbers(s: Surface) -> list[int]:
    prof = _integral_profile(s)
    ranks = [len(prof[0]), len(prof[1]), 0]
    cells = [len(s.cells(k)) for k in range(3)]
    return [cells[k] - ranks[k] - (ranks[k - 1] if k else 0) for k in range(3)]


def uct_order(s: Surface, k: int, q: int) -> int:
    """``|H^k(S; Z/q)|`` from the integer Smith forms of the coboundaries."""
    from math import gcd

    prof = _integral_profile(s) + [[]]
    ck = len(s.cells(k))
    kernel = q ** (ck - len(prof[k]))
    for d in prof[k]:
        kernel *= gcd(d, q)
    image = 1
    if k:
        for d in prof[k - 1]:
            image *= q // gcd(d, q)
    return kernel // image
