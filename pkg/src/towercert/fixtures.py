"""Towers with known ground truth.

Synthetic towers are assembled from blocks whose limits are known by
construction:

* a free block ``Lambda_n^r`` paired by a core matrix with unit determinant;
* for every torsion exponent ``c`` a pair of cyclic summands
  ``A = Lambda_{min(n,c)}`` and ``B = Lambda_{min(n,c)}``.  ``A`` maps down
  the tower by reduction and survives in the limit; ``B`` maps by reduction
  while ``n < c`` and by multiplication by ``l`` afterwards, so it dies in
  the limit.  ``H.A`` pairs with ``T.B`` and ``H.B`` with ``T.A`` through
  ``w * l^(n - min(n,c))``, which keeps every level perfect and the levels
  compatible;
* noise summands ``Lambda_1`` on levels ``1..m`` paired into
  ``l^(n-1) Lambda_n`` and sent to zero by every transition.

:func:`random_tower` hides the block structure behind random automorphisms
of every ``H_n`` and ``T_n``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any

from .errors import StructuralError
from .linalg import Matrix, det_mod_prime, identity, matmul, transpose
from .ring import RingContext
from .serialization import FORMAT, enc, enc_mat, enc_vec
from .tower import Level, Tower, validate_tower
from .modules import InvariantFactorModule

MAX_RETRIES = 20


@dataclass(frozen=True)
class SyntheticSpec:
    prime: int
    rank: int = 0
    torsion: tuple[int, ...] = ()
    core: tuple[tuple[int, ...], ...] = ()
    torsion_units: tuple[int, ...] = ()
    noise_horizon: int = 0
    horizon: int = 0
    noise_rank: int = 1
    seed: int = 0
    allow_degenerate: bool = False

    def __post_init__(self):
        p = self.prime
        RingContext(p)
        tors = tuple(sorted((int(c) for c in self.torsion), reverse=True))
        object.__setattr__(self, "torsion", tors)
        units = tuple(self.torsion_units) or (1,) * len(tors)
        object.__setattr__(self, "torsion_units", units)
        core = tuple(tuple(int(x) for x in r) for r in self.core)
        if not core and self.rank:
            core = tuple(tuple(int(i == j) for j in range(self.rank)) for i in range(self.rank))
        object.__setattr__(self, "core", core)
        if self.rank < 0 or self.noise_horizon < 0 or self.noise_rank < 0:
            raise StructuralError("rank, noise horizon and noise rank must be nonnegative")
        if any(c < 1 for c in tors):
            raise StructuralError("torsion exponents must be positive")
        if len(units) != len(tors) or any(w % p == 0 for w in units):
            raise StructuralError("need one unit per torsion exponent")
        if len(core) != self.rank or any(len(r) != self.rank for r in core):
            raise StructuralError(f"core must be {self.rank}x{self.rank}")
        if not self.allow_degenerate and self.rank and det_mod_prime([list(r) for r in core], p) == 0:
            raise StructuralError("core determinant is not a unit mod l")
        if self.horizon == 0:
            object.__setattr__(self, "horizon", recommended_horizon(tors, self.noise_horizon))
        low = self.noise_horizon + max(tors + (1,)) + 2
        if self.horizon < low:
            raise StructuralError(f"horizon {self.horizon} below the minimum {low}")


def recommended_horizon(torsion, noise_horizon: int, window: int = 2) -> int:
    """Smallest horizon at which the window test can see the whole limit.

    The level of reading must exceed both the noise horizon and every
    torsion exponent, and the dying ``B`` summands must vanish from the
    stable images up to that level.
    """
    c = max(tuple(torsion) + (0,))
    return max(noise_horizon + 4, noise_horizon + c + 1 + window, 2 * c + 1 + window)


@dataclass
class GroundTruth:
    kind: str
    prime: int
    rank: int
    torsion: tuple[int, ...]
    n0: int
    core: Matrix | None = None
    noise_horizon: int = 0
    extra: dict = field(default_factory=dict)
    # level -> (H change, T change); new coordinates = change @ old coordinates
    changes: dict[int, tuple[Matrix, Matrix]] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "format": FORMAT,
            "kind": self.kind,
            "prime": enc(self.prime),
            "rank": enc(self.rank),
            "torsion": enc_vec(self.torsion),
            "n0": enc(self.n0),
            "noise_horizon": enc(self.noise_horizon),
        }
        if self.core is not None:
            out["core"] = enc_mat(self.core)
        out.update(self.extra)
        return out


def _layout(spec: SyntheticSpec, n: int) -> list[tuple[str, int, int]]:
    """Logical summands at level ``n`` sorted by exponent (stable)."""
    items = [("F", i, n) for i in range(spec.rank)]
    for i, c in enumerate(spec.torsion):
        items.append(("A", i, min(n, c)))
    for i, c in enumerate(spec.torsion):
        items.append(("B", i, min(n, c)))
    if n <= spec.noise_horizon:
        items += [("N", j, 1) for j in range(spec.noise_rank)]
    return sorted(items, key=lambda it: -it[2])


def _pair_value(spec: SyntheticSpec, n: int, a: tuple, b: tuple) -> int:
    p = spec.prime
    (ka, ia, _), (kb, ib, _) = a, b
    if ka == "F" and kb == "F":
        return spec.core[ia][ib]
    if {ka, kb} == {"A", "B"} and ia == ib:
        c = spec.torsion[ia]
        return spec.torsion_units[ia] * p ** (n - min(n, c))
    if ka == kb == "N" and ia == ib:
        return p ** (n - 1)
    return 0


def _trans_value(spec: SyntheticSpec, n: int, dst: tuple, src: tuple) -> int:
    """Coefficient of the level ``n+1`` summand ``src`` in the image at level ``n``."""
    (kd, id_, _), (ks, is_, _) = dst, src
    if kd != ks or id_ != is_ or kd == "N":
        return 0
    if kd == "B" and n >= spec.torsion[id_]:
        return spec.prime
    return 1


def synthetic_tower(spec: SyntheticSpec, validate: bool = True) -> tuple[Tower, GroundTruth]:
    p, N = spec.prime, spec.horizon
    layouts = [_layout(spec, n) for n in range(1, N + 1)]
    levels = []
    for n in range(1, N + 1):
        lay = layouts[n - 1]
        exps = tuple(e for _, _, e in lay)
        H = InvariantFactorModule(p, n, exps)
        T = InvariantFactorModule(p, n, exps)
        gram = tuple(tuple(_pair_value(spec, n, a, b) for b in lay) for a in lay)
        tr = None
        if n < N:
            up = layouts[n]
            tr = tuple(tuple(_trans_value(spec, n, d, s) for s in up) for d in lay)
        levels.append(Level(n, H, T, gram, tr, tr))
    tower = Tower(p, tuple(levels))
    truth = GroundTruth(
        "synthetic", p, spec.rank, spec.torsion, spec.noise_horizon + 1,
        [list(r) for r in spec.core], spec.noise_horizon,
        {"horizon": enc(N), "seed": enc(spec.seed)},
    )
    if validate and not spec.allow_degenerate:
        rep = validate_tower(tower)
        if not rep.ok:
            raise StructuralError(f"synthetic construction failed validation: {rep.violations[0]}")
    return tower, truth


# --------------------------------------------------------------------------
# random conjugation


def random_automorphism(rng: random.Random, p: int, exps, steps: int | None = None) -> tuple[Matrix, Matrix]:
    """An automorphism of ``(+) Lambda_{e_i}`` and its inverse.

    Built from elementary moves that respect the orders of the summands:
    adding ``c * l^max(0, e_i - e_j)`` times coordinate j into coordinate i,
    and scaling a coordinate by a unit.
    """
    k = len(exps)
    A, Ainv = identity(k), identity(k)
    if k == 0:
        return A, Ainv
    steps = 3 * k if steps is None else steps
    for _ in range(steps):
        i, j = rng.randrange(k), rng.randrange(k)
        if i == j:
            q = p ** exps[i]
            u = rng.randrange(1, q)
            while u % p == 0:
                u = rng.randrange(1, q)
            A[i] = [x * u for x in A[i]]
            uinv = pow(u, -1, q)
            for row in Ainv:
                row[i] = row[i] * uinv
        else:
            c = rng.randrange(1, p ** exps[i] + 1) * p ** max(0, exps[i] - exps[j])
            # left-multiply by I + c E_ij; the inverse right-multiplies by I - c E_ij
            A[i] = [x + c * y for x, y in zip(A[i], A[j])]
            for row in Ainv:
                row[j] = row[j] - c * row[i]
    orders = [p**e for e in exps]
    A = [[x % o for x in row] for row, o in zip(A, orders)]
    Ainv = [[x % o for x in row] for row, o in zip(Ainv, orders)]
    return A, Ainv


def conjugate_tower(t: Tower, rng: random.Random) -> tuple[Tower, dict[int, tuple[Matrix, Matrix]]]:
    """Apply independent random automorphisms to every ``H_n`` and ``T_n``."""
    p, N = t.prime, t.horizon
    changes, inverses = {}, {}
    for n in range(1, N + 1):
        lev = t.level(n)
        gH, gHi = random_automorphism(rng, p, lev.H.exponents)
        gT, gTi = random_automorphism(rng, p, lev.T.exponents)
        changes[n], inverses[n] = (gH, gT), (gHi, gTi)
    levels = []
    for n in range(1, N + 1):
        lev = t.level(n)
        q = p**n
        hi, ti = inverses[n]
        rH, rT = lev.H.rank, lev.T.rank
        g = [list(r) for r in lev.gram]
        gram = matmul(matmul(transpose(hi, rH), g, mod=q, inner=rH, cols=rT), ti, mod=q, inner=rT, cols=rT)
        trans = {}
        for s, idx in (("H", 0), ("T", 1)):
            if n == N:
                trans[s] = None
                continue
            src_rank = t.module(s, n + 1).rank
            dst = lev.module(s)
            rho = [list(r) for r in lev.trans(s)]
            m = matmul(matmul(changes[n][idx], rho, inner=dst.rank, cols=src_rank),
                       inverses[n + 1][idx], inner=src_rank, cols=src_rank)
            trans[s] = tuple(tuple(x % o for x in row) for row, o in zip(m, dst.orders))
        levels.append(Level(n, lev.H, lev.T, tuple(map(tuple, gram)), trans["H"], trans["T"]))
    return Tower(p, tuple(levels)), changes


@dataclass(frozen=True)
class RandomBounds:
    primes: tuple[int, ...] = (2, 3, 5)
    max_rank: int = 4
    max_torsion_count: int = 2
    max_torsion_exponent: int = 3
    max_noise_horizon: int = 3
    max_noise_rank: int = 2
    min_rank: int = 0

    def __post_init__(self):
        if not self.primes or self.max_rank < self.min_rank or self.min_rank < 0:
            raise StructuralError("bounds must allow at least one tower")
        for p in self.primes:
            RingContext(p)


def _random_core(rng: random.Random, p: int, r: int) -> list[list[int]]:
    for _ in range(1000):
        m = [[rng.randrange(-p * p, p * p + 1) for _ in range(r)] for _ in range(r)]
        if det_mod_prime(m, p):
            return m
    raise StructuralError("could not draw a unimodular core")


def random_spec(seed: int, bounds: RandomBounds = RandomBounds()) -> SyntheticSpec:
    rng = random.Random(seed)
    p = rng.choice(bounds.primes)
    r = rng.randint(bounds.min_rank, bounds.max_rank)
    s = rng.randint(0, bounds.max_torsion_count) if bounds.max_torsion_exponent >= 1 else 0
    tors = tuple(rng.randint(1, bounds.max_torsion_exponent) for _ in range(s))
    units = tuple(rng.choice([u for u in range(1, p * p) if u % p]) for _ in range(s))
    m = rng.randint(0, bounds.max_noise_horizon)
    k = rng.randint(1, max(1, bounds.max_noise_rank)) if m else 1
    return SyntheticSpec(
        p, r, tors, tuple(map(tuple, _random_core(rng, p, r))), units, m,
        recommended_horizon(tors, m), k, seed,
    )


def random_tower(seed: int, bounds: RandomBounds = RandomBounds()) -> tuple[Tower, GroundTruth]:
    """Deterministic in ``(seed, bounds)``."""
    spec = random_spec(seed, bounds)
    base, truth = synthetic_tower(spec)
    rng = random.Random(f"conjugate-{seed}")
    for _ in range(MAX_RETRIES):
        tower, changes = conjugate_tower(base, rng)
        if validate_tower(tower).ok:
            truth.kind = "random"
            truth.changes = changes
            return tower, truth
    raise StructuralError(f"random_tower({seed}): no valid conjugation after {MAX_RETRIES} tries")


# --------------------------------------------------------------------------
# negative controls


def _replace_level(t: Tower, n: int, **kw) -> Tower:
    levels = list(t.levels)
    lev = levels[n - 1]
    levels[n - 1] = Level(
        n, lev.H, lev.T, kw.get("gram", lev.gram),
        kw.get("transH", lev.transH), kw.get("transT", lev.transT),
    )
    return Tower(t.prime, tuple(levels))


def break_perfectness(t: Tower, level: int, row: int = 0, col: int = 0) -> Tower:
    """Overwrite one Gram entry at ``level`` by ``l``."""
    g = [list(r) for r in t.level(level).gram]
    g[row][col] = t.prime
    return _replace_level(t, level, gram=tuple(map(tuple, g)))


def corrupt_transition(t: Tower, level: int, side: str = "H", row: int = 0, col: int = 0,
                       delta: int = 1) -> Tower:
    """Add ``delta`` to one entry of the transition out of ``level + 1``."""
    key = "trans" + side
    m = [list(r) for r in getattr(t.level(level), key)]
    m[row][col] += delta
    return _replace_level(t, level, **{key: tuple(map(tuple, m))})


def degenerate_core_tower(prime: int, core, noise_horizon: int = 0,
                          horizon: int | None = None) -> tuple[Tower, GroundTruth]:
    """A tower whose free block is paired by a matrix with ``v(det) >= 1``.

    Every level fails perfectness, and the limit Gram is the core itself.
    """
    spec = SyntheticSpec(
        prime, len(core), (), tuple(map(tuple, core)), (), noise_horizon,
        horizon or recommended_horizon((), noise_horizon), allow_degenerate=True,
    )
    return synthetic_tower(spec, validate=False)
