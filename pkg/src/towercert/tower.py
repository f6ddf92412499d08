"""Projective systems of perfect pairings and the limit-pairing pipeline.

A :class:`Tower` lists levels ``n = 1..N``; level n carries finite
``Lambda_n``-modules ``H_n``, ``T_n``, the Gram matrix of
``e_n: H_n x T_n -> Lambda_n`` and (below the horizon) the transition
matrices ``H_{n+1} -> H_n`` and ``T_{n+1} -> T_n``.

The limit is never formed.  Stable images ``im(H_N -> H_k)`` stand in for
``H / l^k H``; they are trusted from the first level downward as long as a
Mittag-Leffler window test passes, and the largest such level is where
rank, torsion and the limit Gram are read off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import InconclusiveError, PrecisionError, StructuralError
from .linalg import Matrix, matmul, transpose
from .modules import InvariantFactorModule, ModuleMap, Submodule, Vector, kernel_of_map, submodule
from .pairing import (
    FiniteGramPairing,
    FreeGramPairing,
    UnimodularityCertificate,
    UnimodularityResult,
    adjoint_left,
    check_unimodular_free,
    find_unit_functional,
    is_perfect,
)
from .ring import RingContext, vp
from .serialization import FORMAT, dec, dec_mat, dec_vec, digest, enc, enc_mat, enc_vec, require

SIDES = ("H", "T")
DEFAULT_WINDOW = 2


def _other(side: str) -> str:
    return "T" if side == "H" else "H"


def _check_side(side: str) -> None:
    if side not in SIDES:
        raise StructuralError(f"side must be 'H' or 'T', got {side!r}")


@dataclass(frozen=True)
class Level:
    n: int
    H: InvariantFactorModule
    T: InvariantFactorModule
    gram: tuple[tuple[int, ...], ...]
    transH: tuple[tuple[int, ...], ...] | None = None
    transT: tuple[tuple[int, ...], ...] | None = None

    def module(self, side: str) -> InvariantFactorModule:
        return self.H if side == "H" else self.T

    def trans(self, side: str):
        return self.transH if side == "H" else self.transT


def _tup(m) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(x) for x in r) for r in m)


@dataclass(frozen=True)
class Tower:
    prime: int
    levels: tuple[Level, ...]

    def __post_init__(self):
        RingContext(self.prime)
        p = self.prime
        if not self.levels:
            raise StructuralError("a tower needs at least one level")
        N = len(self.levels)
        fixed = []
        for idx, lev in enumerate(self.levels):
            n = idx + 1
            if lev.n != n:
                raise StructuralError(f"levels must be numbered 1..N; found {lev.n} at position {n}")
            for side in SIDES:
                m = lev.module(side)
                if m.prime != p or m.level != n:
                    raise StructuralError(f"level {n}: {side} must be a module over Z/{p}^{n}")
            if len(lev.gram) != lev.H.rank or any(len(r) != lev.T.rank for r in lev.gram):
                raise StructuralError(f"level {n}: gram must be {lev.H.rank}x{lev.T.rank}")
            q = p**n
            gram = tuple(tuple(int(x) % q for x in r) for r in lev.gram)
            trans = {}
            for side in SIDES:
                tr = lev.trans(side)
                if n == N:
                    trans[side] = None
                    continue
                if tr is None:
                    raise StructuralError(f"level {n}: missing trans{side}")
                dst = lev.module(side)
                src = self.levels[idx + 1].module(side)
                if len(tr) != dst.rank or any(len(r) != src.rank for r in tr):
                    raise StructuralError(
                        f"level {n}: trans{side} must be {dst.rank}x{src.rank}"
                    )
                trans[side] = tuple(
                    tuple(int(x) % o for x in r) for r, o in zip(tr, dst.orders)
                )
            fixed.append(Level(n, lev.H, lev.T, gram, trans["H"], trans["T"]))
        object.__setattr__(self, "levels", tuple(fixed))

    @property
    def horizon(self) -> int:
        return len(self.levels)

    def level(self, n: int) -> Level:
        if not 1 <= n <= self.horizon:
            raise StructuralError(f"level {n} outside [1, {self.horizon}]")
        return self.levels[n - 1]

    def module(self, side: str, n: int) -> InvariantFactorModule:
        return self.level(n).module(side)

    def pairing(self, n: int) -> FiniteGramPairing:
        lev = self.level(n)
        return FiniteGramPairing(n, lev.H, lev.T, lev.gram)

    def transition(self, side: str, n: int) -> ModuleMap:
        """The map from level ``n + 1`` down to level ``n``."""
        _check_side(side)
        lev = self.level(n)
        if n >= self.horizon:
            raise StructuralError(f"no transition out of the top level {n}")
        return ModuleMap(self.module(side, n + 1), lev.module(side), lev.trans(side))

    def truncate(self, N: int) -> Tower:
        if not 1 <= N <= self.horizon:
            raise StructuralError(f"cannot truncate a horizon-{self.horizon} tower to {N}")
        levels = list(self.levels[:N])
        top = levels[-1]
        levels[-1] = Level(top.n, top.H, top.T, top.gram)
        return Tower(self.prime, tuple(levels))

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        levels = []
        for lev in self.levels:
            entry = {
                "n": enc(lev.n),
                "H": {"exponents": enc_vec(lev.H.exponents)},
                "T": {"exponents": enc_vec(lev.T.exponents)},
                "gram": enc_mat(lev.gram),
            }
            if lev.transH is not None:
                entry["transH"] = enc_mat(lev.transH)
                entry["transT"] = enc_mat(lev.transT)
            levels.append(entry)
        return {
            "format": FORMAT,
            "prime": enc(self.prime),
            "horizon": enc(self.horizon),
            "levels": levels,
        }

    @classmethod
    def from_json(cls, obj: Any) -> Tower:
        if not isinstance(obj, dict):
            raise StructuralError("tower: expected a JSON object")
        if obj.get("format", FORMAT) != FORMAT:
            raise StructuralError(f"tower: unsupported format {obj.get('format')!r}")
        p = dec(require(obj, "prime", "tower"), "prime")
        N = dec(require(obj, "horizon", "tower"), "horizon")
        raw = require(obj, "levels", "tower")
        if not isinstance(raw, list) or len(raw) != N:
            raise StructuralError(f"tower: expected {N} levels")
        levels = []
        for i, lv in enumerate(raw):
            where = f"level[{i}]"
            n = dec(require(lv, "n", where), "n")
            mods = {}
            for side in SIDES:
                spec = require(lv, side, where)
                exps = dec_vec(require(spec, "exponents", f"{where}.{side}"), "exponents")
                mods[side] = InvariantFactorModule(p, n, tuple(exps))
            gram = dec_mat(require(lv, "gram", where), "gram")
            if mods["H"].rank and not gram:
                raise StructuralError(f"{where}: empty gram")
            if not mods["T"].rank:
                gram = [[] for _ in range(mods["H"].rank)]
            trans = {}
            for side in SIDES:
                key = "trans" + side
                if i < N - 1:
                    mat = dec_mat(require(lv, key, where), key)
                    if not mat and mods[side].rank:
                        raise StructuralError(f"{where}: empty {key}")
                    if not mat:
                        mat = []
                    trans[side] = _tup(mat)
                else:
                    trans[side] = None
            levels.append(Level(n, mods["H"], mods["T"], _tup(gram), trans["H"], trans["T"]))
        return cls(p, tuple(levels))

    def digest(self) -> str:
        return digest(self.to_json())


def make_tower(prime: int, levels: Sequence[dict]) -> Tower:
    """Build a tower from plain python data (exponent lists and matrices)."""
    out = []
    for i, lv in enumerate(levels):
        n = i + 1
        out.append(Level(
            n,
            InvariantFactorModule(prime, n, tuple(lv["H"])),
            InvariantFactorModule(prime, n, tuple(lv["T"])),
            _tup(lv["gram"]),
            _tup(lv["transH"]) if lv.get("transH") is not None else None,
            _tup(lv["transT"]) if lv.get("transT") is not None else None,
        ))
    return Tower(prime, tuple(out))


# --------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    level: int
    condition: str
    detail: str

    def to_json(self) -> dict:
        return {"level": enc(self.level), "condition": self.condition, "detail": self.detail}


@dataclass
class ValidationReport:
    horizon: int
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def levels(self, condition: str) -> list[int]:
        return [v.level for v in self.violations if v.condition == condition]

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


def validate_tower(t: Tower) -> ValidationReport:
    """Check maps, per-level perfectness and compatibility of the pairings."""
    rep = ValidationReport(t.horizon)
    p = t.prime
    N = t.horizon
    for n in range(1, N + 1):
        lev = t.level(n)
        try:
            pair = t.pairing(n)
        except StructuralError as exc:
            rep.violations.append(Violation(n, "pairing-well-defined", str(exc)))
            pair = None
        if pair is not None:
            cert = is_perfect(pair)
            if not cert.verdict:
                rep.violations.append(Violation(
                    n, "perfectness",
                    f"adjoint kernel exponents {list(cert.kernel_exponents)}, "
                    f"|H|={cert.left_cardinality}, |T|={cert.right_cardinality}",
                ))
        if n == N:
            continue
        maps_ok = True
        for side in SIDES:
            try:
                t.transition(side, n)
            except StructuralError as exc:
                rep.violations.append(Violation(n, "transition-" + side, str(exc)))
                maps_ok = False
        if not maps_ok:
            continue
        up = t.level(n + 1)
        q = p**n
        rH = [list(r) for r in lev.transH]
        rT = [list(r) for r in lev.transT]
        pulled = matmul(
            matmul(transpose(rH, up.H.rank), [list(r) for r in lev.gram], mod=q,
                   inner=lev.H.rank, cols=lev.T.rank),
            rT, mod=q, inner=lev.T.rank, cols=up.T.rank,
        )
        bad = next(
            ((i, j) for i in range(up.H.rank) for j in range(up.T.rank)
             if pulled[i][j] != up.gram[i][j] % q),
            None,
        )
        if bad is not None:
            i, j = bad
            rep.violations.append(Violation(
                n, "compatibility",
                f"e_{n}(rho h_{i}, rho t_{j}) = {pulled[i][j]} but e_{n + 1}(h_{i}, t_{j}) "
                f"= {up.gram[i][j]} (mod {p}^{n})",
            ))
    return rep


# --------------------------------------------------------------------------
# stable images


class _Images:
    """Memoized composite transitions and their images for one side."""

    def __init__(self, t: Tower, side: str):
        self.t, self.side = t, side
        self._comp: dict[tuple[int, int], Matrix] = {}
        self._img: dict[tuple[int, int], Submodule] = {}

    def composite(self, src: int, dst: int) -> Matrix:
        key = (src, dst)
        if key in self._comp:
            return self._comp[key]
        t, side = self.t, self.side
        if src == dst:
            k = t.module(side, dst).rank
            out = [[int(i == j) for j in range(k)] for i in range(k)]
        else:
            upper = self.composite(src, dst + 1)
            lev = t.level(dst)
            rho = [list(r) for r in lev.trans(side)]
            mid = t.module(side, dst + 1).rank
            cols = t.module(side, src).rank
            prod = matmul(rho, upper, inner=mid, cols=cols)
            out = [[x % o for x in row] for row, o in zip(prod, lev.module(side).orders)]
        self._comp[key] = out
        return out

    def image(self, src: int, dst: int) -> Submodule:
        key = (src, dst)
        if key not in self._img:
            mat = self.composite(src, dst)
            cols = transpose(mat, self.t.module(self.side, src).rank)
            self._img[key] = submodule(self.t.module(self.side, dst), cols)
        return self._img[key]

    def push(self, x: Sequence[int], src: int, dst: int) -> Vector:
        mat = self.composite(src, dst)
        m = self.t.module(self.side, dst)
        return m.canonical([sum(a * b for a, b in zip(row, x)) for row in mat])


def _logp(x: int, p: int) -> int:
    return vp(x, p, x.bit_length() + 1)


@dataclass
class LevelStability:
    level: int
    stable: bool
    image_exponents: tuple[int, ...]
    injective: bool | None = None
    kernel_log: int | None = None
    saturated: bool | None = None

    def to_json(self) -> dict:
        return {
            "level": enc(self.level),
            "stable": self.stable,
            "image_exponents": enc_vec(self.image_exponents),
            "injective": self.injective,
            "kernel_log": None if self.kernel_log is None else enc(self.kernel_log),
            "saturated": self.saturated,
        }


@dataclass
class StabilizationReport:
    """Outcome of the window test on one side of a tower.

    ``top_level`` is the largest level whose stable image is trusted.
    ``injective_from`` is the least level from which the natural map
    ``H / l^k H -> H_k`` is injective on every checked level.  ``n0`` is the
    least level from which, in addition, every level is saturated: the
    classes orthogonal to the other side's stable image all lift to the
    limit, so nothing transient is left at that level.
    """

    side: str
    window: int
    horizon: int
    levels: list[LevelStability]
    top_level: int | None
    rank: int | None
    torsion: tuple[int, ...]
    injective_from: int | None
    n0: int | None
    certified: bool
    reason: str = ""

    @property
    def kernels(self) -> dict[int, int]:
        """Nonzero ``log_l |ker(H/l^k H -> H_k)|`` by level."""
        return {s.level: s.kernel_log for s in self.levels if s.kernel_log}

    def to_json(self) -> dict:
        return {
            "side": self.side,
            "window": enc(self.window),
            "horizon": enc(self.horizon),
            "top_level": None if self.top_level is None else enc(self.top_level),
            "rank": None if self.rank is None else enc(self.rank),
            "torsion": enc_vec(self.torsion),
            "injective_from": None if self.injective_from is None else enc(self.injective_from),
            "n0": None if self.n0 is None else enc(self.n0),
            "certified": self.certified,
            "reason": self.reason,
            "levels": [s.to_json() for s in self.levels],
        }


class _Analysis:
    def __init__(self, t: Tower, window: int):
        if window < 1:
            raise StructuralError("window must be at least 1")
        self.t, self.window = t, window
        self.images = {s: _Images(t, s) for s in SIDES}
        self._perfect: dict[int, bool] = {}

    def perfect(self, n: int) -> bool:
        if n not in self._perfect:
            try:
                self._perfect[n] = is_perfect(self.t.pairing(n)).verdict
            except StructuralError:
                self._perfect[n] = False
        return self._perfect[n]

    def stable_image(self, side: str, k: int) -> Submodule:
        return self.images[side].image(self.t.horizon, k)

    def restricted_gram(self, k: int, sH: Submodule, sT: Submodule) -> Matrix:
        pair = self.t.pairing(k)
        return [[pair.value(g, h) for h in sT.generators] for g in sH.generators]

    def saturated(self, side: str, k: int) -> bool | None:
        if not self.perfect(k):
            return None
        p = self.t.prime
        mine, theirs = self.stable_image(side, k), self.stable_image(_other(side), k)
        if side == "H":
            gram = self.restricted_gram(k, mine, theirs)
        else:
            g = self.restricted_gram(k, theirs, mine)
            gram = transpose(g, len(mine.generators))
        restricted = FiniteGramPairing(k, mine.module, theirs.module, _tup(gram))
        radical = kernel_of_map(adjoint_left(restricted))
        perp_log = sum(self.t.module(side, k).exponents) - sum(theirs.exponents)
        return sum(radical.exponents) == perp_log

    def stabilize(self, side: str) -> StabilizationReport:
        _check_side(side)
        t, w = self.t, self.window
        N, p = t.horizon, t.prime
        top = N - w
        levels: list[LevelStability] = []
        for k in range(1, top + 1):
            J = self.stable_image(side, k)
            Jw = self.images[side].image(N - w, k)
            levels.append(LevelStability(k, J.exponents == Jw.exponents, J.exponents))
        K = 0
        for s in levels:
            if not s.stable:
                break
            K = s.level
        if K == 0:
            reason = (
                f"horizon {N} too small for window {w}" if top < 1
                else f"window test fails already at level 1 (horizon {N})"
            )
            return StabilizationReport(side, w, N, levels, None, None, (), None, None, False,
                                       f"inconclusive at horizon {N}: {reason}")
        exps = levels[K - 1].image_exponents
        rank = sum(1 for e in exps if e == K)
        torsion = tuple(e for e in exps if e < K)
        consistent = True
        for s in levels[:K]:
            k = s.level
            predicted = rank * k + sum(min(c, k) for c in torsion)
            actual = sum(s.image_exponents)
            s.kernel_log = predicted - actual
            s.injective = s.kernel_log == 0
            consistent &= s.kernel_log >= 0
            s.saturated = self.saturated(side, k)
        injective_from = None
        n0 = None
        for s in reversed(levels[:K]):
            if not s.injective:
                break
            injective_from = s.level
        for s in reversed(levels[:K]):
            if not (s.injective and s.saturated):
                break
            n0 = s.level
        reason = "" if consistent else "a stable image exceeds the size allowed by the limit"
        return StabilizationReport(side, w, N, levels, K, rank, torsion, injective_from, n0,
                                   consistent, reason)


def stabilize(t: Tower, side: str, window: int = DEFAULT_WINDOW) -> StabilizationReport:
    return _Analysis(t, window).stabilize(side)


# --------------------------------------------------------------------------
# limits


@dataclass
class FgModuleApprox:
    prime: int
    precision: int
    rank: int
    torsion: tuple[int, ...]

    def to_json(self) -> dict:
        return {"prime": enc(self.prime), "precision": enc(self.precision),
                "rank": enc(self.rank), "torsion": enc_vec(self.torsion)}


@dataclass
class LimitApprox:
    """The limit of one side, read at ``level``.

    ``section`` holds the adapted generators of the stable image inside the
    level-``level`` module, free generators first; ``lifts`` are preimages
    at the horizon, so each section vector is visibly the image of a
    horizon-level element.
    """

    side: str
    level: int
    module: FgModuleApprox
    section: list[Vector]
    lifts: list[Vector]
    orders: tuple[int, ...]
    slack: int
    floor_only: bool

    @property
    def free_section(self) -> list[Vector]:
        return self.section[: self.module.rank]

    @property
    def torsion_section(self) -> list[Vector]:
        return self.section[self.module.rank:]


def _limit_from(an: _Analysis, side: str, level: int) -> LimitApprox:
    t = an.t
    J = an.stable_image(side, level)
    rank = sum(1 for e in J.exponents if e == level)
    torsion = tuple(e for e in J.exponents if e < level)
    top = t.module(side, t.horizon)
    lifts = [top.canonical(v) for v in J.preimages]
    return LimitApprox(
        side, level, FgModuleApprox(t.prime, level, rank, torsion),
        [list(g) for g in J.generators], lifts, J.exponents, t.horizon - level, rank > 0,
    )


def limit_module(t: Tower, side: str, report: StabilizationReport,
                 level: int | None = None, *, _an: _Analysis | None = None) -> LimitApprox:
    """Rank and torsion of the limit from a certified stabilization report.

    Torsion exponents below the reading level are exact; anything of
    exponent equal to the level is counted as free (``floor_only``).
    """
    if not report.certified or report.top_level is None:
        raise InconclusiveError(report.reason or "stabilization not certified")
    level = report.top_level if level is None else level
    if not 1 <= level <= report.top_level:
        raise PrecisionError(f"level {level} is outside the certified range [1, {report.top_level}]")
    an = _an or _Analysis(t, report.window)
    return _limit_from(an, side, level)


@dataclass
class TorsionKillCheck:
    ok: bool
    entries: list[dict]

    def to_json(self) -> dict:
        return {"ok": self.ok, "entries": self.entries}


def limit_pairing(t: Tower, limH: LimitApprox, limT: LimitApprox) -> tuple[FreeGramPairing, TorsionKillCheck]:
    """Gram matrix of the limit pairing on the free parts, plus the check
    that torsion generators pair to zero at the precision they support."""
    if limH.level != limT.level:
        raise StructuralError("both limits must be read at the same level")
    L = limH.level
    if L < 1:
        raise PrecisionError("no precision left for the limit pairing")
    pair = t.pairing(L)
    gram = [[pair.value(g, h) for h in limT.free_section] for g in limH.free_section]
    p = t.prime
    entries = []
    ok = True
    for side, lim, other in (("H", limH, limT), ("T", limT, limH)):
        for idx, (g, d) in enumerate(zip(lim.torsion_section, lim.orders[lim.module.rank:])):
            need = L - d
            vals = [pair.value(g, h) if side == "H" else pair.value(h, g) for h in other.section]
            low = min((vp(v, p, L) for v in vals), default=L)
            good = low >= need
            ok &= good
            entries.append({"side": side, "generator": enc(idx), "order_exponent": enc(d),
                            "min_valuation": enc(low), "required": enc(need), "ok": good})
    return (
        FreeGramPairing(p, L, _tup(gram), limH.module.rank, limT.module.rank),
        TorsionKillCheck(ok, entries),
    )


# --------------------------------------------------------------------------
# the theorem pipeline


@dataclass
class Stage:
    name: str
    ok: bool
    detail: str = ""
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {"name": self.name, "ok": self.ok, "detail": self.detail,
                "seconds": round(self.seconds, 6)}


@dataclass
class TheoremReport:
    """Outcome of :func:`verify_theorem`.

    ``verdict`` is ``"certified"``, ``"violation"`` or ``"inconclusive"``.
    """

    verdict: str
    stages: list[Stage]
    validation: ValidationReport | None = None
    stabilization: dict[str, StabilizationReport] = field(default_factory=dict)
    limits: dict[str, LimitApprox] = field(default_factory=dict)
    gram: FreeGramPairing | None = None
    torsion_kill: TorsionKillCheck | None = None
    unimodularity: UnimodularityResult | None = None
    certificate: dict | None = None
    precision_ledger: list[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    tower: Tower | None = field(default=None, repr=False)

    @property
    def failed_stage(self) -> str | None:
        return next((s.name for s in self.stages if not s.ok), None)

    @property
    def ok(self) -> bool:
        return self.verdict == "certified"

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "verdict": self.verdict,
            "failed_stage": self.failed_stage,
            "stages": [s.to_json() for s in self.stages],
            "precision_ledger": self.precision_ledger,
        }
        if self.validation is not None:
            out["validation"] = self.validation.to_json()
        out["stabilization"] = {k: v.to_json() for k, v in self.stabilization.items()}
        out["limits"] = {k: v.module.to_json() for k, v in self.limits.items()}
        if self.gram is not None:
            out["limit_gram"] = {"precision": enc(self.gram.precision), "gram": enc_mat(self.gram.gram)}
        if self.torsion_kill is not None:
            out["torsion_kill"] = self.torsion_kill.to_json()
        if self.unimodularity is not None:
            u = self.unimodularity
            out["unimodularity"] = {
                "unimodular": u.unimodular,
                "reason": u.reason,
                "divisor_valuations": [{"valuation": enc(v), "exact": e} for v, e in u.divisor_valuations],
            }
        if self.certificate is not None:
            out["certificate"] = self.certificate
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


def _limit_stages(an: _Analysis, reports: dict[str, StabilizationReport]):
    t = an.t
    L = min(r.top_level for r in reports.values())
    limH = limit_module(t, "H", reports["H"], L, _an=an)
    limT = limit_module(t, "T", reports["T"], L, _an=an)
    return L, limH, limT


def verify_theorem(t: Tower, window: int = DEFAULT_WINDOW) -> TheoremReport:
    """validate -> stabilize -> limits -> limit pairing -> unimodularity."""
    stages: list[Stage] = []
    rep = TheoremReport("inconclusive", stages, tower=t)
    clock = time.perf_counter()

    def stage(name: str, ok: bool, detail: str = "") -> None:
        nonlocal clock
        now = time.perf_counter()
        stages.append(Stage(name, ok, detail, now - clock))
        clock = now

    val = validate_tower(t)
    rep.validation = val
    stage("validate", val.ok, "; ".join(f"level {v.level}: {v.condition}" for v in val.violations))
    an = _Analysis(t, window)
    if not val.ok:
        rep.verdict = "violation"
        rep.diagnostics = _diagnose(an)
        return rep

    reports = {s: an.stabilize(s) for s in SIDES}
    rep.stabilization = reports
    bad = [r for r in reports.values() if not r.certified]
    stage("stabilize", not bad, "; ".join(f"{r.side}: {r.reason}" for r in bad))
    if bad:
        return rep

    L, limH, limT = _limit_stages(an, reports)
    rep.limits = {"H": limH, "T": limT}
    rep.precision_ledger.append({
        "stage": "limit_module", "loss": enc(t.horizon - L),
        "reason": f"stable images trusted up to level {L} of horizon {t.horizon}",
    })
    same = limH.module.rank == limT.module.rank
    stage("limit_module", same,
          "" if same else f"rank mismatch H={limH.module.rank} T={limT.module.rank}")
    if not same:
        return rep

    gram, kill = limit_pairing(t, limH, limT)
    rep.gram, rep.torsion_kill = gram, kill
    worst = max((int(e["order_exponent"]) for e in kill.entries), default=0)
    if kill.entries:
        rep.precision_ledger.append({
            "stage": "torsion_kill", "loss": enc(worst),
            "reason": f"torsion of exponent {worst} is only visible modulo l^{L - worst}",
        })
    stage("limit_pairing", kill.ok, "" if kill.ok else "torsion pairs nontrivially")
    if not kill.ok:
        return rep

    res = check_unimodular_free(gram)
    rep.unimodularity = res
    if not res.unimodular:
        stage("unimodularity", False,
              f"{res.reason}; the tower validated, so the limit was read with too little "
              "precision (torsion of exponent >= the reading level looks free) or this is a bug")
        return rep
    stage("unimodularity", True)
    rep.certificate = build_certificate(t, limH, limT, res.certificate)
    stage("certificate", True)
    rep.verdict = "certified"
    return rep


def _diagnose(an: _Analysis) -> dict:
    """Best-effort limit reading on an invalid tower, for evidence only."""
    out: dict[str, Any] = {}
    try:
        reports = {s: an.stabilize(s) for s in SIDES}
        if not all(r.certified for r in reports.values()):
            return {"note": "stabilization not certified"}
        L, limH, limT = _limit_stages(an, reports)
        gram, _ = limit_pairing(an.t, limH, limT)
        res = check_unimodular_free(gram)
        out = {
            "level": enc(L),
            "limit_gram": enc_mat(gram.gram),
            "unimodular": res.unimodular,
            "divisor_valuations": [{"valuation": enc(v), "exact": e} for v, e in res.divisor_valuations],
        }
    except Exception as exc:  # diagnostics never mask the validation verdict
        out = {"note": f"diagnostics unavailable: {exc}"}
    return out


# --------------------------------------------------------------------------
# certificates


def _cert_payload(cert: dict) -> dict:
    return {k: v for k, v in cert.items() if k != "digest"}


def build_certificate(t: Tower, limH: LimitApprox, limT: LimitApprox,
                      uc: UnimodularityCertificate) -> dict:
    r = limH.module.rank
    cert = {
        "format": FORMAT,
        "kind": "unimodularity-certificate",
        "tower_digest": t.digest(),
        "prime": enc(t.prime),
        "horizon": enc(t.horizon),
        "level": enc(limH.level),
        "precision": enc(uc.precision),
        "rank": enc(r),
        "sectionH": enc_mat(limH.free_section),
        "sectionT": enc_mat(limT.free_section),
        "liftsH": enc_mat(limH.lifts[:r]),
        "liftsT": enc_mat(limT.lifts[:r]),
        "gram": enc_mat(uc.gram),
        "P": enc_mat(uc.P),
        "Q": enc_mat(uc.Q),
    }
    cert["digest"] = digest(_cert_payload(cert))
    return cert


def replay_certificate(cert: Any, t: Tower) -> list[str]:
    """Re-check a certificate against a tower from its stored matrices.

    Returns the failed conditions, first failure first; empty means valid.
    """
    try:
        if not isinstance(cert, dict) or cert.get("kind") != "unimodularity-certificate":
            return ["not a unimodularity certificate"]
        if cert.get("format") != FORMAT:
            return [f"unsupported certificate format {cert.get('format')!r}"]
        problems = []
        if cert.get("tower_digest") != t.digest():
            return ["certificate was issued for a different tower"]
        if cert.get("digest") != digest(_cert_payload(cert)):
            problems.append("certificate digest does not match its contents")
        p = dec(cert["prime"])
        L = dec(cert["level"])
        N = dec(cert["horizon"])
        prec = dec(cert["precision"])
        r = dec(cert["rank"])
        if p != t.prime or N != t.horizon:
            return problems + ["prime or horizon differ from the tower"]
        if not 1 <= L <= N or prec != L:
            return problems + [f"precision {prec} / level {L} inconsistent with horizon {N}"]
        mats = {k: dec_mat(cert[k], k) for k in ("sectionH", "sectionT", "liftsH", "liftsT", "gram", "P", "Q")}
        for k, m in mats.items():
            if len(m) != r:
                return problems + [f"{k} has {len(m)} rows, expected rank {r}"]
        q = p**L
        for side in SIDES:
            imgs = _Images(t, side)
            top = t.module(side, N)
            here = t.module(side, L)
            for i, (lift, sec) in enumerate(zip(mats["lifts" + side], mats["section" + side])):
                if len(lift) != top.rank or len(sec) != here.rank:
                    return problems + [f"{side} section vector {i} has the wrong length"]
                if imgs.push(lift, N, L) != here.canonical(sec):
                    problems.append(f"{side} section vector {i} is not the image of its lift")
        if problems:
            return problems
        pair = t.pairing(L)
        for i, g in enumerate(mats["sectionH"]):
            for j, h in enumerate(mats["sectionT"]):
                if pair.value(g, h) != mats["gram"][i][j] % q:
                    return [f"gram[{i}][{j}] does not match e_{L} on the stored sections"]
        uc = UnimodularityCertificate(p, prec, mats["gram"], mats["P"], mats["Q"])
        return uc.check()
    except (KeyError, StructuralError, TypeError) as exc:
        return [f"malformed certificate: {exc}"]


# --------------------------------------------------------------------------
# dual partners


@dataclass
class DualPartner:
    coordinates: Vector
    element: Vector
    level: int
    precision: int
    value: int

    def to_json(self) -> dict:
        return {"coordinates": enc_vec(self.coordinates), "element": enc_vec(self.element),
                "level": enc(self.level), "precision": enc(self.precision), "value": enc(self.value)}


def find_dual_partner(t: Tower, h: Sequence[int], report: TheoremReport | None = None,
                      window: int = DEFAULT_WINDOW) -> DualPartner:
    """``t`` in the free complement of T with ``e(h, t) = 1 mod l^L``.

    ``h`` is given in the free-part basis of ``H / tors``.
    """
    from .errors import DomainError

    report = report or verify_theorem(t, window)
    if not report.ok:
        raise InconclusiveError(f"theorem pipeline did not certify the tower ({report.verdict})")
    limH, limT = report.limits["H"], report.limits["T"]
    r, L, p = limH.module.rank, limH.level, t.prime
    if len(h) != r:
        raise StructuralError(f"h needs {r} coordinates")
    if all(x % p == 0 for x in h):
        raise DomainError("h is divisible by l in H/tors")
    q = p**L
    G = report.gram.rows()
    functional = [sum(h[i] * G[i][j] for i in range(r)) % q for j in range(r)]
    free_T = InvariantFactorModule(p, L, (L,) * r)
    try:
        coords = find_unit_functional(free_T, functional)
    except DomainError:
        raise DomainError("no dual partner in the stable image: invalid tower or bug") from None
    hL = [0] * t.module("H", L).rank
    for c, g in zip(h, limH.free_section):
        hL = [a + c * b for a, b in zip(hL, g)]
    tL = [0] * t.module("T", L).rank
    for c, g in zip(coords, limT.free_section):
        tL = [a + c * b for a, b in zip(tL, g)]
    tL = t.module("T", L).canonical(tL)
    value = t.pairing(L).value(hL, tL)
    return DualPartner(coords, tL, L, L, value)
