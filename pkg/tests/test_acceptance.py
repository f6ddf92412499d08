"""Acceptance criteria 1-9.

Run with ``python3 -m pytest tests/test_acceptance.py -s -v`` to see one
PASS/FAIL line per criterion.
"""

from __future__ import annotations

import itertools
import json
import random
import time
from fractions import Fraction

import pytest

import oracles
from towercert.cli import main
from towercert.errors import DomainError
from towercert.fixtures import (
    SyntheticSpec,
    break_perfectness,
    corrupt_transition,
    degenerate_core_tower,
    random_tower,
    synthetic_tower,
)
from towercert.linalg import det_integer, det_mod_prime, matmul, snf_integer, snf_local
from towercert.modules import InvariantFactorModule
from towercert.pairing import FiniteGramPairing, find_unit_functional, is_perfect
from towercert.ring import vp
from towercert.serialization import digest, dumps
from towercert.surfaces import SurfaceSpec, betti_numbers, builtin, cohomology, make_surface, surface_tower, uct_order
from towercert.tower import find_dual_partner, replay_certificate, verify_theorem

SEEDS = range(500)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def random_runs():
    start = time.perf_counter()
    runs = []
    for seed in SEEDS:
        t, truth = random_tower(seed)
        runs.append((seed, t, truth, verify_theorem(t)))
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def surface_runs():
    start = time.perf_counter()
    runs = {}
    for name, p, N in (("torus", 5, 4), ("genus-2", 3, 4), ("sphere", 5, 4)):
        t, truth = surface_tower(SurfaceSpec(name, p, 1, N))
        runs[name] = (t, truth, verify_theorem(t))
    return runs, time.perf_counter() - start


# -- 1 ---------------------------------------------------------------------


def test_criterion_1_theorem_at_scale(random_runs, capsys):
    runs, seconds = random_runs
    failures = [seed for seed, t, _, rep in runs if not rep.ok or replay_certificate(rep.certificate, t)]
    primes = {t.prime for _, t, _, _ in runs}
    ok = not failures and seconds < 60 and len(runs) >= 500
    report(capsys, 1, ok, f"{len(runs)} towers, {len(failures)} failures, primes {sorted(primes)}, {seconds:.1f}s")
    assert not failures
    assert seconds < 60
    assert primes == {2, 3, 5}


@pytest.mark.xfail(strict=True, reason="horizon noise+4 is too short once torsion exponents reach 3")
def test_criterion_1_at_literal_horizon(random_runs, capsys):
    """Same towers cut down to N = noise horizon + 4.

    The T-side dual of a torsion summand of exponent c only dies c levels
    above where it is read, and reading c needs a level above c, so for
    c = 3 and no noise the four levels cannot suffice.  Reported, not hidden.
    """
    counts = {"correct": 0, "wrong": 0, "inconclusive": 0}
    for _, t, truth, _ in random_runs[0]:
        cut = t.truncate(truth.noise_horizon + 4)
        rep = verify_theorem(cut)
        if not rep.ok:
            counts["inconclusive" if rep.verdict == "inconclusive" else "wrong"] += 1
        elif (rep.limits["H"].module.rank, rep.limits["H"].module.torsion) == (truth.rank, truth.torsion):
            counts["correct"] += 1
        else:
            counts["wrong"] += 1
    with capsys.disabled():
        print(f"\ncriterion 1 at N = noise+4: {counts}")
    assert counts["correct"] == len(random_runs[0])


# -- 2 ---------------------------------------------------------------------


def small_modules(p=3, bound=81):
    for n in range(1, 5):
        for k in range(0, 5):
            for exps in itertools.combinations_with_replacement(range(n, 0, -1), k):
                if p ** sum(exps) <= bound:
                    yield InvariantFactorModule(p, n, exps)


def test_criterion_2_unit_functional_exactness(capsys):
    p = 3
    discrepancies = checked = modules = 0
    for m in small_modules(p):
        modules += 1
        q = p**m.level
        all_homs = oracles.homs(p, m.exponents, m.level)
        for x in oracles.elements(p, m.exponents):
            checked += 1
            expected = any(oracles.evaluate(phi, x, q) == 1 for phi in all_homs)
            nonzero = any((p ** (m.level - 1) * xi) % p**e for xi, e in zip(x, m.exponents))
            try:
                phi = find_unit_functional(m, x)
                got = True
                if tuple(phi) not in set(all_homs) or oracles.evaluate(phi, x, q) != 1:
                    discrepancies += 1
            except DomainError:
                got = False
            if not (got == expected == nonzero):
                discrepancies += 1
    report(capsys, 2, discrepancies == 0, f"{modules} modules, {checked} elements, {discrepancies} discrepancies")
    assert discrepancies == 0


# -- 3 ---------------------------------------------------------------------


def random_pairing(rng):
    p = rng.choice([2, 3])
    n = rng.randint(1, 3)
    sizes = []
    for _ in range(2):
        while True:
            exps = tuple(sorted((rng.randint(1, n) for _ in range(rng.randint(0, 3))), reverse=True))
            if p ** sum(exps) <= 256:
                sizes.append(exps)
                break
    left, right = (InvariantFactorModule(p, n, e) for e in sizes)
    if rng.random() < 0.5:
        right = InvariantFactorModule(p, n, left.exponents)
    gram = tuple(
        tuple(rng.randrange(p**min(a, b)) * p ** (n - min(a, b)) for b in right.exponents)
        for a in left.exponents
    )
    # bias towards perfect examples: units on the diagonal, multiples of l elsewhere
    if left.exponents == right.exponents and rng.random() < 0.6:
        gram = tuple(
            tuple((1 if i == j else p * rng.randrange(2)) * p ** (n - min(a, b))
                  for j, b in enumerate(right.exponents))
            for i, a in enumerate(left.exponents)
        )
    return FiniteGramPairing(n, left, right, gram)


def test_criterion_3_perfectness_oracle(capsys):
    rng = random.Random(20261015)
    discrepancies = perfect = 0
    total = 300
    for _ in range(total):
        pr = random_pairing(rng)
        p = pr.left.prime
        expected = oracles.perfect(p, pr.level, pr.left.exponents, pr.right.exponents, pr.gram)
        perfect += expected
        discrepancies += is_perfect(pr).verdict != expected
    report(capsys, 3, discrepancies == 0, f"{total} pairings ({perfect} perfect), {discrepancies} discrepancies")
    assert discrepancies == 0
    assert 0 < perfect < total


# -- 4 ---------------------------------------------------------------------


def random_matrix(rng):
    r, c = rng.randint(0, 6), rng.randint(0, 6)
    return c, [[rng.randint(-625, 625) for _ in range(c)] for _ in range(r)]


def snf_integer_ok(a, cols):
    s = snf_integer(a, cols=cols)
    if matmul(matmul(s.U, s.S, inner=s.rows, cols=s.cols), s.V, inner=s.cols, cols=s.cols) != a:
        return False
    if s.rows and abs(det_integer(s.U)) != 1 or s.cols and abs(det_integer(s.V)) != 1:
        return False
    if any(s.S[i][j] for i in range(s.rows) for j in range(s.cols) if i != j):
        return False
    nz = [d for d in s.diag if d]
    return s.diag[: len(nz)] == nz and all(d > 0 for d in nz) and all(b % a == 0 for a, b in zip(nz, nz[1:]))


def snf_local_ok(a, cols, p, n):
    q = p**n
    s = snf_local(a, p, n, cols=cols)
    if matmul(matmul(s.U, s.S, mod=q, inner=s.rows, cols=s.cols), s.V, mod=q, inner=s.cols, cols=s.cols) != [
        [x % q for x in row] for row in a
    ]:
        return False
    if s.rows and det_mod_prime(s.U, p) == 0 or s.cols and det_mod_prime(s.V, p) == 0:
        return False
    if any(s.S[i][j] % q for i in range(s.rows) for j in range(s.cols) if i != j):
        return False
    return s.exponents == sorted(s.exponents) and all(d == p**e % q for d, e in zip(s.diag, s.exponents))


def test_criterion_4_snf_contract(capsys):
    rng = random.Random(4)
    bad_int = sum(not snf_integer_ok(a, c) for c, a in (random_matrix(rng) for _ in range(1000)))
    bad_loc = 0
    for _ in range(1000):
        c, a = random_matrix(rng)
        p, n = rng.choice([2, 3, 5]), rng.randint(1, 5)
        bad_loc += not snf_local_ok(a, c, p, n)
    ok = bad_int == bad_loc == 0
    report(capsys, 4, ok, f"1000 integer + 1000 local matrices, failures {bad_int}/{bad_loc}")
    assert ok


# -- 5 ---------------------------------------------------------------------


def test_criterion_5_stabilization_ground_truth(random_runs, capsys):
    wrong_n0, not_injective = [], []
    for seed, _, truth, rep in random_runs[0]:
        for side in "HT":
            st = rep.stabilization[side]
            if st.n0 != truth.noise_horizon + 1:
                wrong_n0.append((seed, side, st.n0))
            if any(not lv.injective for lv in st.levels if st.n0 <= lv.level <= st.top_level):
                not_injective.append((seed, side))
    ok = not wrong_n0 and not not_injective
    report(capsys, 5, ok, f"{len(random_runs[0])} towers, n0 mismatches {len(wrong_n0)}, "
                          f"injectivity failures {len(not_injective)}")
    assert not wrong_n0, wrong_n0[:5]
    assert not not_injective


# -- 6 ---------------------------------------------------------------------


def rational_rank(m, cols):
    rows = [[Fraction(x) for x in r] for r in m]
    rank = 0
    for c in range(cols):
        piv = next((i for i in range(rank, len(rows)) if rows[i][c]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][c]:
                f = rows[i][c] / rows[rank][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[rank])]
        rank += 1
    return rank


def test_criterion_6_surface_surrogate(surface_runs, capsys):
    runs, seconds = surface_runs
    start = time.perf_counter()
    t, _, rep = runs["torus"]
    lim = rep.limits["H"].module
    torus_ok = (
        rep.ok and lim.rank == 2 and lim.torsion == () and rep.limits["T"].module.torsion == ()
        and rep.unimodularity.determinant_valuation == (0, True)
        and all((lev.gram[i][j] + lev.gram[j][i]) % t.prime**lev.n == 0
                for lev in t.levels for i in range(len(lev.gram)) for j in range(len(lev.gram)))
    )
    g2 = runs["genus-2"][2]
    genus_ok = g2.ok and g2.limits["H"].module.rank == 4
    sphere = runs["sphere"][2]
    sphere_ok = sphere.ok and sphere.certificate["rank"] == "0" and sphere.certificate["gram"] == []

    oracle_ok = True
    for name in ("sphere", "torus", "genus-2"):
        s = make_surface(builtin(name))
        d0, d1 = s.coboundaries
        r0 = rational_rank(d0, len(s.vertices))
        r1 = rational_rank(d1, len(s.edges))
        rational = [len(s.vertices) - r0, len(s.edges) - r1 - r0, len(s.triangles) - r1]
        g = s.genus
        oracle_ok &= betti_numbers(s) == rational == [1, 2 * g, 1]
        for p in (2, 3, 5):
            for n in (1, 2, 3, 4):
                for k in (0, 1, 2):
                    order = cohomology(s, k, p, n).module.cardinality()
                    oracle_ok &= order == uct_order(s, k, p**n) == p ** (n * rational[k])
    seconds += time.perf_counter() - start
    ok = torus_ok and genus_ok and sphere_ok and oracle_ok and seconds < 10
    report(capsys, 6, ok, f"torus {torus_ok}, genus-2 {genus_ok}, sphere {sphere_ok}, "
                          f"UCT oracle {oracle_ok}, {seconds:.1f}s")
    assert ok


# -- 7 ---------------------------------------------------------------------


def test_criterion_7_dual_partner(random_runs, surface_runs, capsys):
    fixtures = [(t, rep) for _, t, _, rep in random_runs[0]]
    fixtures += [(t, rep) for t, _, rep in surface_runs[0].values()]
    checked, bad = 0, []
    for t, rep in fixtures:
        r = rep.limits["H"].module.rank
        if r == 0:
            continue
        p = t.prime
        for i in range(r):
            h = [int(i == j) for j in range(r)]
            dp = find_dual_partner(t, h, rep)
            q = p**dp.precision
            # independent recomputation straight from the level Gram matrix
            hL = rep.limits["H"].free_section[i]
            lev = t.level(dp.level)
            value = sum(hL[a] * lev.gram[a][b] * dp.element[b]
                        for a in range(len(hL)) for b in range(len(dp.element))) % q
            checked += 1
            if dp.precision < 2 or value != 1 or dp.value != 1:
                bad.append((t.digest()[:8], i, dp.precision, value))
    report(capsys, 7, not bad, f"{checked} basis vectors, {len(bad)} failures")
    assert checked and not bad


# -- 8 ---------------------------------------------------------------------


def test_criterion_8_negative_controls(tmp_path, capsys):
    base, _ = synthetic_tower(SyntheticSpec(3, 2, (), ((1, 2), (3, 4)), horizon=5))
    broken = break_perfectness(base, 2)
    corrupted = corrupt_transition(base, 3, "H")
    degenerate, _ = degenerate_core_tower(3, ((3, 0), (0, 1)))
    det_valuation = vp(det_integer([[3, 0], [0, 1]]), 3, 99)

    results = []
    for name, tower in (("perfectness", broken), ("compatibility", corrupted), ("degenerate", degenerate)):
        path, rep_path = tmp_path / f"{name}.json", tmp_path / f"{name}.report.json"
        path.write_text(dumps(tower.to_json()))
        code = main(["verify", str(path), "--report", str(rep_path)])
        capsys.readouterr()
        body = json.loads(rep_path.read_text())["results"][0]
        found = {(v["level"], v["condition"]) for v in body["validation"]["violations"]}
        results.append((code, found, body))

    perf_code, perf_found, _ = results[0]
    perf_ok = perf_code == 1 and {lv for lv, c in perf_found if c == "perfectness"} == {"2"}
    comp_code, comp_found, _ = results[1]
    comp_ok = comp_code == 1 and {lv for lv, _ in comp_found} == {"3"}
    deg_code, deg_found, deg_body = results[2]
    vals = [int(v["valuation"]) for v in deg_body["diagnostics"]["divisor_valuations"]]
    deg_ok = (
        deg_code == 1
        and {c for _, c in deg_found} == {"perfectness"}
        and {int(lv) for lv, _ in deg_found} == set(range(1, degenerate.horizon + 1))
        and sum(vals) == det_valuation >= 1
    )
    codes = [r[0] for r in results]
    ok = perf_ok and comp_ok and deg_ok
    report(capsys, 8, ok, f"exit codes {codes}, divisor valuations {vals} vs v(det) = {det_valuation}")
    assert ok


# -- 9 ---------------------------------------------------------------------


def single_entry_perturbations(cert):
    for key, val in cert.items():
        if key == "digest":
            continue
        if isinstance(val, list):
            for i, row in enumerate(val):
                for j in range(len(row)):
                    bad = json.loads(json.dumps(cert))
                    bad[key][i][j] = str(int(row[j]) + 1)
                    yield key, bad
        else:
            bad = dict(cert)
            bad[key] = str(int(val) + 1) if isinstance(val, str) and val.lstrip("-").isdigit() else "x"
            if key == "format":
                bad[key] = val + 1
            yield key, bad


# a lift may move inside the kernel of the push-down and stay a valid lift,
# so only the digest catches those edits
DIGEST_ONLY = ("liftsH", "liftsT")


def test_criterion_9_certificate_replay(random_runs, surface_runs, tmp_path, capsys):
    pairs = [(t, rep.certificate) for _, t, _, rep in random_runs[0]]
    pairs += [(t, rep.certificate) for t, _, rep in surface_runs[0].values()]
    replay_failures = 0
    for k, (t, cert) in enumerate(pairs):
        tp, cp = tmp_path / f"t{k}.json", tmp_path / f"c{k}.json"
        tp.write_text(dumps(t.to_json()))
        cp.write_text(dumps(cert))
        replay_failures += main(["replay", str(cp), str(tp)]) != 0
    capsys.readouterr()

    rng = random.Random(9)
    tried = accepted = 0
    for k, (t, cert) in enumerate(pairs):
        exhaustive = k >= len(pairs) - 3 or k % 10 == 0
        for key, bad in single_entry_perturbations(cert):
            if not exhaustive and rng.random() > 0.1:
                continue
            tried += 1
            accepted += not replay_certificate(bad, t)
            if key not in DIGEST_ONLY:
                fresh = dict(bad)
                fresh["digest"] = digest({k: v for k, v in fresh.items() if k != "digest"})
                tried += 1
                accepted += not replay_certificate(fresh, t)

    # the CLI path rejects a perturbed certificate too
    t, cert = pairs[0]
    bad = next(b for k, b in single_entry_perturbations(cert) if k == "P")
    tp, cp = tmp_path / "bad_t.json", tmp_path / "bad_c.json"
    tp.write_text(dumps(t.to_json()))
    cp.write_text(dumps(bad))
    cli_rejects = main(["replay", str(cp), str(tp)]) == 1
    capsys.readouterr()

    ok = replay_failures == 0 and accepted == 0 and cli_rejects
    report(capsys, 9, ok, f"{len(pairs)} certificates replayed via CLI, {replay_failures} failures; "
                          f"{tried} perturbations, {accepted} accepted")
    assert ok
