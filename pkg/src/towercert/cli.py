"""Command-line front end.

Exit codes: 0 pass, 1 verified violation (or domain error in a utility),
2 malformed input, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any

from .errors import DomainError, InconclusiveError, StructuralError, TowerCertError
from .fixtures import RandomBounds, SyntheticSpec, random_tower, synthetic_tower
from .linalg import snf_integer, snf_local
from .modules import InvariantFactorModule, decompose
from .pairing import (
    FiniteGramPairing,
    FreeGramPairing,
    UnimodularityCertificate,
    check_unimodular_free,
    is_perfect,
)
from .serialization import FORMAT, dec, dec_mat, dec_vec, digest, dumps, enc, enc_mat, enc_vec, require
from .surfaces import SurfaceSpec, surface_tower
from .tower import DEFAULT_WINDOW, Tower, find_dual_partner, replay_certificate, verify_theorem

EXIT_PASS, EXIT_VIOLATION, EXIT_MALFORMED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
VERDICT_CODES = {"certified": EXIT_PASS, "violation": EXIT_VIOLATION, "inconclusive": EXIT_INCONCLUSIVE}


class UsageError(Exception):
    """Bad input; maps to exit code 2."""


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_json(path: str | None) -> Any:
    try:
        if path is None or path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path or '<stdin>'}: {exc}") from None


def _write(path: str | None, obj: Any) -> None:
    text = dumps(obj)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    tmp = Path(path).with_suffix(Path(path).suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


# --------------------------------------------------------------------------
# generate


def _emit_fixture(args, tower: Tower, truth) -> int:
    _write(args.out, tower.to_json())
    sidecar = args.truth
    if sidecar is None and args.out not in (None, "-"):
        sidecar = str(Path(args.out).with_suffix("")) + ".truth.json"
    if sidecar:
        _write(sidecar, truth.to_json())
    return EXIT_PASS


def cmd_generate(args) -> int:
    if args.kind == "synthetic":
        core = args.core or []
        r = args.rank
        if len(core) != r * r:
            raise UsageError(f"--core needs {r * r} entries for rank {r}")
        spec = SyntheticSpec(
            args.prime, r, tuple(args.torsion or ()),
            tuple(tuple(core[i * r:(i + 1) * r]) for i in range(r)),
            tuple(args.units or ()), args.noise_horizon, args.horizon or 0,
            args.noise_rank, args.seed,
        )
        tower, truth = synthetic_tower(spec)
    elif args.kind == "surface":
        tower, truth = surface_tower(SurfaceSpec(args.surface, args.prime, args.degree, args.horizon or 4))
    else:
        primes = (args.prime,) if args.prime else RandomBounds().primes
        bounds = RandomBounds(primes, args.max_rank, args.max_torsion_count,
                              args.max_torsion_exponent, args.max_noise_horizon)
        tower, truth = random_tower(args.seed, bounds)
    return _emit_fixture(args, tower, truth)


# --------------------------------------------------------------------------
# verify


def _verify_one(path: str, window: int) -> tuple[int, dict]:
    start = time.perf_counter()
    try:
        raw = _load_json(path)
        tower = Tower.from_json(raw)
    except (UsageError, StructuralError) as exc:
        return EXIT_MALFORMED, {"path": path, "verdict": "malformed", "error": str(exc)}
    rep = verify_theorem(tower, window)
    body = rep.to_json()
    body.update({"path": path, "tower_digest": tower.digest(),
                 "seconds": round(time.perf_counter() - start, 6)})
    return VERDICT_CODES[rep.verdict], body


def _overall(codes: list[int]) -> int:
    for code in (EXIT_MALFORMED, EXIT_VIOLATION, EXIT_INCONCLUSIVE):
        if code in codes:
            return code
    return EXIT_PASS


def cmd_verify(args) -> int:
    results = [_verify_one(p, args.window) for p in args.towers]
    code = _overall([c for c, _ in results])
    names = {EXIT_PASS: "pass", EXIT_VIOLATION: "violation", EXIT_MALFORMED: "malformed",
             EXIT_INCONCLUSIVE: "inconclusive"}
    for c, body in results:
        where = body.get("failed_stage") or ""
        extra = f" at {where}" if where else ""
        if c == EXIT_VIOLATION and body.get("validation"):
            lv = sorted({v["level"] for v in body["validation"]["violations"]}, key=int)
            extra += f" (levels {', '.join(lv)})"
        if c == EXIT_MALFORMED:
            extra = f": {body['error']}"
        print(f"{body['path']}: {names[c]}{extra}")
    if args.certificate:
        certs = [b["certificate"] for _, b in results if "certificate" in b]
        if len(certs) == 1:
            _write(args.certificate, certs[0])
        elif certs:
            _write(args.certificate, certs)
    if args.report:
        report = {
            "format": FORMAT,
            "command": ["verify", *args.towers, "--window", str(args.window)],
            "inputs": [{"path": b["path"], "digest": b.get("tower_digest")} for _, b in results],
            "verdict": names[code],
            "exit_code": code,
            "results": [b for _, b in results],
        }
        _write(args.report, report)
    return code


# --------------------------------------------------------------------------
# util


def _util_snf(payload: dict) -> dict:
    a = dec_mat(require(payload, "matrix", "snf"), "matrix")
    cols = dec(payload.get("cols", len(a[0]) if a else 0), "cols")
    mode = payload.get("mode", "integer")
    if mode == "integer":
        s = snf_integer(a, cols=cols)
        out = {"mode": mode}
    elif mode == "local":
        p = dec(require(payload, "prime", "snf"), "prime")
        n = dec(require(payload, "level", "snf"), "level")
        InvariantFactorModule(p, n)
        s = snf_local(a, p, n, cols=cols)
        out = {"mode": mode, "prime": enc(p), "level": enc(n), "exponents": enc_vec(s.exponents)}
    else:
        raise StructuralError(f"snf: mode must be 'integer' or 'local', got {mode!r}")
    out.update({"U": enc_mat(s.U), "S": enc_mat(s.S), "V": enc_mat(s.V), "diagonal": enc_vec(s.diag)})
    return out


def _util_decompose(payload: dict) -> dict:
    p = dec(require(payload, "prime", "decompose"), "prime")
    n = dec(require(payload, "level", "decompose"), "level")
    pres = dec_mat(require(payload, "presentation", "decompose"), "presentation")
    g = dec(payload.get("generators", len(pres)), "generators")
    InvariantFactorModule(p, n)
    c = decompose(pres, p, n, g)
    return {"prime": enc(p), "level": enc(n), "exponents": enc_vec(c.module.exponents),
            "basis": enc_mat(c.basis), "cardinality": enc(c.module.cardinality())}


def _util_pairing(payload: dict) -> dict:
    p = dec(require(payload, "prime", "pairing-check"), "prime")
    if "certificate" in payload:
        cert = payload["certificate"]
        uc = UnimodularityCertificate(
            p, dec(require(cert, "precision", "certificate"), "precision"),
            dec_mat(require(cert, "gram", "certificate")), dec_mat(require(cert, "P", "certificate")),
            dec_mat(require(cert, "Q", "certificate")),
        )
        problems = uc.check()
        return {"replayed": not problems, "problems": problems}
    gram = dec_mat(require(payload, "gram", "pairing-check"), "gram")
    if "left" in payload:
        n = dec(require(payload, "level", "pairing-check"), "level")
        left = InvariantFactorModule(p, n, tuple(dec_vec(payload["left"], "left")))
        right = InvariantFactorModule(p, n, tuple(dec_vec(require(payload, "right", "pairing-check"), "right")))
        if not right.rank:
            gram = [[] for _ in range(left.rank)]
        cert = is_perfect(FiniteGramPairing(n, left, right, tuple(map(tuple, gram))))
        return {"perfect": cert.verdict, "kernel_exponents": enc_vec(cert.kernel_exponents),
                "left_cardinality": enc(cert.left_cardinality),
                "right_cardinality": enc(cert.right_cardinality)}
    prec = dec(payload.get("precision", 1), "precision")
    if prec < 1:
        raise StructuralError("precision must be positive")
    res = check_unimodular_free(FreeGramPairing(p, prec, tuple(map(tuple, gram))))
    out: dict[str, Any] = {
        "unimodular": res.unimodular,
        "reason": res.reason,
        "divisor_valuations": [{"valuation": enc(v), "exact": e} for v, e in res.divisor_valuations],
    }
    if res.certificate is not None:
        uc = res.certificate
        out["certificate"] = {"precision": enc(uc.precision), "gram": enc_mat(uc.gram),
                              "P": enc_mat(uc.P), "Q": enc_mat(uc.Q)}
    return out


def _util_dual_partner(payload: dict, window: int) -> dict:
    tower_obj = payload.get("tower")
    if tower_obj is None:
        tower_obj = _load_json(require(payload, "tower_file", "dual-partner"))
    tower = Tower.from_json(tower_obj)
    h = dec_vec(require(payload, "h", "dual-partner"), "h")
    return find_dual_partner(tower, h, window=window).to_json()


def cmd_util(args) -> int:
    payload = _load_json(args.input)
    if not isinstance(payload, dict):
        raise UsageError("payload must be a JSON object")
    try:
        if args.op == "snf":
            out = _util_snf(payload)
        elif args.op == "decompose":
            out = _util_decompose(payload)
        elif args.op == "pairing-check":
            out = _util_pairing(payload)
        else:
            out = _util_dual_partner(payload, args.window)
    except DomainError as exc:
        _write(None, {"format": FORMAT, "error": {"kind": "domain", "message": str(exc)}})
        return EXIT_VIOLATION
    out["format"] = FORMAT
    _write(None, out)
    if out.get("replayed") is False:
        return EXIT_VIOLATION
    return EXIT_PASS


# --------------------------------------------------------------------------
# replay


def cmd_replay(args) -> int:
    cert = _load_json(args.certificate)
    tower = Tower.from_json(_load_json(args.tower))
    problems = replay_certificate(cert, tower)
    if args.report:
        _write(args.report, {"format": FORMAT, "command": ["replay", args.certificate, args.tower],
                             "inputs": [{"path": args.certificate, "digest": digest(cert)},
                                        {"path": args.tower, "digest": tower.digest()}],
                             "verdict": "pass" if not problems else "violation",
                             "problems": problems})
    if problems:
        print(f"replay failed: {problems[0]}", file=sys.stderr)
        return EXIT_VIOLATION
    print("replay ok")
    return EXIT_PASS


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towercert",
        description="Certify unimodularity of limit pairings of towers of perfect pairings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a fixture tower and its ground truth")
    gsub = gen.add_subparsers(dest="kind", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="tower JSON path (default: stdout)")
    common.add_argument("--truth", help="ground-truth JSON path (default: next to --out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--horizon", type=int)

    syn = gsub.add_parser("synthetic", parents=[common], help="block-built tower")
    syn.add_argument("--prime", type=int, required=True)
    syn.add_argument("--rank", type=int, default=0)
    syn.add_argument("--core", type=_int_list, help="row-major core matrix, e.g. 1,2,3,4")
    syn.add_argument("--torsion", type=_int_list, help="torsion exponents, e.g. 2,1")
    syn.add_argument("--units", type=_int_list, help="torsion pairing units")
    syn.add_argument("--noise-horizon", type=int, default=0)
    syn.add_argument("--noise-rank", type=int, default=1)

    srf = gsub.add_parser("surface", parents=[common], help="surface cohomology tower")
    srf.add_argument("--surface", default="torus", help="sphere, torus or genus-<g>")
    srf.add_argument("--prime", type=int, required=True)
    srf.add_argument("--degree", type=int, default=1)

    rnd = gsub.add_parser("random", parents=[common], help="randomly conjugated synthetic tower")
    rnd.add_argument("--prime", type=int, help="fix the prime (default: draw from 2, 3, 5)")
    rnd.add_argument("--max-rank", type=int, default=4)
    rnd.add_argument("--max-torsion-count", type=int, default=2)
    rnd.add_argument("--max-torsion-exponent", type=int, default=3)
    rnd.add_argument("--max-noise-horizon", type=int, default=3)

    ver = sub.add_parser("verify", help="run the certification pipeline on tower files")
    ver.add_argument("towers", nargs="+", metavar="TOWER")
    ver.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    ver.add_argument("--report", help="write a JSON run report")
    ver.add_argument("--certificate", help="write the certificate(s) produced")

    utl = sub.add_parser("util", help="one-shot algebra operations on a JSON payload")
    utl.add_argument("op", choices=["snf", "decompose", "pairing-check", "dual-partner"])
    utl.add_argument("input", nargs="?", help="payload file (default: stdin)")
    utl.add_argument("--window", type=int, default=DEFAULT_WINDOW)

    rep = sub.add_parser("replay", help="re-check a certificate against a tower")
    rep.add_argument("certificate")
    rep.add_argument("tower")
    rep.add_argument("--report")
    return parser


COMMANDS = {"generate": cmd_generate, "verify": cmd_verify, "util": cmd_util, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except InconclusiveError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (TowerCertError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
