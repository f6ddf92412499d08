"""JSON encodings.  Every integer is written as a decimal string."""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .errors import StructuralError

FORMAT = 1


def enc(x: int) -> str:
    return str(int(x))


def dec(x: Any, what: str = "integer") -> int:
    if isinstance(x, bool) or not isinstance(x, (str, int)):
        raise StructuralError(f"{what}: expected a decimal string, got {x!r}")
    try:
        return int(x)
    except ValueError:
        raise StructuralError(f"{what}: {x!r} is not a decimal integer") from None


def enc_vec(v) -> list[str]:
    return [enc(x) for x in v]


def dec_vec(v: Any, what: str = "vector") -> list[int]:
    if not isinstance(v, list):
        raise StructuralError(f"{what}: expected a list")
    return [dec(x, what) for x in v]


def enc_mat(m) -> list[list[str]]:
    return [enc_vec(r) for r in m]


def dec_mat(m: Any, what: str = "matrix") -> list[list[int]]:
    if not isinstance(m, list):
        raise StructuralError(f"{what}: expected a list of rows")
    rows = [dec_vec(r, what) for r in m]
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise StructuralError(f"{what}: ragged rows")
    return rows


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_dumps(obj).encode()).hexdigest()


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def require(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise StructuralError(f"{where}: missing field {key!r}")
    return obj[key]
