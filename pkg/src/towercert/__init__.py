"""Exact linear algebra over Z/l^n and certified limit pairings of towers."""

from .errors import (
    DomainError,
    InconclusiveError,
    NotUnimodularError,
    PrecisionError,
    StructuralError,
    TowerCertError,
)
from .fixtures import RandomBounds, SyntheticSpec, random_tower, synthetic_tower
from .surfaces import SurfaceSpec, surface_tower
from .tower import (
    Tower,
    find_dual_partner,
    limit_module,
    limit_pairing,
    replay_certificate,
    stabilize,
    validate_tower,
    verify_theorem,
)

__version__ = "0.1.0"
