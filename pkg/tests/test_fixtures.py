import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from towercert.errors import StructuralError
from towercert.fixtures import (
    RandomBounds,
    SyntheticSpec,
    random_automorphism,
    random_spec,
    random_tower,
    recommended_horizon,
    synthetic_tower,
)
from towercert.linalg import matmul
from towercert.serialization import dumps
from towercert.tower import stabilize, validate_tower, verify_theorem


def test_spec_invariants():
    with pytest.raises(StructuralError, match="not a unit"):
        SyntheticSpec(3, 2, core=((1, 2), (2, 4)))
    with pytest.raises(StructuralError):
        SyntheticSpec(3, 1, (1,), ((1,),), (3,))
    with pytest.raises(StructuralError, match="minimum"):
        SyntheticSpec(3, 1, (2,), ((1,),), noise_horizon=1, horizon=4)
    with pytest.raises(StructuralError):
        SyntheticSpec(4, 1, core=((1,),))


def test_recommended_horizon():
    assert recommended_horizon((), 0) == 4
    assert recommended_horizon((3,), 0) == 9
    assert recommended_horizon((1,), 3) == 7


def test_synthetic_core_example():
    t, truth = synthetic_tower(SyntheticSpec(3, 2, (), ((1, 2), (3, 4)), horizon=5))
    rep = verify_theorem(t)
    assert rep.ok and truth.n0 == 1 and truth.core == [[1, 2], [3, 4]]


def test_synthetic_rank_zero_example():
    t, truth = synthetic_tower(SyntheticSpec(2, 0, (2, 1)))
    rep = verify_theorem(t)
    assert rep.ok and rep.limits["H"].module.rank == 0
    assert rep.limits["H"].module.torsion == (2, 1)


def test_synthetic_noise_example():
    t, truth = synthetic_tower(SyntheticSpec(5, 1, (1,), ((2,),), noise_horizon=2, horizon=7))
    assert stabilize(t, "H").n0 == 3 == truth.n0


def test_truth_sidecar_is_json():
    _, truth = synthetic_tower(SyntheticSpec(3, 1, (2,), ((2,),), noise_horizon=1))
    text = dumps(truth.to_json())
    assert '"format": 1' in text and '"n0": "2"' in text


def test_random_tower_deterministic():
    a, _ = random_tower(1)
    b, _ = random_tower(1)
    assert dumps(a.to_json()) == dumps(b.to_json())
    assert validate_tower(a).ok
    assert dumps(random_tower(2)[0].to_json()) != dumps(a.to_json())


def test_random_tower_zero_bounds():
    t, truth = random_tower(4, RandomBounds(max_rank=0, max_torsion_count=0, max_noise_horizon=0))
    assert all(lev.H.rank == 0 and lev.T.rank == 0 for lev in t.levels)
    assert verify_theorem(t).ok


def test_bounds_must_be_sane():
    with pytest.raises(StructuralError):
        RandomBounds(primes=())
    with pytest.raises(StructuralError):
        RandomBounds(primes=(6,))


@given(st.sampled_from([2, 3, 5]), st.lists(st.integers(1, 4), max_size=4), st.integers(0, 10**9))
def test_random_automorphism_is_invertible(p, exps, seed):
    import random

    exps = sorted(exps, reverse=True)
    a, ainv = random_automorphism(random.Random(seed), p, exps)
    k = len(exps)
    prod = matmul(a, ainv, inner=k, cols=k)
    orders = [p**e for e in exps]
    assert [[x % o for x in r] for r, o in zip(prod, orders)] == [
        [int(i == j) for j in range(k)] for i in range(k)
    ]
    # entries respect the orders of the summands
    for i, ei in enumerate(exps):
        for j, ej in enumerate(exps):
            assert a[i][j] % p ** max(0, ei - ej) == 0


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_random_towers_match_ground_truth(seed):
    t, truth = random_tower(seed)
    rep = verify_theorem(t)
    assert rep.ok
    for side in "HT":
        assert rep.stabilization[side].n0 == truth.n0
        assert rep.limits[side].module.rank == truth.rank
        assert rep.limits[side].module.torsion == truth.torsion


def test_random_spec_within_bounds():
    b = RandomBounds()
    for seed in range(50):
        s = random_spec(seed, b)
        assert s.prime in b.primes and s.rank <= b.max_rank
        assert all(c <= b.max_torsion_exponent for c in s.torsion)
        assert s.noise_horizon <= b.max_noise_horizon
