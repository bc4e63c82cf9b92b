"""Shared fixtures: small systems and deterministic signals.

Unit tests run on reduced grids (res 2 or 3, nil window (0, 1)) so the whole
suite stays fast; the acceptance tests exercise the full desk-scale sizes.
"""

import pytest

from twistedhaar import EuclidSystem, NilSystem, Profile, random_signal
from twistedhaar.shards import make_factors


@pytest.fixture(scope="session")
def sys2():
    return EuclidSystem(m=1, extent_exp=0, res_exp=2)


@pytest.fixture(scope="session")
def sys3():
    return EuclidSystem(m=1, extent_exp=0, res_exp=3)


@pytest.fixture(scope="session")
def ns1():
    return NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=1)


@pytest.fixture(scope="session")
def ns2():
    return NilSystem(dims=(1, 1, 1), kappa=0, cell_scale=0, top_scale=2)


def signal(system, seed, law="uniform"):
    return random_signal(system.grid, seed, law)


@pytest.fixture
def zero_specs():
    return make_factors(0)


@pytest.fixture
def stair_specs():
    profiles = [Profile.staircase(1, 1, 11 + mu) for mu in (1, 2, 3)]
    return make_factors(0, profiles)
