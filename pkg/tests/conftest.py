"""Shared fixtures.

Meshes and discretizations are cached per session: they are immutable after
construction, and rebuilding the level-2 packs for every test dominates the
suite's runtime otherwise.
"""

import numpy as np
import pytest

from hholps import generate_mesh
from hholps.cases import get_case
from hholps.system import Discretization

FAMILIES = ("triangular", "cartesian", "hexagonal")

_mesh_cache = {}
_disc_cache = {}


def mesh(family: str, level: int):
    key = (family, level)
    if key not in _mesh_cache:
        _mesh_cache[key] = generate_mesh(family, level)
    return _mesh_cache[key]


def discretization(family: str, level: int, k: int, case_name: str = "smooth",
                   epsilon=None, macro: str = "trivial") -> Discretization:
    key = (family, level, k, case_name, epsilon, macro)
    if key not in _disc_cache:
        case = get_case(case_name, epsilon=epsilon)
        _disc_cache[key] = Discretization(mesh(family, level), k, case.coeffs,
                                          macro=macro)
    return _disc_cache[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
