"""Session-wide fixtures: disk meshes, correctors and stiffness matrices.

The cross-section solves are by far the most expensive shared objects, so
they are computed once per session at the refinement levels the tests need
and handed out read-only.  Tests must not mutate these.
"""

import numpy as np
import pytest

from rodlimit.cross_section import build_disk_mesh, compute_A, solve_correctors
from rodlimit.material import SvkMaterial, isotropic_q6


@pytest.fixture(scope="session")
def unit_material():
    return SvkMaterial(lam=1.0, mu=1.0)


@pytest.fixture(scope="session")
def unit_form(unit_material):
    return isotropic_q6(unit_material)


@pytest.fixture(scope="session")
def disk_meshes():
    return {level: build_disk_mesh(level) for level in (2, 3, 4)}


@pytest.fixture(scope="session")
def unit_correctors(unit_form, disk_meshes):
    return {
        level: solve_correctors(unit_form, mesh)
        for level, mesh in disk_meshes.items()
    }


@pytest.fixture(scope="session")
def unit_A(unit_form, disk_meshes, unit_correctors):
    return {
        level: compute_A(unit_form, disk_meshes[level], unit_correctors[level])
        for level in disk_meshes
    }


@pytest.fixture(scope="session")
def rng_factory():
    """Fresh, seeded generators so test order never changes random draws."""

    def make(seed):
        return np.random.default_rng(seed)

    return make
