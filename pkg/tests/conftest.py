"""Shared benchmark fixtures.

The equilateral three-centre configuration (unit side, alpha = 1.5, h = 1)
is the workhorse: its Jacobi curvature is negative everywhere, every omega
class has a collision-less minimizer, and the section segments are straight
by symmetry.
"""

import numpy as np
import pytest

from ncentre.geometry import FlatPlane, FlatTorus
from ncentre.potential import CentreSpec, PotentialField
from ncentre.topology import default_rays, word_for_class
from ncentre.variational import MinimizeConfig, initial_loop, minimize_in_class


EQUILATERAL_ANGLES = np.pi / 2 + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
CIRCUMRADIUS = 1.0 / np.sqrt(3.0)  # unit side


def equilateral_positions():
    return CIRCUMRADIUS * np.column_stack(
        [np.cos(EQUILATERAL_ANGLES), np.sin(EQUILATERAL_ANGLES)])


@pytest.fixture(scope="session")
def bench_field():
    centres = tuple(CentreSpec(tuple(p), mass=1.0, exponent=1.5)
                    for p in equilateral_positions())
    return PotentialField(metric=FlatPlane(), centres=centres, energy=1.0)


@pytest.fixture(scope="session")
def bench_rays(bench_field):
    return default_rays(bench_field.positions, bench_field.metric)


@pytest.fixture(scope="session")
def kepler_field():
    return PotentialField(metric=FlatPlane(),
                          centres=(CentreSpec((0.0, 0.0)),), energy=1.0)


@pytest.fixture(scope="session")
def torus_field():
    return PotentialField(metric=FlatTorus(1.0, 1.0),
                          centres=(CentreSpec((0.5, 0.5)),), energy=1.0)


@pytest.fixture(scope="session")
def bench_minimizer(bench_field):
    """Converged omega^3_{1,1} minimizer at n = 512 (shared, fast)."""
    word = word_for_class(3, 1, 1)
    init = initial_loop(word, bench_field, n_points=512, seed=1)
    return minimize_in_class(word, init, bench_field,
                             MinimizeConfig(max_iters=10_000))


@pytest.fixture(scope="session")
def bench_system(bench_field):
    from ncentre.flow import build_section_system
    return build_section_system(bench_field)
