"""Shared fixtures: a small nonuniform mesh hierarchy and cached spaces."""

import numpy as np
import pytest

from cordesfem import (
    SpaceConfig,
    build_space,
    refine_conforming,
    uniform_refine,
    unit_square_mesh,
)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260826)


@pytest.fixture(scope="session")
def mesh_hierarchy():
    """Four levels: uniform start, then alternating local and global refines,
    so face configurations include hanging-node closure artifacts."""
    levels = [unit_square_mesh(2)]
    m = refine_conforming(levels[0], {0, 3})
    levels.append(m)
    levels.append(uniform_refine(m))
    levels.append(refine_conforming(levels[-1], set(range(0, levels[-1].n_elements, 3))))
    return levels


@pytest.fixture(scope="session")
def spaces(mesh_hierarchy):
    """Space cache keyed by (level, p, s)."""
    cache = {}

    def get(level, p, s):
        key = (level, p, s)
        if key not in cache:
            cache[key] = build_space(mesh_hierarchy[level], SpaceConfig(p=p, s=s))
        return cache[key]

    return get
