"""Shared fixtures: cached mesh hierarchies so tests don't rebuild them.

One refinement lineage per domain — meshes of different depths share
parents, so prolongation between cached levels works.
"""

import pytest

from dirfem.geometry import builtin_domain
from dirfem.meshing import bisect_refine, initial_mesh

_hierarchies: dict = {}


def _mesh(name: str, passes: int):
    chain = _hierarchies.setdefault(name, [initial_mesh(builtin_domain(name))])
    while len(chain) <= passes:
        chain.append(bisect_refine(chain[-1]))
    return chain[passes]


@pytest.fixture
def mesh_at():
    """mesh_at(domain_name, passes) -> cached TriMesh of that refinement."""
    return _mesh
