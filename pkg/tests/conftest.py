import numpy as np
import pytest

from poroblock.assembly import PhysicalParams, assemble_blocks
from poroblock.mesh import build_structured_simplicial
from poroblock.problems import make_scenario
from poroblock.spaces import dirichlet_constraints


@pytest.fixture(scope="session")
def mesh2():
    return build_structured_simplicial(4, 2)


@pytest.fixture(scope="session")
def mesh3():
    return build_structured_simplicial(2, 3)


def make_problem(n=4, dim=2, scenario_kind="I", lam=1.0, dt=1e-3, t=None,
                 mu=1.0):
    """Mesh + scenario + params + constraints + assembled blocks."""
    mesh = build_structured_simplicial(n, dim)
    scenario = make_scenario(scenario_kind, dim, mu=mu, lam=lam)
    params = PhysicalParams(mu=mu, lam=lam, dt=dt)
    dofs = dirichlet_constraints(mesh, scenario, dt if t is None else t)
    blocks = assemble_blocks(mesh, dofs, params)
    return mesh, scenario, params, dofs, blocks


@pytest.fixture(scope="session")
def problem_I():
    return make_problem(n=4, scenario_kind="I", lam=1e4)


@pytest.fixture(scope="session")
def problem_II():
    return make_problem(n=4, scenario_kind="II", lam=1e4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240311)
