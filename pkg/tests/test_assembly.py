import numpy as np
import pytest
import scipy.sparse as sp

from poroblock.assembly import (PhysicalParams, assemble_a0, assemble_blocks,
                                assemble_rhs)
from poroblock.errors import ConfigurationError
from poroblock.mesh import build_structured_simplicial, element_geometry
from poroblock.problems import (layered_strip_params, make_scenario,
                                zero_scenario)
from poroblock.quadrature import facet_rule
from poroblock.spaces import BRLocalBasis, dirichlet_constraints

from conftest import make_problem


def test_params_validation():
    p = PhysicalParams.from_young_poisson(1.0, 0.25)
    assert abs(p.lam - 0.4) < 1e-15 and abs(p.mu - 0.4) < 1e-15
    assert abs(p.eps - 2 * p.mu / p.lam) < 1e-15
    with pytest.raises(ConfigurationError):
        PhysicalParams(mu=-1.0, lam=1.0)
    with pytest.raises(ConfigurationError):
        PhysicalParams(mu=1.0, lam=1.0, alpha=1.5)
    with pytest.raises(ConfigurationError):
        PhysicalParams(mu=1.0, lam=1.0, kappa=0.0)
    with pytest.raises(ConfigurationError):
        PhysicalParams(mu=1.0, lam=1.0, dt=0.0)


def test_pressure_mass_two_triangles():
    mesh = build_structured_simplicial(1, 2)
    scen = zero_scenario(2)
    dofs = dirichlet_constraints(mesh, scen, 0.0)
    blocks = assemble_blocks(mesh, dofs, PhysicalParams(mu=1.0, lam=1.0))
    assert np.allclose(blocks.Mp, [0.5, 0.5])


def test_a1_symmetric_and_positive_definite(problem_I):
    _, _, _, _, blocks = problem_I
    diff = blocks.A1_full - blocks.A1_full.T
    assert abs(diff).max() if diff.nnz else 0.0 <= 1e-13
    eigs = np.linalg.eigvalsh(blocks.A1.toarray())
    assert eigs.min() > 0.0


def test_a0_identity_entrywise(problem_I):
    mesh, _, _, _, blocks = problem_I
    a0 = assemble_a0(mesh)
    a0_from_b = blocks.Bc_full.T @ sp.diags(1.0 / blocks.Mp) @ blocks.Bc_full
    diff = (a0 - a0_from_b).tocoo()
    scale = abs(a0).max()
    assert (abs(diff.data).max() if diff.nnz else 0.0) <= 1e-13 * max(1, scale)


def test_divergence_of_translations_vanishes(problem_I):
    mesh, _, _, dofs, blocks = problem_I
    d = mesh.dim
    for c in range(d):
        coef = np.zeros(dofs.n_u)
        coef[c:mesh.num_vertices * d:d] = 1.0
        assert np.abs(blocks.Bc_full @ coef).max() < 1e-14


def test_nullspace_pure_vs_mixed(problem_I, problem_II):
    _, _, _, _, blocks_I = problem_I
    ones = np.ones(blocks_I.Bc.shape[0])
    assert np.linalg.norm(blocks_I.Bc.T @ ones) <= 1e-12 * abs(blocks_I.Bc).max()
    _, _, _, _, blocks_II = problem_II
    bt = blocks_II.Bc.toarray().T
    assert np.linalg.matrix_rank(bt) == bt.shape[1]


def test_d_structure(problem_I):
    _, _, params, dofs, blocks = problem_I
    embed = np.concatenate([blocks.Mp, np.zeros(dofs.num_facets)])
    expected = (params.c0 * sp.diags(embed[dofs.free_p])
                + params.dt * blocks.Ap)
    diff = (blocks.D - expected).tocoo()
    assert (abs(diff.data).max() if diff.nnz else 0.0) == 0.0
    # D is symmetric positive definite for c0 > 0 with Dirichlet pressure
    eigs = np.linalg.eigvalsh(blocks.D.toarray())
    assert eigs.min() > 0.0


def test_kappa_scaling_of_ap():
    mesh = build_structured_simplicial(2, 2)
    scen = zero_scenario(2)
    dofs = dirichlet_constraints(mesh, scen, 0.0)
    b1 = assemble_blocks(mesh, dofs, PhysicalParams(mu=1.0, lam=1.0,
                                                    kappa=1.0))
    b3 = assemble_blocks(mesh, dofs, PhysicalParams(mu=1.0, lam=1.0,
                                                    kappa=3.0))
    diff = (b3.Ap_full - 3.0 * b1.Ap_full).tocoo()
    assert (abs(diff.data).max() if diff.nnz else 0.0) < 1e-13
    # elementwise kappa: doubling kappa on a subset changes only those rows
    kap = np.ones(mesh.num_elements)
    kap[:4] = 2.0
    bk = assemble_blocks(mesh, dofs, PhysicalParams(mu=1.0, lam=1.0,
                                                    kappa=kap))
    ref = b1.Ap_full.toarray()
    out = bk.Ap_full.toarray()
    assert not np.allclose(out, ref)
    assert abs(out - ref).max() <= abs(ref).max() + 1e-12


def test_zero_data_gives_zero_rhs():
    mesh, scen, params, dofs, blocks = make_problem(n=2, scenario_kind="I")
    zero = zero_scenario(2)
    zdofs = dirichlet_constraints(mesh, zero, params.dt)
    b1, b2 = assemble_rhs(blocks, zero, params.dt, dofs=zdofs)
    assert np.abs(b1).max() == 0.0
    assert np.abs(b2).max() == 0.0


def test_source_term_interior_rows():
    mesh = build_structured_simplicial(2, 2)
    scen = zero_scenario(2)
    scen.s = lambda pts, t: np.ones(np.atleast_2d(pts).shape[0])
    params = PhysicalParams(mu=1.0, lam=1.0, dt=1e-3)
    dofs = dirichlet_constraints(mesh, scen, params.dt)
    blocks = assemble_blocks(mesh, dofs, params)
    b1, b2 = assemble_rhs(blocks, scen, params.dt)
    ne = mesh.num_elements
    assert np.allclose(b2[:ne], -params.dt * blocks.Mp)
    assert np.abs(b2[ne:]).max() == 0.0
    assert np.abs(b1).max() == 0.0


def test_traction_against_facet_integral_oracle():
    """Constant traction on the right edge: entries equal the analytic trace
    integrals (|e| t / 2 for vertex dofs, |e| (t.n) / 6 for the bubble)."""
    mesh = build_structured_simplicial(2, 2)
    scen = zero_scenario(2, mixed=True)
    tvec = np.array([0.4, -0.7])
    scen.t_n = lambda pts, t, n: np.tile(tvec, (np.atleast_2d(pts).shape[0], 1))
    params = PhysicalParams(mu=1.0, lam=1.0, dt=1e-3)
    dofs = dirichlet_constraints(mesh, scen, params.dt)
    blocks = assemble_blocks(mesh, dofs, params)
    b1, _ = assemble_rhs(blocks, scen, params.dt)
    nv, d = mesh.num_vertices, 2
    full = np.zeros(dofs.n_u)
    full[dofs.free_u] = b1
    right = mesh.boundary_facets("right")
    # vertex contributions: each right-edge vertex gathers |e| t / 2 per facet
    counts = np.zeros(nv)
    for f in right:
        for v in mesh.facets[f]:
            counts[v] += 1
    area = 0.5
    for v in np.where(counts > 0)[0]:
        vdofs = [v * d, v * d + 1]
        for c, dof in enumerate(vdofs):
            if dof in dofs.free_u:
                assert abs(full[dof] - counts[v] * area * tvec[c] / 2) < 1e-14
    # bubble contributions: |e| (t.n) / 6 with n = (1, 0)
    for f in right:
        dof = nv * d + f
        assert abs(full[dof] - area * tvec[0] / 6) < 1e-14


def test_flux_rows_scaled_by_dt():
    mesh = build_structured_simplicial(2, 2)
    scen = zero_scenario(2, mixed=True)
    scen.p_n = lambda pts, t, n: np.full(np.atleast_2d(pts).shape[0], 2.0)
    params = PhysicalParams(mu=1.0, lam=1.0, dt=1e-3)
    dofs = dirichlet_constraints(mesh, scen, params.dt)
    blocks = assemble_blocks(mesh, dofs, params)
    _, b2 = assemble_rhs(blocks, scen, params.dt)
    full = np.zeros(dofs.n_p)
    full[dofs.free_p] = b2
    ne = mesh.num_elements
    for f in mesh.boundary_facets("right"):
        assert abs(full[ne + f] - (-params.dt * 0.5 * 2.0)) < 1e-15


def test_previous_step_coupling():
    mesh, scen, params, dofs, blocks = make_problem(n=2, scenario_kind="I")
    zero = zero_scenario(2)
    zdofs = dirichlet_constraints(mesh, zero, params.dt)
    rng = np.random.default_rng(3)
    prev_u = rng.standard_normal(dofs.n_u)
    prev_p = rng.standard_normal(dofs.n_p)
    b1, b2 = assemble_rhs(blocks, zero, params.dt, prev_u=prev_u,
                          prev_p=prev_p, dofs=zdofs)
    ne = mesh.num_elements
    expected = -(params.alpha * (blocks.Bc_full @ prev_u)
                 + params.c0 * blocks.Mp * prev_p[:ne])
    full = np.zeros(dofs.n_p)
    full[zdofs.free_p] = b2
    assert np.allclose(full[:ne], expected)
    assert np.abs(b1).max() == 0.0


def test_layered_params_assembly():
    mesh = build_structured_simplicial(6, 2)
    params = layered_strip_params(mesh, 1e-3)
    assert not params.uniform_elastic
    assert params.mu_elements.shape == (mesh.num_elements,)
    scen = zero_scenario(2)
    dofs = dirichlet_constraints(mesh, scen, 0.0)
    blocks = assemble_blocks(mesh, dofs, params)
    # strain stiffness carries the 2 mu_K weights: scale a uniform assembly
    uni = assemble_blocks(mesh, dofs, PhysicalParams(mu=1.0, lam=1.0))
    # top band elements are much stiffer
    bary_y = mesh.vertices[mesh.elements].mean(axis=1)[:, 1]
    top = bary_y > 2 / 3
    assert params.mu_elements[top].min() > 100 * params.mu_elements[~top].max()
    assert blocks.A1_full.diagonal().max() > 100 * uni.A1_full.diagonal().max()
