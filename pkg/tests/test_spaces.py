import numpy as np
import pytest

from poroblock.mesh import (build_structured_simplicial, element_geometry,
                            make_mesh, mesh_geometry)
from poroblock.problems import make_scenario, zero_scenario
from poroblock.quadrature import facet_rule, simplex_rule
from poroblock.spaces import (BRLocalBasis, avg_divergence, br_basis,
                              dirichlet_constraints, rt0_value, update_lift,
                              wg_local_operators, wg_weak_gradient)


@pytest.fixture(scope="module")
def tri_geom():
    mesh = make_mesh(2, [[0.1, 0.2], [0.9, 0.3], [0.4, 1.1]], [[0, 1, 2]])
    return element_geometry(mesh, 0)


@pytest.fixture(scope="module")
def ref_tri_geom():
    mesh = make_mesh(2, [[0., 0.], [1., 0.], [0., 1.]], [[0, 1, 2]])
    return element_geometry(mesh, 0)


def _random_bary(rng, npts, nverts):
    raw = rng.random((npts, nverts))
    return raw / raw.sum(axis=1, keepdims=True)


def test_vertex_functions_reproduce_constants(tri_geom, rng):
    basis = br_basis(tri_geom)
    bary = _random_bary(rng, 10, 3)
    vals = basis.values(bary)
    # coefficients of the constant field (1, 0): every x-component vertex dof
    coef = np.zeros(9)
    coef[0::2][:3] = 1.0
    field = np.einsum("l,qld->qd", coef, vals)
    assert np.abs(field - [1.0, 0.0]).max() < 1e-14


def test_linear_field_gradient_reproduced(tri_geom, rng):
    basis = br_basis(tri_geom)
    mesh = make_mesh(2, [[0.1, 0.2], [0.9, 0.3], [0.4, 1.1]], [[0, 1, 2]])
    verts = mesh.vertices[mesh.elements[0]]
    bary = _random_bary(rng, 6, 3)
    # u(x, y) = (x, -y): vertex dofs interpolate exactly
    coef = np.zeros(9)
    for v in range(3):
        coef[2 * v] = verts[v, 0]
        coef[2 * v + 1] = -verts[v, 1]
    grads = basis.gradients(bary)
    g = np.einsum("l,qlab->qab", coef, grads)
    exact = np.array([[1.0, 0.0], [0.0, -1.0]])
    assert np.abs(g - exact).max() < 1e-14


def test_edge_bubble_midpoint_value(ref_tri_geom):
    basis = br_basis(ref_tri_geom)
    # midpoint of the facet opposite vertex 0 (vertices 1 and 2)
    bary = np.array([[0.0, 0.5, 0.5]])
    vals = basis.values(bary)
    bubble = vals[0, 6]  # first bubble dof
    assert np.allclose(bubble, 0.25 * ref_tri_geom.normals[0])


def test_bubble_vanishes_at_vertices_and_other_facets(tri_geom):
    basis = br_basis(tri_geom)
    corners = np.eye(3)
    assert np.abs(basis.values(corners)[:, 6:, :]).max() < 1e-15
    # on facet 1 (lambda_1 = 0), bubbles 0 and 2 vanish
    bary = np.array([[0.3, 0.0, 0.7], [0.6, 0.0, 0.4]])
    vals = basis.values(bary)
    assert np.abs(vals[:, [6, 8], :]).max() < 1e-15
    assert np.abs(vals[:, 7, :]).max() > 0.0


def test_weak_gradient_of_constant_vanishes(tri_geom):
    g = wg_weak_gradient(tri_geom, 3.7, [3.7, 3.7, 3.7])
    vals = rt0_value(tri_geom, g, np.array([[1 / 3, 1 / 3, 1 / 3]]))
    assert np.abs(vals).max() < 1e-13


def test_weak_gradient_exact_on_linears():
    """Averaged interpolant of a global linear has weak gradient equal to the
    true gradient on every element."""
    mesh = build_structured_simplicial(3, 2)
    geometry = mesh_geometry(mesh)
    grad = np.array([2.0, -1.0])

    def p(pts):
        return pts @ grad + 0.3

    fb, fw = facet_rule(2, 3)
    coeff, _, mass = wg_local_operators(geometry, mesh)
    for k in range(mesh.num_elements):
        verts = mesh.vertices[mesh.elements[k]]
        center = verts.mean(axis=0)
        p_int = p(center[None])[0]
        p_fac = np.empty(3)
        for i in range(3):
            fverts = np.delete(verts, i, axis=0)
            p_fac[i] = fw @ p(fb @ fverts)
        g = coeff[k] @ np.concatenate([[p_int], p_fac])
        geom = element_geometry(mesh, k)
        vals = rt0_value(geom, g, np.array([[1 / 3, 1 / 3, 1 / 3],
                                            [0.5, 0.25, 0.25]]))
        assert np.abs(vals - grad).max() < 1e-13


def test_weak_gradient_brute_force_reference_triangle(ref_tri_geom):
    """p_int = 1, facet values 0: solve the 3x3 RT0 mass system directly."""
    d = 2
    geom = ref_tri_geom
    bary, wts = simplex_rule(2, 2)
    verts = np.array([[0., 0.], [1., 0.], [0., 1.]])
    pts = bary @ verts
    c = geom.facet_areas / (d * geom.volume)
    mass = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            integrand = np.einsum("qd,qd->q", pts - verts[i], pts - verts[j])
            mass[i, j] = c[i] * c[j] * geom.volume * np.dot(wts, integrand)
    rhs = -1.0 * geom.facet_areas   # (g, w) = -(1, div w)_K

    expected = np.linalg.solve(mass, rhs)
    g = wg_weak_gradient(geom, 1.0, [0.0, 0.0, 0.0])
    assert np.abs(g - expected).max() < 1e-13


def test_avg_divergence_translations_and_linear(tri_geom):
    div = avg_divergence(br_basis(tri_geom))
    # rigid translation (1, 0) and (0, 1)
    for c in range(2):
        coef = np.zeros(9)
        coef[c::2][:3] = 1.0
        assert abs(coef @ div) < 1e-14
    # u = (x, y) has divergence 2
    mesh = make_mesh(2, [[0.1, 0.2], [0.9, 0.3], [0.4, 1.1]], [[0, 1, 2]])
    verts = mesh.vertices[mesh.elements[0]]
    coef = np.zeros(9)
    for v in range(3):
        coef[2 * v] = verts[v, 0]
        coef[2 * v + 1] = verts[v, 1]
    assert abs(coef @ div - 2.0) < 1e-13


def test_avg_divergence_bubble_vs_boundary_integral(ref_tri_geom):
    """Facet-quadrature oracle for int_e phi.n / |K|."""
    geom = ref_tri_geom
    div = avg_divergence(br_basis(geom))
    basis = br_basis(geom)
    fb, fw = facet_rule(2, 5)
    verts = np.array([[0., 0.], [1., 0.], [0., 1.]])
    for i in range(3):
        fverts = np.delete(np.arange(3), i)
        bary = np.zeros((fb.shape[0], 3))
        bary[:, fverts[0]] = fb[:, 0]
        bary[:, fverts[1]] = fb[:, 1]
        vals = basis.values(bary)[:, 6 + i, :]
        flux = geom.facet_areas[i] * np.dot(fw, vals @ geom.normals[i])
        assert abs(div[6 + i] - flux / geom.volume) < 1e-14


def _constrained_sets(mesh, scenario, t=0.0):
    return dirichlet_constraints(mesh, scenario, t)


def test_scenario_I_constrains_whole_boundary():
    mesh = build_structured_simplicial(3, 2)
    scen = make_scenario("I", 2, mu=1.0, lam=1.0)
    dofs = _constrained_sets(mesh, scen)
    nv, d = mesh.num_vertices, 2
    boundary_facets = mesh.boundary_facets()
    boundary_verts = np.unique(mesh.facets[boundary_facets].ravel())
    expected_u = {v * d + c for v in boundary_verts for c in range(d)}
    expected_u |= {nv * d + f for f in boundary_facets}
    assert set(dofs.cons_u) == expected_u
    assert set(dofs.cons_p) == {mesh.num_elements + f
                                for f in boundary_facets}
    # pressure dof count after elimination
    assert dofs.n_free_p == mesh.num_elements + mesh.num_facets - len(
        boundary_facets)


def test_scenario_II_leaves_right_face_free():
    mesh = build_structured_simplicial(3, 2)
    scen = make_scenario("II", 2, mu=1.0, lam=1.0)
    dofs = _constrained_sets(mesh, scen)
    right = mesh.boundary_facets("right")
    nv, d = mesh.num_vertices, 2
    for f in right:
        assert nv * d + f in dofs.free_u
        assert mesh.num_elements + f in dofs.free_p
    # Dirichlet wins at the corners: vertices of the right edge that also lie
    # on top/bottom facets stay constrained
    corner_ids = [v for v in np.unique(mesh.facets[right].ravel())
                  if mesh.vertices[v, 1] in (0.0, 1.0)]
    assert corner_ids
    for v in corner_ids:
        assert v * d in dofs.cons_u and v * d + 1 in dofs.cons_u


def test_zero_time_lift_is_zero():
    mesh = build_structured_simplicial(2, 2)
    scen = make_scenario("I", 2, mu=1.0, lam=1.0)
    dofs = _constrained_sets(mesh, scen, t=0.0)
    assert np.abs(dofs.u_values).max() == 0.0
    assert np.abs(dofs.p_values).max() == 0.0


def test_bubble_lift_matches_normal_flux_moment():
    mesh = build_structured_simplicial(2, 2)
    scen = make_scenario("I", 2, mu=1.0, lam=1.0)
    t = 0.37
    dofs = dirichlet_constraints(mesh, scen, t)
    fb, fw = facet_rule(2, 3)
    nv, d = mesh.num_vertices, 2
    for f in mesh.boundary_facets():
        k = mesh.facet_elements[f, 0]
        geom = element_geometry(mesh, k)
        i_loc = int(np.where(mesh.elem_facets[k] == f)[0][0])
        n = geom.normals[i_loc]
        area = geom.facet_areas[i_loc]
        fverts = mesh.vertices[mesh.facets[f]]
        pts = fb @ fverts
        flux_exact = area * np.dot(fw, scen.u_d(pts, t) @ n)
        # lifted trace: P1 part from vertex values + bubble
        p1_vals = np.column_stack([
            dofs.u_values[mesh.facets[f] * d],
            dofs.u_values[mesh.facets[f] * d + 1]])
        trace = fb @ p1_vals
        bubble = dofs.u_values[nv * d + f] * np.prod(fb, axis=1)
        flux_lift = area * np.dot(fw, trace @ n + bubble)
        assert abs(flux_lift - flux_exact) < 1e-13 * max(1.0, abs(flux_exact))


def test_update_lift_keeps_sets():
    mesh = build_structured_simplicial(2, 2)
    scen = make_scenario("I", 2, mu=1.0, lam=1.0)
    d0 = dirichlet_constraints(mesh, scen, 0.0)
    d1 = update_lift(d0, mesh, scen, 0.5)
    assert np.array_equal(d0.cons_u, d1.cons_u)
    assert np.array_equal(d0.free_p, d1.free_p)
    assert np.abs(d1.u_values).max() > 0.0
    assert d1.time == 0.5


def test_unknown_tag_raises():
    from poroblock.errors import ConfigurationError
    from poroblock.problems import ScenarioSpec

    mesh = build_structured_simplicial(2, 2)
    scen = ScenarioSpec(name="bad", u_bc={"left": "dirichlet"},
                        p_bc={"left": "dirichlet"})
    with pytest.raises(ConfigurationError):
        dirichlet_constraints(mesh, scen, 0.0)
