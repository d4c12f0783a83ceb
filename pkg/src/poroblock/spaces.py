"""Local bases and degree-of-freedom maps.

Displacement: vector P1 enriched with one normal facet bubble per facet
(d*(d+1) vertex dofs + (d+1) bubbles per element).  Global layout: vertex v,
component c -> v*d + c; bubble of global facet f -> nv*d + f.  Bubbles are
oriented by the global facet normal so they are single-valued.

Pressure: one constant per element interior and one per facet, with the
discrete weak gradient taking values in the lowest-order Raviart-Thomas
space.  Global layout: interior of element k -> k; facet f -> N + f.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .mesh import element_geometry, mesh_geometry
from .quadrature import facet_rule, simplex_rule

# mean of the product of all facet-vertex barycentric coords over the facet
_BUBBLE_FACET_MEAN = {2: 1.0 / 6.0, 3: 1.0 / 60.0}


def n_local_u(dim):
    return dim * (dim + 1) + (dim + 1)


class BRLocalBasis:
    """Evaluators for the enriched vector-P1 shape functions of one element.

    Dof order: vertex dofs (v*d + c) first, then the d+1 facet bubbles with
    the element's outward normals.
    """

    def __init__(self, geom):
        self.geom = geom
        self.dim = geom.bary_grads.shape[1]

    def values(self, bary):
        """(nq, nloc, d) shape-function values at barycentric points."""
        bary = np.atleast_2d(bary)
        d = self.dim
        nq = bary.shape[0]
        out = np.zeros((nq, n_local_u(d), d))
        for v in range(d + 1):
            for c in range(d):
                out[:, v * d + c, c] = bary[:, v]
        for i in range(d + 1):
            prod = np.prod(np.delete(bary, i, axis=1), axis=1)
            out[:, d * (d + 1) + i, :] = prod[:, None] * self.geom.normals[i]
        return out

    def gradients(self, bary):
        """(nq, nloc, d, d) gradients, [a, b] = d(phi_a)/d(x_b)."""
        bary = np.atleast_2d(bary)
        d = self.dim
        nq = bary.shape[0]
        g = self.geom.bary_grads
        out = np.zeros((nq, n_local_u(d), d, d))
        for v in range(d + 1):
            for c in range(d):
                out[:, v * d + c, c, :] = g[v]
        for i in range(d + 1):
            grad_prod = np.zeros((nq, d))
            for k in range(d + 1):
                if k == i:
                    continue
                others = [j for j in range(d + 1) if j not in (i, k)]
                coef = np.prod(bary[:, others], axis=1) if others else 1.0
                grad_prod += np.outer(coef, g[k]) if others else g[k][None, :]
            out[:, d * (d + 1) + i] = (
                self.geom.normals[i][None, :, None] * grad_prod[:, None, :])
        return out


def br_basis(geom):
    """Local Bernardi-Raugel basis for one element."""
    return BRLocalBasis(geom)


def br_gradient_table(geometry, bary):
    """Batched gradients (ne, nq, nloc, d, d) with bubble orientation signs."""
    grads = geometry.bary_grads          # (ne, d+1, d)
    ne, nverts, d = grads.shape
    bary = np.atleast_2d(bary)
    nq = bary.shape[0]
    out = np.zeros((ne, nq, n_local_u(d), d, d))
    for v in range(d + 1):
        for c in range(d):
            out[:, :, v * d + c, c, :] = grads[:, None, v, :]
    normals = geometry.normals * geometry.bubble_signs[..., None]
    for i in range(d + 1):
        grad_prod = np.zeros((ne, nq, d))
        for k in range(d + 1):
            if k == i:
                continue
            others = [j for j in range(d + 1) if j not in (i, k)]
            coef = np.prod(bary[:, others], axis=1) if others else np.ones(nq)
            grad_prod += coef[None, :, None] * grads[:, None, k, :]
        out[:, :, d * (d + 1) + i] = (
            normals[:, None, i, :, None] * grad_prod[:, :, None, :])
    return out


def br_value_table(geometry, bary):
    """Batched values (ne, nq, nloc, d) with bubble orientation signs."""
    ne, nverts, d = geometry.bary_grads.shape
    bary = np.atleast_2d(bary)
    nq = bary.shape[0]
    out = np.zeros((ne, nq, n_local_u(d), d))
    for v in range(d + 1):
        for c in range(d):
            out[:, :, v * d + c, c] = bary[None, :, v]
    normals = geometry.normals * geometry.bubble_signs[..., None]
    for i in range(d + 1):
        prod = np.prod(np.delete(bary, i, axis=1), axis=1)
        out[:, :, d * (d + 1) + i, :] = prod[None, :, None] * normals[:, None, i, :]
    return out


def avg_divergence(basis):
    """Per-dof mean divergence (1/|K|) * integral of div(phi) over K."""
    geom = basis.geom
    d = basis.dim
    out = np.zeros(n_local_u(d))
    for v in range(d + 1):
        for c in range(d):
            out[v * d + c] = geom.bary_grads[v, c]
    mean = _BUBBLE_FACET_MEAN[d]
    for i in range(d + 1):
        out[d * (d + 1) + i] = geom.facet_areas[i] * mean / geom.volume
    return out


def avg_divergence_table(geometry):
    """Batched mean divergences (ne, nloc), bubble dofs orientation-signed."""
    ne, nverts, d = geometry.bary_grads.shape
    out = np.zeros((ne, n_local_u(d)))
    for v in range(d + 1):
        for c in range(d):
            out[:, v * d + c] = geometry.bary_grads[:, v, c]
    mean = _BUBBLE_FACET_MEAN[d]
    out[:, d * (d + 1):] = (geometry.bubble_signs * geometry.facet_areas
                            * mean / geometry.volumes[:, None])
    return out


def _rt0_local(verts, bary, weights):
    """Mean-value products (1/|K|) Int (x - x_i).(x - x_j), batched.

    These are the raw ingredients of the RT0 mass matrix for the basis
    psi_i = |e_i| / (d |K|) * (x - x_i), which is dual to facet fluxes.
    The caller scales by c_i c_j |K|.
    """
    pts = np.einsum("qv,evd->eqd", bary, verts)          # (ne, nq, d)
    diff = pts[:, :, None, :] - verts[:, None, :, :]      # (ne, nq, d+1, d)
    return np.einsum("q,eqid,eqjd->eij", weights, diff, diff)


def wg_local_operators(geometry, mesh):
    """Weak-gradient data per element.

    Returns (coeff (ne, d+1, d+2), stiff (ne, d+2, d+2), mass_rt):
    coeff maps local pressure dofs [p_int, p_facets...] to RT0 coefficients
    of the weak gradient; stiff is the local Laplacian (grad_w, grad_w)_K.
    """
    d = mesh.dim
    ne = mesh.num_elements
    verts = mesh.vertices[mesh.elements]
    bary, weights = simplex_rule(d, 2)
    raw = _rt0_local(verts, bary, weights)
    c = geometry.facet_areas / (d * geometry.volumes[:, None])   # (ne, d+1)
    mass_rt = (raw * c[:, :, None] * c[:, None, :]
               * geometry.volumes[:, None, None])
    rhs = np.zeros((ne, d + 1, d + 2))
    rhs[:, :, 0] = -geometry.facet_areas
    idx = np.arange(d + 1)
    rhs[:, idx, idx + 1] = geometry.facet_areas  # flux of psi_i through e_i
    coeff = np.linalg.solve(mass_rt, rhs)
    stiff = np.einsum("eki,ekj->eij", rhs, coeff)
    stiff = 0.5 * (stiff + np.swapaxes(stiff, 1, 2))
    return coeff, stiff, mass_rt


def _relative_vertices(geom):
    """Vertex positions relative to vertex 0, recovered from bary_grads."""
    d = geom.bary_grads.shape[1]
    t = np.linalg.inv(geom.bary_grads[1:])  # columns are x_i - x_0
    rel = np.zeros((d + 1, d))
    rel[1:] = t.T
    return rel


def wg_weak_gradient(geom, p_interior, p_facets):
    """RT0 coefficients (facet-flux basis) of the discrete weak gradient of
    one local pressure function {p_interior, p_facets}.

    The coefficients g solve the (d+1)x(d+1) RT0 mass system
    (sum g_i psi_i, w)_K = (p_facets, w.n)_dK - (p_interior, div w)_K
    for all w in RT0(K), with psi_i dual to the facet fluxes.
    """
    d = geom.bary_grads.shape[1]
    p_facets = np.asarray(p_facets, dtype=float)
    if p_facets.shape != (d + 1,):
        raise ConfigurationError("need one facet value per facet")
    rel = _relative_vertices(geom)
    bary, weights = simplex_rule(d, 2)
    raw = _rt0_local(rel[None], bary, weights)[0]
    c = geom.facet_areas / (d * geom.volume)
    mass = raw * np.outer(c, c) * geom.volume
    rhs = geom.facet_areas * (p_facets - p_interior)
    return np.linalg.solve(mass, rhs)


def rt0_value(geom, coeffs, bary):
    """Evaluate an RT0 field sum_i g_i psi_i at barycentric points.

    Positions are translation-invariant here, so the value is exact for the
    element the geometry came from.
    """
    d = geom.bary_grads.shape[1]
    rel = _relative_vertices(geom)
    pts = np.atleast_2d(bary) @ rel
    c = geom.facet_areas / (d * geom.volume)
    out = np.zeros((pts.shape[0], d))
    for i in range(d + 1):
        out += coeffs[i] * c[i] * (pts - rel[i])
    return out


@dataclass(frozen=True)
class DofMap:
    """Free/constrained dof indexing with lifted boundary values at time t.

    u_values / p_values are full-length vectors holding the Dirichlet data on
    constrained dofs and zero elsewhere.
    """

    n_u: int
    n_p: int
    num_elements: int
    num_facets: int
    free_u: np.ndarray
    cons_u: np.ndarray
    free_p: np.ndarray
    cons_p: np.ndarray
    u_values: np.ndarray
    p_values: np.ndarray
    u_dirichlet_facets: np.ndarray
    p_dirichlet_facets: np.ndarray
    time: float

    @property
    def n_free_u(self):
        return len(self.free_u)

    @property
    def n_free_p(self):
        return len(self.free_p)

    def full_u(self, u_free):
        out = self.u_values.copy()
        out[self.free_u] = u_free
        return out

    def full_p(self, p_free):
        out = self.p_values.copy()
        out[self.free_p] = p_free
        return out


def _facet_sets(mesh, scenario):
    tags = mesh.boundary_tags
    u_dir, p_dir = [], []
    for f, tag in tags.items():
        try:
            ukind = scenario.u_bc[tag]
            pkind = scenario.p_bc[tag]
        except KeyError as exc:
            raise ConfigurationError(f"boundary tag {exc} not covered by "
                                     f"scenario '{scenario.name}'")
        if ukind == "dirichlet":
            u_dir.append(f)
        elif ukind != "traction":
            raise ConfigurationError(f"unknown displacement BC '{ukind}'")
        if pkind == "dirichlet":
            p_dir.append(f)
        elif pkind != "flux":
            raise ConfigurationError(f"unknown pressure BC '{pkind}'")
    return np.array(sorted(u_dir), dtype=int), np.array(sorted(p_dir), dtype=int)


def _lift(mesh, scenario, t, u_dir, p_dir, n_u, n_p):
    d = mesh.dim
    nv = mesh.num_vertices
    u_values = np.zeros(n_u)
    p_values = np.zeros(n_p)
    fb, fw = facet_rule(d, 3)
    mean = _BUBBLE_FACET_MEAN[d]

    if len(u_dir) and scenario.u_d is not None:
        dir_verts = np.unique(mesh.facets[u_dir].ravel())
        uvals = scenario.u_d(mesh.vertices[dir_verts], t)
        for c in range(d):
            u_values[dir_verts * d + c] = uvals[:, c]
        for f in u_dir:
            k = mesh.facet_elements[f, 0]
            geom = element_geometry(mesh, k)
            i_loc = int(np.where(mesh.elem_facets[k] == f)[0][0])
            n = geom.normals[i_loc]
            area = geom.facet_areas[i_loc]
            fverts = mesh.vertices[mesh.facets[f]]
            pts = fb @ fverts
            flux_exact = area * np.dot(fw, scenario.u_d(pts, t) @ n)
            corner = mesh.vertices[mesh.facets[f]]
            flux_p1 = (area / d) * np.sum(scenario.u_d(corner, t) @ n)
            u_values[nv * d + f] = (flux_exact - flux_p1) / (mean * area)
    if len(p_dir) and scenario.p_d is not None:
        N = mesh.num_elements
        for f in p_dir:
            pts = fb @ mesh.vertices[mesh.facets[f]]
            p_values[N + f] = np.dot(fw, scenario.p_d(pts, t))
    return u_values, p_values


def dirichlet_constraints(mesh, scenario, t):
    """DofMap with constrained sets for the scenario and lifted data at t.

    Vertex dofs carry pointwise Dirichlet data; a bubble dof is set so the
    facet normal-flux moment of the lifted trace matches that of u_D; facet
    pressure dofs carry facet means of p_D.  A vertex shared by Dirichlet and
    Neumann facets is constrained (Dirichlet wins).
    """
    d = mesh.dim
    nv = mesh.num_vertices
    N = mesh.num_elements
    nf = mesh.num_facets
    n_u = nv * d + nf
    n_p = N + nf

    u_dir, p_dir = _facet_sets(mesh, scenario)
    cons_u = []
    if len(u_dir):
        dir_verts = np.unique(mesh.facets[u_dir].ravel())
        cons_u = [v * d + c for v in dir_verts for c in range(d)]
        cons_u += [nv * d + f for f in u_dir]
    cons_u = np.array(sorted(cons_u), dtype=int)
    cons_p = np.array(sorted(N + f for f in p_dir), dtype=int)
    free_u = np.setdiff1d(np.arange(n_u), cons_u, assume_unique=True)
    free_p = np.setdiff1d(np.arange(n_p), cons_p, assume_unique=True)

    u_values, p_values = _lift(mesh, scenario, t, u_dir, p_dir, n_u, n_p)
    return DofMap(n_u, n_p, N, nf, free_u, cons_u, free_p, cons_p,
                  u_values, p_values, u_dir, p_dir, t)


def update_lift(dofs, mesh, scenario, t):
    """Same constraint sets, Dirichlet data re-evaluated at a new time."""
    u_values, p_values = _lift(mesh, scenario, t, dofs.u_dirichlet_facets,
                               dofs.p_dirichlet_facets, dofs.n_u, dofs.n_p)
    return replace(dofs, u_values=u_values, p_values=p_values, time=t)
