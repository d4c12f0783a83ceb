"""Assembly of the coupled sparse blocks and time-step right-hand sides.

Scaling convention: the strain stiffness is assembled without the 2*mu factor
and the divergence coupling without alpha when the Lame coefficients are
uniform; the system module applies those scalars.  For layered materials the
per-element 2*mu_K is folded into the strain stiffness at assembly time and
the system module switches to its generalized scaling.  Permeability is
always per element inside the weak-gradient sum.

Dirichlet conditions are handled by elimination: matrices are assembled over
all dofs, restricted to the free sets, and the constrained columns times the
lifted boundary data are moved to the right-hand side.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import ConfigurationError
from .mesh import element_geometry, mesh_geometry
from .quadrature import facet_rule, simplex_rule
from .spaces import (BRLocalBasis, avg_divergence_table, br_gradient_table,
                     br_value_table, n_local_u, wg_local_operators)

_STIFF_DEGREE = {2: 2, 3: 4}
_LOAD_DEGREE = {2: 4, 3: 5}
_FACET_DEGREE = 3


@dataclass
class PhysicalParams:
    """Material and discretization parameters.

    mu/lam are the uniform Lame constants; for layered materials pass
    per-element arrays in mu_elements/lam_elements (then mu/lam only serve
    as reference magnitudes).  kappa may be a scalar or per-element array.
    """

    mu: float
    lam: float
    alpha: float = 1.0
    c0: float = 1.0
    kappa: object = 1.0
    dt: float = 1e-3
    mu_elements: object = None
    lam_elements: object = None

    def __post_init__(self):
        if self.mu <= 0 or self.lam <= 0:
            raise ConfigurationError("Lame constants must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("alpha must be in (0, 1]")
        if self.c0 < 0:
            raise ConfigurationError("storage capacity must be nonnegative")
        if np.any(np.asarray(self.kappa) <= 0):
            raise ConfigurationError("permeability must be positive")
        if self.dt <= 0:
            raise ConfigurationError("time step must be positive")

    @classmethod
    def from_young_poisson(cls, E, nu, **kwargs):
        lam = nu * E / ((1.0 - 2.0 * nu) * (1.0 + nu))
        mu = E / (2.0 * (1.0 + nu))
        return cls(mu=mu, lam=lam, **kwargs)

    @property
    def eps(self):
        """Locking parameter 2*mu/lam."""
        return 2.0 * self.mu / self.lam

    @property
    def uniform_elastic(self):
        return self.mu_elements is None and self.lam_elements is None

    def kappa_of(self, ne):
        return np.broadcast_to(np.asarray(self.kappa, dtype=float), (ne,))

    def lam_of(self, ne):
        if self.lam_elements is not None:
            return np.asarray(self.lam_elements, dtype=float)
        return np.full(ne, self.lam)

    def mu_of(self, ne):
        if self.mu_elements is not None:
            return np.asarray(self.mu_elements, dtype=float)
        return np.full(ne, self.mu)


def local_to_global_u(mesh):
    """(ne, nloc) displacement dof ids: vertex-major, bubbles after."""
    d = mesh.dim
    ne = mesh.num_elements
    nv = mesh.num_vertices
    ltg = np.empty((ne, n_local_u(d)), dtype=int)
    for v in range(d + 1):
        for c in range(d):
            ltg[:, v * d + c] = mesh.elements[:, v] * d + c
    ltg[:, d * (d + 1):] = nv * d + mesh.elem_facets
    return ltg


def local_to_global_p(mesh):
    """(ne, d+2) pressure dof ids: [interior, facets...]."""
    ne = mesh.num_elements
    ltg = np.empty((ne, mesh.dim + 2), dtype=int)
    ltg[:, 0] = np.arange(ne)
    ltg[:, 1:] = mesh.num_elements + mesh.elem_facets
    return ltg


def _scatter(local, rows_ltg, cols_ltg, shape):
    ne, ni, nj = local.shape
    rows = np.repeat(rows_ltg, nj, axis=1).ravel()
    cols = np.tile(cols_ltg, (1, ni)).ravel()
    mat = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=shape)
    return mat.tocsr()


def _symmetrize(mat):
    return ((mat + mat.T) * 0.5).tocsr()


@dataclass
class AssembledBlocks:
    """Sparse blocks over all dofs plus cached free-dof restrictions.

    A1_full: strain stiffness sum_K w_K (eps(phi_i), eps(phi_j))_K with
             w_K = 1 (uniform) or 2*mu_K (layered)
    Bc_full: interior-pressure x displacement coupling, row K holds
             integral of div(phi_j) over K
    Mp:      diagonal pressure mass, entry j = |K_j|
    Ap_full: permeability-weighted weak-Galerkin Laplacian on the full
             interiors-then-facets pressure layout
    """

    mesh: object
    dofs: object
    params: PhysicalParams
    A1_full: sparse.csr_matrix
    Bc_full: sparse.csr_matrix
    Mp: np.ndarray
    Ap_full: sparse.csr_matrix

    @cached_property
    def A1(self):
        f = self.dofs.free_u
        return self.A1_full[np.ix_(f, f)].tocsr()

    @cached_property
    def Bc(self):
        return self.Bc_full[:, self.dofs.free_u].tocsr()

    @cached_property
    def Ap(self):
        f = self.dofs.free_p
        return self.Ap_full[np.ix_(f, f)].tocsr()

    @cached_property
    def mass_embed_free(self):
        """diag entries of [Mp 0; 0 0] restricted to free pressure dofs."""
        full = np.concatenate([self.Mp, np.zeros(self.dofs.num_facets)])
        return full[self.dofs.free_p]

    @cached_property
    def D(self):
        """c0-mass + dt * Ap on free pressure dofs (Eq. structure of the
        coupled flow block)."""
        return (self.params.c0 * sparse.diags(self.mass_embed_free)
                + self.params.dt * self.Ap).tocsr()

    def D_full(self):
        full = np.concatenate([self.Mp, np.zeros(self.dofs.num_facets)])
        return (self.params.c0 * sparse.diags(full)
                + self.params.dt * self.Ap_full).tocsr()


def assemble_blocks(mesh, dofs, params):
    """Assemble A1, B-circ, Mp, Ap for one mesh/parameter set."""
    d = mesh.dim
    geometry = mesh_geometry(mesh)
    vols = geometry.volumes
    ltg_u = local_to_global_u(mesh)
    ltg_p = local_to_global_p(mesh)

    bary, wts = simplex_rule(d, _STIFF_DEGREE[d])
    grads = br_gradient_table(geometry, bary)              # (ne,nq,nl,d,d)
    eps = 0.5 * (grads + np.swapaxes(grads, 3, 4))
    weight = np.ones(mesh.num_elements)
    if not params.uniform_elastic:
        weight = 2.0 * params.mu_of(mesh.num_elements)
    a1_local = np.einsum("q,eqiab,eqjab->eij", wts, eps, eps)
    a1_local *= (weight * vols)[:, None, None]
    n_u = dofs.n_u
    A1_full = _symmetrize(_scatter(a1_local, ltg_u, ltg_u, (n_u, n_u)))

    avgdiv = avg_divergence_table(geometry)
    b_local = (vols[:, None] * avgdiv)[:, None, :]          # (ne, 1, nloc)
    rows = np.arange(mesh.num_elements, dtype=int)[:, None]
    Bc_full = _scatter(b_local, rows, ltg_u,
                       (mesh.num_elements, n_u))

    _, wg_stiff, _ = wg_local_operators(geometry, mesh)
    kap = params.kappa_of(mesh.num_elements)
    ap_local = wg_stiff * kap[:, None, None]
    n_p = dofs.n_p
    Ap_full = _symmetrize(_scatter(ap_local, ltg_p, ltg_p, (n_p, n_p)))

    return AssembledBlocks(mesh, dofs, params, A1_full, Bc_full,
                           vols.copy(), Ap_full)


def assemble_a0(mesh):
    """Gram matrix of mean divergences, sum_K |K| avgdiv_i avgdiv_j, over all
    displacement dofs.  Oracle for the identity A0 = Bc^T Mp^-1 Bc.
    """
    geometry = mesh_geometry(mesh)
    avgdiv = avg_divergence_table(geometry)
    local = (geometry.volumes[:, None, None]
             * avgdiv[:, :, None] * avgdiv[:, None, :])
    ltg_u = local_to_global_u(mesh)
    n_u = mesh.num_vertices * mesh.dim + mesh.num_facets
    return _scatter(local, ltg_u, ltg_u, (n_u, n_u))


def _facet_element_bary(mesh, f, k):
    """Map facet-barycentric rule points into element-barycentric coords."""
    d = mesh.dim
    fb, fw = facet_rule(d, _FACET_DEGREE)
    elem = mesh.elements[k]
    cols = [int(np.where(elem == v)[0][0]) for v in mesh.facets[f]]
    bary = np.zeros((fb.shape[0], d + 1))
    for j, c in enumerate(cols):
        bary[:, c] = fb[:, j]
    return bary, fw


def _boundary_facets_of_kind(mesh, scenario, which, kind):
    bc = scenario.u_bc if which == "u" else scenario.p_bc
    out = []
    for f, tag in mesh.boundary_tags.items():
        try:
            if bc[tag] == kind:
                out.append(f)
        except KeyError as exc:
            raise ConfigurationError(
                f"boundary tag {exc} not covered by scenario "
                f"'{scenario.name}'")
    return sorted(out)


def assemble_rhs(blocks, scenario, t, prev_u=None, prev_p=None, dofs=None):
    """Right-hand sides (b1, b2) on free dofs for the step ending at time t.

    prev_u / prev_p are the full previous-step fields (Dirichlet values
    included); omitted means the zero initial state.  Includes body force,
    boundary traction, fluid source scaled by dt, previous-step coupling,
    boundary flux scaled by dt, and all Dirichlet lifting terms.  Pass dofs
    to supply boundary data re-lifted at the current time; defaults to the
    DofMap the blocks were assembled with.
    """
    mesh, params = blocks.mesh, blocks.params
    if dofs is None:
        dofs = blocks.dofs
    d = mesh.dim
    ne = mesh.num_elements
    geometry = mesh_geometry(mesh)
    vols = geometry.volumes
    b1 = np.zeros(dofs.n_u)
    b2 = np.zeros(dofs.n_p)

    bary, wts = simplex_rule(d, _LOAD_DEGREE[d])
    pts = np.einsum("qv,evd->eqd", bary, mesh.vertices[mesh.elements])

    if scenario.f is not None:
        values = br_value_table(geometry, bary)             # (ne,nq,nl,d)
        fvals = scenario.f(pts.reshape(-1, d), t).reshape(ne, -1, d)
        local = np.einsum("q,eqd,eqld->el", wts, fvals, values) * vols[:, None]
        np.add.at(b1, local_to_global_u(mesh), local)

    if scenario.s is not None:
        svals = scenario.s(pts.reshape(-1, d), t).reshape(ne, -1)
        b2[:ne] -= params.dt * vols * (svals @ wts)

    # previous-step coupling: -alpha (div u^{n-1}, q) - c0 (p^{n-1}, q)
    if prev_u is not None:
        b2[:ne] -= params.alpha * (blocks.Bc_full @ prev_u)
    if prev_p is not None:
        b2[:ne] -= params.c0 * vols * prev_p[:ne]

    # boundary traction on the displacement Neumann part
    if scenario.t_n is not None:
        for f in _boundary_facets_of_kind(mesh, scenario, "u", "traction"):
            k = mesh.facet_elements[f, 0]
            geom = element_geometry(mesh, k)
            i_loc = int(np.where(mesh.elem_facets[k] == f)[0][0])
            ebary, fw = _facet_element_bary(mesh, f, k)
            fpts = ebary @ mesh.vertices[mesh.elements[k]]
            tvals = scenario.t_n(fpts, t, geom.normals[i_loc])
            phi = BRLocalBasis(geom).values(ebary)          # (nq,nl,d)
            area = geom.facet_areas[i_loc]
            contrib = area * np.einsum("q,qd,qld->l", fw, tvals, phi)
            np.add.at(b1, local_to_global_u(mesh)[k], contrib)

    # boundary flux on the pressure Neumann part (facet test constants)
    if scenario.p_n is not None:
        for f in _boundary_facets_of_kind(mesh, scenario, "p", "flux"):
            k = mesh.facet_elements[f, 0]
            geom = element_geometry(mesh, k)
            i_loc = int(np.where(mesh.elem_facets[k] == f)[0][0])
            fb, fw = facet_rule(d, _FACET_DEGREE)
            fpts = fb @ mesh.vertices[mesh.facets[f]]
            mean = np.dot(fw, scenario.p_n(fpts, t, geom.normals[i_loc]))
            b2[ne + f] -= params.dt * geom.facet_areas[i_loc] * mean

    return eliminate_rhs(blocks, dofs, b1, b2)


def eliminate_rhs(blocks, dofs, b1_raw, b2_raw):
    """Restrict raw right-hand sides to free dofs and add Dirichlet lifting.

    Lifting follows the two-field rows: the constrained displacement data
    hits row one through the scaled elastic operator and row two through the
    divergence coupling; the constrained facet pressures hit row two through
    the flow block.
    """
    params = blocks.params
    ne = blocks.mesh.num_elements
    u_c = dofs.u_values
    p_c = dofs.p_values
    free_u, free_p = dofs.free_u, dofs.free_p

    b1 = b1_raw[free_u].copy()
    if np.any(u_c):
        vols = blocks.Mp
        lam_e = params.lam_of(ne)
        strain_scale = 2.0 * params.mu if params.uniform_elastic else 1.0
        bc_uc = blocks.Bc_full @ u_c
        dil = blocks.Bc_full.T @ (bc_uc * lam_e / vols)
        b1 -= strain_scale * (blocks.A1_full @ u_c)[free_u] + dil[free_u]

    b2 = b2_raw[free_p].copy()
    if np.any(u_c):
        lift2 = np.zeros(dofs.n_p)
        lift2[:ne] = params.alpha * (blocks.Bc_full @ u_c)
        b2 += lift2[free_p]
    if np.any(p_c):
        b2 += (blocks.D_full() @ p_c)[free_p]
    return b1, b2
