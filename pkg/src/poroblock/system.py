"""Two-field and regularized three-field operators.

The three-field operator introduces a scaled auxiliary variable carrying the
mean-divergence content of the displacement, which turns the nearly singular
dilation term of the locking regime into an off-diagonal coupling.  Under
pure displacement-Dirichlet conditions the trailing mass block is closed with
a rank-one term rho*w*w^T that is annihilated by the exact solution, so the
regularized system keeps the original solution while becoming uniformly
nonsingular.

Unknown layout: [u, y, z] with y spanning the free pressure dofs (interiors
first, then facets) and z the element interiors.  For uniform Lame constants
the blocks and scalings follow the locking-normalized form
    [[A1, 0, -Bc^T], [0, -(2mu/a^2) D - E, -E1], [-Bc, -E1^T, -M_z - R]]
with E the interior-embedded (eps*Mp + rho*w*w^T).  The right-hand side is
[(1/2mu) b1, -(1/alpha) b2, 0] and the physical pressure is recovered as
p = -(2mu/alpha) y; the sign convention is fixed by requiring exact agreement
with the two-field system and is verified against it in the tests.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigurationError


@dataclass(frozen=True)
class RegularizationSpec:
    """Rank-one closure rho * w w^T of the auxiliary block.

    w is the normalized element-volume vector (the kernel direction of the
    divergence coupling under pure Dirichlet conditions); rho defaults to
    0.1 * min element volume and is zero for mixed conditions.
    """

    rho: float
    w: np.ndarray
    enabled: bool


def build_regularizer(mp_diag, mode, rho_scale=0.1):
    """Regularization for 'pure-dbc' (enabled) or 'mixed' (rho = 0)."""
    mp_diag = np.asarray(mp_diag, dtype=float)
    if np.any(mp_diag <= 0):
        raise ConfigurationError("pressure mass must be positive")
    w = mp_diag / np.linalg.norm(mp_diag)
    if mode == "pure-dbc":
        return RegularizationSpec(rho_scale * mp_diag.min(), w, True)
    if mode == "mixed":
        return RegularizationSpec(0.0, w, False)
    raise ConfigurationError(f"unknown regularization mode '{mode}'")


@dataclass
class ThreeFieldSystem:
    """Matrix-free symmetric operator over component blocks.

    Au:    displacement stiffness (free dofs)
    Bc:    interior-divergence coupling (N x n_u free columns)
    Dp:    scaled flow block on free pressure dofs
    Mz:    diagonal of the auxiliary mass (N,)
    Mlast: diagonal of the trailing preconditioner mass (N,)
    rho,w: rank-one regularizer (rho = 0 disables it)
    """

    Au: sparse.csr_matrix
    Bc: sparse.csr_matrix
    Dp: sparse.csr_matrix
    Mz: np.ndarray
    Mlast: np.ndarray
    rho: float
    w: np.ndarray
    b1_scale: float
    b2_scale: float
    p_recover: float

    @property
    def n_u(self):
        return self.Au.shape[0]

    @property
    def n_p(self):
        return self.Dp.shape[0]

    @property
    def N(self):
        return self.Bc.shape[0]

    @property
    def size(self):
        return self.n_u + self.n_p + self.N

    def split(self, x):
        n_u, n_p = self.n_u, self.n_p
        return x[:n_u], x[n_u:n_u + n_p], x[n_u + n_p:]

    def _mass_apply(self, v):
        """(Mz + rho w w^T) v on the interior layout."""
        out = self.Mz * v
        if self.rho:
            out = out + self.rho * self.w * (self.w @ v)
        return out

    def matvec(self, x):
        u, y, z = self.split(x)
        N = self.N
        m_y = self._mass_apply(y[:N])
        m_z = self._mass_apply(z)
        out = np.empty_like(x)
        out[:self.n_u] = self.Au @ u - self.Bc.T @ z
        ry = -(self.Dp @ y)
        ry[:N] -= m_y + m_z
        out[self.n_u:self.n_u + self.n_p] = ry
        out[self.n_u + self.n_p:] = -(self.Bc @ u) - m_y - m_z
        return out

    def __call__(self, x):
        return self.matvec(x)

    def rhs(self, b1, b2):
        """Stack the scaled right-hand side [c1*b1, c2*b2, 0]."""
        return np.concatenate([self.b1_scale * b1, self.b2_scale * b2,
                               np.zeros(self.N)])

    def middle_matrix(self):
        """Sparse part of the middle preconditioner block (no rank-one)."""
        embed = np.zeros(self.n_p)
        embed[:self.N] = self.Mz
        return (self.Dp + sparse.diags(embed)).tocsr()

    def middle_rankone(self):
        """Embedded rank-one vector of the middle block (or None)."""
        if not self.rho:
            return None
        v = np.zeros(self.n_p)
        v[:self.N] = self.w
        return v

    def to_sparse(self):
        """Explicit sparse assembly; intended for small problems only."""
        N, n_p = self.N, self.n_p
        mass = sparse.diags(self.Mz)
        if self.rho:
            mass = mass + self.rho * sparse.csr_matrix(
                np.outer(self.w, self.w))
        inj = sparse.vstack([sparse.identity(N, format="csr"),
                             sparse.csr_matrix((n_p - N, N))])
        e22 = inj @ mass @ inj.T
        e23 = inj @ mass
        return sparse.bmat([
            [self.Au, None, -self.Bc.T],
            [None, -(self.Dp + e22), -e23],
            [-self.Bc, -e23.T, -mass],
        ], format="csr")


def _scaling_mode(params):
    return "uniform" if params.uniform_elastic else "layered"


def build_three_field(blocks, params, reg):
    """Assemble the ThreeFieldSystem from component blocks.

    Uniform Lame constants use the locking-normalized scaling (strain block
    unweighted, flow block scaled by 2mu/alpha^2, auxiliary mass eps*Mp);
    layered materials use the congruence-equivalent unscaled form with the
    per-element weights folded in.
    """
    a = params.alpha
    ne = blocks.mesh.num_elements
    rho = reg.rho if reg.enabled else 0.0
    if _scaling_mode(params) == "uniform":
        sys = ThreeFieldSystem(
            Au=blocks.A1,
            Bc=blocks.Bc,
            Dp=(2.0 * params.mu / a ** 2) * blocks.D,
            Mz=params.eps * blocks.Mp,
            Mlast=blocks.Mp.copy(),
            rho=rho, w=reg.w,
            b1_scale=1.0 / (2.0 * params.mu),
            b2_scale=-1.0 / a,
            p_recover=-2.0 * params.mu / a,
        )
    else:
        mu_e = params.mu_of(ne)
        lam_e = params.lam_of(ne)
        sys = ThreeFieldSystem(
            Au=blocks.A1,                       # carries 2 mu_K weights
            Bc=blocks.Bc,
            Dp=(1.0 / a ** 2) * blocks.D,
            Mz=blocks.Mp / lam_e,
            Mlast=blocks.Mp / (2.0 * mu_e),
            rho=rho, w=reg.w,
            b1_scale=1.0,
            b2_scale=-1.0 / a,
            p_recover=-1.0 / a,
        )
    return sys


def recover_fields(x, system):
    """Physical (u, p) on free dofs from the scaled solution vector."""
    u, y, _ = system.split(x)
    return u.copy(), system.p_recover * y


def build_two_field(blocks, params):
    """Sparse two-field operator [[K, -a Bt], [-a B, -D]] on free dofs.

    K includes the full dilation term; serves as the direct-solve oracle for
    the three-field path.
    """
    ne = blocks.mesh.num_elements
    lam_e = params.lam_of(ne)
    strain_scale = 2.0 * params.mu if params.uniform_elastic else 1.0
    K = (strain_scale * blocks.A1
         + blocks.Bc.T @ sparse.diags(lam_e / blocks.Mp) @ blocks.Bc)
    n_fp = blocks.D.shape[0]
    Bpad = sparse.vstack([blocks.Bc,
                          sparse.csr_matrix((n_fp - ne, blocks.Bc.shape[1]))])
    A = sparse.bmat([
        [K.tocsr(), -params.alpha * Bpad.T],
        [-params.alpha * Bpad, -blocks.D],
    ], format="csr")
    return A


def solve_two_field(blocks, params, b1, b2, factor=None):
    """Direct solve of the two-field system; returns (u, p) on free dofs.

    Pass a prefactorized splu object as factor to reuse across time steps.
    """
    from scipy.sparse.linalg import splu

    if factor is None:
        factor = splu(build_two_field(blocks, params).tocsc())
    x = factor.solve(np.concatenate([b1, b2]))
    n_u = blocks.A1.shape[0]
    return x[:n_u], x[n_u:]
