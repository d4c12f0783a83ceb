"""Dense desk-scale verification of the spectral claims.

Forms the exact and approximate Schur complements explicitly (using a dense
inverse of the displacement stiffness), solves the symmetric-definite
generalized eigenproblems, and measures the discrete inf-sup constant and
the Korn-type ratio that enter the bounds.  Sizes are capped; this module is
for verification, not production solves.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, sparse

from .errors import ConfigurationError
from .system import build_regularizer, build_three_field

_ZERO_SV_RTOL = 1e-10  # singular values below this times the max count as zero


@dataclass
class EigenReport:
    """Spectrum of one preconditioned Schur complement configuration."""

    eigenvalues: np.ndarray
    eps: float
    rho: float
    scenario: str
    h: float = float("nan")
    beta: float = float("nan")
    c_korn: float = float("nan")

    @property
    def min(self):
        return float(self.eigenvalues.min())

    @property
    def max(self):
        return float(self.eigenvalues.max())


@dataclass
class NullspaceReport:
    singular_values: np.ndarray
    null_dim: int
    ones_cosine: float


@dataclass
class InfSupReport:
    beta: float
    c_korn: float
    n_zero_modes: int
    eigenvalues: np.ndarray


def _dense(mat):
    return mat.toarray() if sparse.issparse(mat) else np.asarray(mat)


def _check_size(system, max_pressure_dofs):
    if system.n_p > max_pressure_dofs:
        raise ConfigurationError(
            f"dense diagnostics refused: {system.n_p} pressure dofs exceed "
            f"the cap of {max_pressure_dofs}; use a coarser mesh (n <= 8 "
            f"in 2D is plenty for the spectral checks)")


def schur_dense(system):
    """Exact Schur complement S and approximation S_hat as dense blocks.

    S eliminates the displacement block of the three-field operator; S_hat
    keeps only the two diagonal blocks, with the trailing one replaced by the
    mass-plus-rank-one closure.
    """
    N, n_p = system.N, system.n_p
    Au = _dense(system.Au)
    Bc = _dense(system.Bc)
    T = Bc @ np.linalg.solve(Au, Bc.T)
    mass = np.diag(system.Mz)
    if system.rho:
        mass = mass + system.rho * np.outer(system.w, system.w)
    Dp = _dense(system.Dp)
    S = np.zeros((n_p + N, n_p + N))
    S[:n_p, :n_p] = Dp
    S[:N, :N] += mass
    S[:N, n_p:] = mass
    S[n_p:, :N] = mass
    S[n_p:, n_p:] = mass + T
    mlast = np.diag(system.Mlast)
    if system.rho:
        mlast = mlast + system.rho * np.outer(system.w, system.w)
    S_hat = np.zeros_like(S)
    S_hat[:n_p, :n_p] = Dp
    S_hat[:N, :N] += mass
    S_hat[n_p:, n_p:] = mlast
    return S, S_hat


def dense_schur_eigs(blocks, eps_list, mode="pure-dbc", rho_scale=0.1,
                     mesh_size=float("nan"), max_pressure_dofs=400):
    """Generalized eigenvalues of S_hat^{-1} S for each locking parameter.

    eps is swept directly (lam = 2 mu / eps); rho_scale = 0 disables the
    regularizer, otherwise rho = rho_scale * min element volume under
    'pure-dbc'.  Returns one EigenReport per eps.
    """
    params = blocks.params
    if not params.uniform_elastic:
        raise ConfigurationError("dense spectral sweep expects uniform "
                                 "Lame constants")
    infsup = estimate_inf_sup(blocks.A1, blocks.Bc, blocks.Mp)
    reports = []
    for eps in eps_list:
        p_eps = replace_params(params, lam=2.0 * params.mu / eps)
        if rho_scale > 0 and mode == "pure-dbc":
            reg = build_regularizer(blocks.Mp, "pure-dbc", rho_scale)
        else:
            reg = build_regularizer(blocks.Mp, "mixed")
        blk = _with_params(blocks, p_eps)
        system = build_three_field(blk, p_eps, reg)
        _check_size(system, max_pressure_dofs)
        S, S_hat = schur_dense(system)
        eigs = linalg.eigh(S, S_hat, eigvals_only=True)
        reports.append(EigenReport(
            eigenvalues=eigs, eps=eps, rho=system.rho, scenario=mode,
            h=mesh_size, beta=infsup.beta, c_korn=infsup.c_korn))
    return reports


def replace_params(params, **kw):
    return replace(params, **kw)


def _with_params(blocks, params):
    blk = replace(blocks, params=params)
    blk.__dict__.pop("D", None)  # cached restriction tied to the old params
    return blk


def rank_nullspace(Bc):
    """Singular-value analysis of the transposed divergence coupling.

    Under pure Dirichlet conditions exactly one singular value is
    numerically zero and the null direction is the constant vector; under
    mixed conditions the matrix has full column rank.  ones_cosine is the
    norm of the projection of the normalized constant vector onto the null
    space (1.0 when constants are fully contained in it).
    """
    Bt = _dense(Bc).T                      # (n_u, N)
    _, svals, vh = np.linalg.svd(Bt)
    rank = int((svals > _ZERO_SV_RTOL * svals.max()).sum()) if svals.size else 0
    null_dim = Bt.shape[1] - rank
    cosine = float("nan")
    if null_dim >= 1:
        vnull = vh[rank:]                  # rows span Null(Bc^T)
        ones = np.ones(Bt.shape[1]) / np.sqrt(Bt.shape[1])
        cosine = float(np.linalg.norm(vnull @ ones))
    return NullspaceReport(svals, null_dim, cosine)


def estimate_inf_sup(Au, Bc, mp_diag):
    """Discrete inf-sup constant and Korn-type ratio from the pencil
    Bc Au^{-1} Bc^T q = theta Mp q.

    beta^2 is the smallest nonzero eigenvalue (the constant mode is excluded
    under pure Dirichlet conditions); the largest eigenvalue is the measured
    Korn-type constant of the upper bounds.
    """
    Au = _dense(Au)
    Bc = _dense(Bc)
    T = Bc @ np.linalg.solve(Au, Bc.T)
    T = 0.5 * (T + T.T)
    eigs = linalg.eigh(T, np.diag(np.asarray(mp_diag, dtype=float)),
                       eigvals_only=True)
    eigs = np.maximum(eigs, 0.0)
    zero = eigs <= _ZERO_SV_RTOL * eigs.max()
    nonzero = eigs[~zero]
    return InfSupReport(float(np.sqrt(nonzero.min())), float(eigs.max()),
                        int(zero.sum()), eigs)


def preconditioned_system_eigs(system, max_pressure_dofs=400):
    """Eigenvalues of the block-diagonal preconditioned three-field operator
    (dense generalized symmetric eigenproblem; small meshes only)."""
    _check_size(system, max_pressure_dofs)
    A3 = system.to_sparse().toarray()
    n_u, n_p, N = system.n_u, system.n_p, system.N
    P = np.zeros_like(A3)
    P[:n_u, :n_u] = _dense(system.Au)
    mid = _dense(system.middle_matrix())
    if system.rho:
        v = system.middle_rankone()
        mid = mid + system.rho * np.outer(v, v)
    P[n_u:n_u + n_p, n_u:n_u + n_p] = mid
    last = np.diag(system.Mlast)
    if system.rho:
        last = last + system.rho * np.outer(system.w, system.w)
    P[n_u + n_p:, n_u + n_p:] = last
    return linalg.eigh(A3, P, eigvals_only=True)


def write_eig_csv(reports, path):
    """One row per report: eps, rho, theta_min, theta_max, beta, c_korn."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "rho", "theta_min", "theta_max",
                         "beta", "c_korn"])
        for rep in reports:
            writer.writerow([f"{rep.eps:.6e}", f"{rep.rho:.6e}",
                             f"{rep.min:.12e}", f"{rep.max:.12e}",
                             f"{rep.beta:.12e}", f"{rep.c_korn:.12e}"])
