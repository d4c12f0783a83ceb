"""Inexact block preconditioners: IC-preconditioned CG inner solves and the
rank-one Sherman-Morrison-Woodbury closure.

The diagonal variant is SPD (as the outer MINRES requires); the triangular
variant couples the displacement block into the trailing mass block by a
block forward substitution.  All inner solves run to a fixed tight tolerance
so the preconditioner acts as a numerically constant linear operator.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import sparse

from .errors import FactorizationError, InnerSolverError, PreconditionerError

_IC_SHIFTS = (0.0, 1e-3, 1e-2, 1e-1)


@njit(cache=True)
def _ict_kernel(n, Ap, Ai, Ax, droptol, shift, cap):
    """Left-looking incomplete Cholesky with threshold dropping.

    A is the lower triangle in CSC with sorted row indices.  Entries below
    droptol * ||A(j:,j)||_1 are dropped (diagonal always kept).  Returns
    (Lp, Li, Lx, nnz, status): status -1 = ok, -2 = capacity exceeded,
    j >= 0 = nonpositive pivot at column j.
    """
    Lp = np.zeros(n + 1, dtype=np.int64)
    Li = np.empty(cap, dtype=np.int64)
    Lx = np.empty(cap, dtype=np.float64)
    w = np.zeros(n)
    inpat = np.zeros(n, dtype=np.bool_)
    touched = np.empty(n, dtype=np.int64)
    keep = np.empty(n, dtype=np.int64)
    head = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    ptr = np.zeros(n, dtype=np.int64)
    nnz = 0
    for j in range(n):
        ntouch = 0
        colnorm = 0.0
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            v = Ax[p]
            colnorm += abs(v)
            if i == j:
                v += shift[j]
            if not inpat[i]:
                inpat[i] = True
                touched[ntouch] = i
                ntouch += 1
                w[i] = v
            else:
                w[i] += v
        thresh = droptol * colnorm
        k = head[j]
        while k != -1:
            knext = nxt[k]
            pk = ptr[k]
            ljk = Lx[pk]
            for q in range(pk, Lp[k + 1]):
                i = Li[q]
                val = ljk * Lx[q]
                if not inpat[i]:
                    inpat[i] = True
                    touched[ntouch] = i
                    ntouch += 1
                    w[i] = -val
                else:
                    w[i] -= val
            pk += 1
            ptr[k] = pk
            if pk < Lp[k + 1]:
                r = Li[pk]
                nxt[k] = head[r]
                head[r] = k
            k = knext
        dj = w[j] if inpat[j] else 0.0
        if dj <= 0.0:
            for idx in range(ntouch):
                ii = touched[idx]
                inpat[ii] = False
                w[ii] = 0.0
            return Lp, Li, Lx, nnz, j
        ljj = np.sqrt(dj)
        nkeep = 0
        for idx in range(ntouch):
            i = touched[idx]
            if i > j and abs(w[i]) >= thresh:
                keep[nkeep] = i
                nkeep += 1
        kept = np.sort(keep[:nkeep])
        if nnz + nkeep + 1 > cap:
            return Lp, Li, Lx, nnz, -2
        Li[nnz] = j
        Lx[nnz] = ljj
        nnz += 1
        for idx in range(nkeep):
            i = kept[idx]
            Li[nnz] = i
            Lx[nnz] = w[i] / ljj
            nnz += 1
        Lp[j + 1] = nnz
        if nkeep > 0:
            ptr[j] = Lp[j] + 1
            r = Li[Lp[j] + 1]
            nxt[j] = head[r]
            head[r] = j
        for idx in range(ntouch):
            ii = touched[idx]
            inpat[ii] = False
            w[ii] = 0.0
    return Lp, Li, Lx, nnz, -1


@njit(cache=True)
def _solve_lower(n, Lp, Li, Lx, b):
    """L y = b with L in CSC, diagonal first in each column."""
    y = b.copy()
    for j in range(n):
        yj = y[j] / Lx[Lp[j]]
        y[j] = yj
        for p in range(Lp[j] + 1, Lp[j + 1]):
            y[Li[p]] -= Lx[p] * yj
    return y


@njit(cache=True)
def _solve_lower_t(n, Lp, Li, Lx, b):
    """L^T x = b using the CSC storage of L."""
    x = b.copy()
    for j in range(n - 1, -1, -1):
        acc = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            acc -= Lx[p] * x[Li[p]]
        x[j] = acc / Lx[Lp[j]]
    return x


class ICFactor:
    """Lower-triangular incomplete Cholesky factor with solve support."""

    def __init__(self, L, shift_used):
        self.L = L
        self.shift_used = shift_used
        self.n = L.shape[0]

    def solve(self, b):
        """(L L^T)^{-1} b."""
        y = _solve_lower(self.n, self.L.indptr, self.L.indices, self.L.data,
                         np.asarray(b, dtype=float))
        return _solve_lower_t(self.n, self.L.indptr, self.L.indices,
                              self.L.data, y)

    def __call__(self, b):
        return self.solve(b)


def ic_factorize(S, droptol=1e-3):
    """Threshold-dropping incomplete Cholesky of an SPD sparse matrix.

    On a nonpositive pivot the factorization is retried with diagonal shifts
    beta * diag(S) for beta in 1e-3, 1e-2, 1e-1 before giving up.
    """
    S = sparse.csc_matrix(S)
    diag = S.diagonal()
    if np.any(diag <= 0):
        raise FactorizationError("matrix has a nonpositive diagonal entry")
    lower = sparse.tril(S, format="csc")
    lower.sort_indices()
    n = S.shape[0]
    for beta in _IC_SHIFTS:
        shift = beta * diag
        cap = max(4 * lower.nnz, 16 * n, 64)
        while True:
            Lp, Li, Lx, nnz, status = _ict_kernel(
                n, lower.indptr.astype(np.int64), lower.indices.astype(np.int64),
                lower.data.astype(np.float64), float(droptol), shift, cap)
            if status != -2:
                break
            cap *= 2
        if status == -1:
            L = sparse.csc_matrix((Lx[:nnz], Li[:nnz], Lp), shape=(n, n))
            return ICFactor(L, beta)
    raise FactorizationError(
        "incomplete Cholesky broke down for every diagonal shift")


def pcg(A, b, M=None, tol=1e-12, maxit=200, raise_on_fail=True):
    """Preconditioned conjugate gradients; returns (x, iterations).

    A: sparse matrix or matvec callable (SPD); M: SPD preconditioner solve.
    Converges on ||b - A x|| <= tol * ||b||.
    """
    matvec = A.__matmul__ if sparse.issparse(A) else A
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0
    r = b.copy()
    z = M(r) if M is not None else r.copy()
    d = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ad = matvec(d)
        alpha = rz / (d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = M(r) if M is not None else r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    if raise_on_fail:
        raise InnerSolverError(
            f"CG did not reach {tol:g} within {maxit} iterations "
            f"(relres {np.linalg.norm(r) / bnorm:.3e})")
    return x, maxit


def smw_solve(mp_diag, rho, w, v):
    """(M + rho w w^T)^{-1} v for diagonal positive M, via the rank-one
    Sherman-Morrison-Woodbury update; O(N) work."""
    y = v / mp_diag
    if rho == 0.0:
        return y
    t = w / mp_diag
    return y - (rho * (w @ y) / (1.0 + rho * (w @ t))) * t


@dataclass
class InnerSolverConfig:
    """Accuracy of the inner block solves (kept tight so the preconditioner
    is numerically a fixed operator)."""

    tol: float = 1e-12
    maxit: int = 200
    ic_droptol: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError("inner tolerance must be in (0, 1)")
        if self.maxit < 1:
            raise ValueError("inner maxit must be at least 1")


class BlockPreconditioner:
    """Block diagonal or block (lower) triangular preconditioner.

    Leading block: IC-preconditioned CG on the displacement stiffness.
    Middle block: IC-preconditioned CG on the sparse flow block, with the
    embedded rank-one regularizer closed exactly by SMW around that solve.
    Trailing block: closed-form SMW on the diagonal mass plus rank-one.
    """

    def __init__(self, system, kind="diagonal", cfg=None):
        if kind not in ("diagonal", "triangular"):
            raise ValueError(f"unknown preconditioner kind '{kind}'")
        self.kind = kind
        self.system = system
        self.cfg = cfg or InnerSolverConfig()
        self.ic_A = ic_factorize(system.Au, self.cfg.ic_droptol)
        self._mid = system.middle_matrix()
        self.ic_mid = ic_factorize(self._mid, self.cfg.ic_droptol)
        self.inner_iterations = 0
        v = system.middle_rankone()
        self._mid_v = v
        if v is not None:
            self._mid_vsolve, its = pcg(self._mid, v, self.ic_mid.solve,
                                        self.cfg.tol, self.cfg.maxit)
            self.inner_iterations += its

    def _solve_A(self, r):
        x, its = pcg(self.system.Au, r, self.ic_A.solve,
                     self.cfg.tol, self.cfg.maxit)
        self.inner_iterations += its
        return x

    def _solve_mid(self, r):
        y, its = pcg(self._mid, r, self.ic_mid.solve,
                     self.cfg.tol, self.cfg.maxit)
        self.inner_iterations += its
        if self._mid_v is None:
            return y
        v, t = self._mid_v, self._mid_vsolve
        rho = self.system.rho
        return y - (rho * (v @ y) / (1.0 + rho * (v @ t))) * t

    def _solve_last(self, r):
        return smw_solve(self.system.Mlast, self.system.rho,
                         self.system.w, r)

    def apply(self, r):
        try:
            if self.kind == "diagonal":
                return self._apply_diag(r)
            return self._apply_tri(r)
        except InnerSolverError as exc:
            raise PreconditionerError(str(exc)) from exc

    def _apply_diag(self, r):
        r1, r2, r3 = self.system.split(np.asarray(r, dtype=float))
        return np.concatenate([
            self._solve_A(r1), self._solve_mid(r2), self._solve_last(r3)])

    def _apply_tri(self, r):
        r1, r2, r3 = self.system.split(np.asarray(r, dtype=float))
        z1 = self._solve_A(r1)
        z2 = -self._solve_mid(r2)
        z3 = -self._solve_last(r3 + self.system.Bc @ z1)
        return np.concatenate([z1, z2, z3])

    def __call__(self, r):
        return self.apply(r)


def apply_diag(precond, r):
    """Apply the block diagonal preconditioner inverse to r."""
    if precond.kind != "diagonal":
        raise ValueError("preconditioner was built as " + precond.kind)
    return precond.apply(r)


def apply_tri(precond, r):
    """Apply the block triangular preconditioner inverse to r."""
    if precond.kind != "triangular":
        raise ValueError("preconditioner was built as " + precond.kind)
    return precond.apply(r)
