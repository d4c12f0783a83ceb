"""Preconditioned MINRES and restarted GMRES with residual-history reports.

Both solvers stop on the relative preconditioned residual (MINRES measures it
in the inverse-preconditioner norm, left-preconditioned GMRES in the
Euclidean norm of the preconditioned residual) and report the true relative
residual alongside.  GMRES iteration counts are totals over all restart
cycles.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import SolverError


@dataclass
class SolverConfig:
    """Outer solver settings: tol 1e-8, at most 1000 iterations, restart 30,
    zero initial guess."""

    tol: float = 1e-8
    maxit: int = 1000
    restart: int = 30

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError("tolerance must be in (0, 1)")
        if self.restart < 1:
            raise ValueError("restart must be at least 1")


@dataclass
class SolveReport:
    """Iteration history of one outer solve."""

    method: str
    iterations: int
    residuals: np.ndarray          # preconditioned norms, entry 0 = initial
    converged: bool
    wall_time: float
    inner_iterations: int = 0
    true_relres: float = float("nan")

    @property
    def relative_residuals(self):
        if self.residuals[0] == 0:
            return self.residuals
        return self.residuals / self.residuals[0]


def _wrap(op):
    if sparse.issparse(op):
        return op.__matmul__
    return op


def _finish(method, x, matvec, b, residuals, converged, t0, psolve_count):
    bnorm = np.linalg.norm(b)
    true_rel = (np.linalg.norm(b - matvec(x)) / bnorm) if bnorm > 0 else 0.0
    return SolveReport(method, len(residuals) - 1, np.asarray(residuals),
                       converged, time.perf_counter() - t0,
                       psolve_count, true_rel)


def minres(A, b, M=None, cfg=None):
    """Preconditioned MINRES for symmetric (possibly indefinite) operators.

    M must apply the inverse of an SPD preconditioner.  Minimizes the
    residual in the M^{-1} norm; the recurrence value ||r_k||_{M^{-1}} is
    recorded per iteration and is nonincreasing.  Returns (x, SolveReport).
    """
    cfg = cfg or SolverConfig()
    matvec = _wrap(A)
    psolve = M if M is not None else (lambda v: v)
    inner0 = getattr(M, "inner_iterations", None)
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n)

    r1 = b.copy()
    y = psolve(r1)
    beta1_sq = r1 @ y
    if beta1_sq < 0:
        raise SolverError("preconditioner is not positive definite")
    beta1 = np.sqrt(beta1_sq)
    residuals = [beta1]
    if beta1 == 0.0:
        return x, _finish("minres", x, matvec, b, residuals, True, t0, 0)

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    converged = False

    for _ in range(cfg.maxit):
        v = y / beta
        y = matvec(v)
        if oldb > 0.0:
            y -= (beta / oldb) * r1
        alfa = v @ y
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = psolve(r2)
        oldb = beta
        beta_sq = r2 @ y
        if beta_sq < 0:
            raise SolverError("preconditioner is not positive definite")
        beta = np.sqrt(beta_sq)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        residuals.append(abs(phibar))
        if abs(phibar) <= cfg.tol * beta1:
            converged = True
            break
        if beta <= np.finfo(float).eps * beta1:
            converged = True  # Krylov space exhausted: exact solution
            break
    inner = (getattr(M, "inner_iterations", 0) - inner0) if inner0 is not None else 0
    rep = _finish("minres", x, matvec, b, residuals, converged, t0, inner)
    return x, rep


def gmres_restarted(A, b, M=None, cfg=None):
    """Left-preconditioned restarted GMRES (Arnoldi with modified
    Gram-Schmidt, Givens rotations).  Iteration count is the total number of
    inner steps across restart cycles; the preconditioned residual norm is
    nonincreasing within each cycle.  Returns (x, SolveReport).
    """
    cfg = cfg or SolverConfig()
    matvec = _wrap(A)
    psolve = M if M is not None else (lambda v: v)
    inner0 = getattr(M, "inner_iterations", None)
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    m = cfg.restart
    x = np.zeros(n)

    z0 = psolve(b)
    bnorm = np.linalg.norm(z0)
    residuals = [bnorm]
    if bnorm == 0.0:
        return x, _finish("gmres", x, matvec, b, residuals, True, t0, 0)

    total = 0
    converged = False
    prev_cycle_res = np.inf
    while total < cfg.maxit and not converged:
        r = b - matvec(x) if total else b.copy()
        z = psolve(r)
        beta = np.linalg.norm(z)
        if beta <= cfg.tol * bnorm:
            converged = True
            break
        if beta >= prev_cycle_res:
            break  # stagnation across a full restart cycle
        prev_cycle_res = beta

        V = np.empty((m + 1, n))
        V[0] = z / beta
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        j = 0
        while j < m and total < cfg.maxit:
            wv = psolve(matvec(V[j]))
            for i in range(j + 1):
                H[i, j] = V[i] @ wv
                wv -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(wv)
            lucky = H[j + 1, j] <= 1e-14 * abs(H[:j + 2, j]).max()
            if not lucky:
                V[j + 1] = wv / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j += 1
            residuals.append(abs(g[j]))
            if abs(g[j]) <= cfg.tol * bnorm or lucky:
                converged = abs(g[j]) <= cfg.tol * bnorm or lucky
                break
        if j > 0:
            ycoef = np.linalg.solve(np.triu(H[:j, :j]), g[:j])
            x = x + V[:j].T @ ycoef

    inner = (getattr(M, "inner_iterations", 0) - inner0) if inner0 is not None else 0
    rep = _finish("gmres", x, matvec, b, residuals, converged, t0, inner)
    return x, rep


def write_history_csv(report, path):
    """Dump (iteration, residual) rows of one solve."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "residual"])
        for k, res in enumerate(report.residuals):
            writer.writerow([k, f"{res:.16e}"])
