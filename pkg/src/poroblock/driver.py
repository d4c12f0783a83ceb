"""Implicit-Euler time marching, experiment sweeps, convergence studies,
and CSV/VTK export."""

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .assembly import (PhysicalParams, assemble_blocks, assemble_rhs,
                       local_to_global_u)
from .errors import ConfigurationError, SolverError
from .krylov import SolverConfig, gmres_restarted, minres
from .mesh import build_structured_simplicial, mesh_geometry, write_vtk
from .precond import BlockPreconditioner, InnerSolverConfig
from .problems import (layered_strip_params, layered_strip_scenario,
                       make_scenario)
from .quadrature import simplex_rule
from .spaces import br_gradient_table, dirichlet_constraints, update_lift
from .system import (build_regularizer, build_three_field, build_two_field,
                     recover_fields)


@dataclass
class ExperimentSpec:
    """One iteration-count sweep: a row per (solver, scenario, dt, lam, n)."""

    dim: int = 2
    ns: tuple = (21, 43)
    scenarios: tuple = ("I", "II")
    lams: tuple = (1.0, 1e4)
    dts: tuple = (1e-3, 1e-6)
    solvers: tuple = ("minres", "gmres")
    steps: int = 1
    mu: float = 1.0
    c0: float = 1.0
    kappa: float = 1.0
    rho_scale: float = 0.1
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    inner_cfg: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    out: str = None


@dataclass
class TimeMarchResult:
    """Final fields plus per-step solve reports and error accumulators."""

    mesh: object
    dofs: object
    u_full: np.ndarray
    p_full: np.ndarray
    reports: list
    u_h1_error: float = float("nan")
    p_l2_accum: float = float("nan")

    @property
    def iterations(self):
        return [r.iterations for r in self.reports if r is not None]


def _reg_mode(scenario):
    return "mixed" if scenario.mixed else "pure-dbc"


def h1_seminorm_error(mesh, u_full, exact, t, degree=4):
    """Element-quadrature H1-seminorm error of the displacement field."""
    geometry = mesh_geometry(mesh)
    bary, wts = simplex_rule(mesh.dim, degree)
    table = br_gradient_table(geometry, bary)
    uh = u_full[local_to_global_u(mesh)]
    grad_h = np.einsum("el,eqlab->eqab", uh, table)
    pts = np.einsum("qv,evd->eqd", bary, mesh.vertices[mesh.elements])
    grad_e = exact.grad_u(pts.reshape(-1, mesh.dim), t).reshape(grad_h.shape)
    diff = grad_h - grad_e
    return float(np.sqrt(np.einsum("e,q,eqab,eqab->",
                                   geometry.volumes, wts, diff, diff)))


def pressure_error(mesh, p_full, exact, t):
    """Cellwise L2 error of the interior pressure against the exact field at
    element barycenters."""
    geometry = mesh_geometry(mesh)
    centers = mesh.vertices[mesh.elements].mean(axis=1)
    diff = p_full[:mesh.num_elements] - exact.p(centers, t)
    return float(np.sqrt(np.sum(geometry.volumes * diff ** 2)))


def time_march(mesh, scenario, params, n_steps, solver="gmres",
               rho_scale=0.1, solver_cfg=None, inner_cfg=None,
               on_nonconverged="raise"):
    """March the coupled system with zero initial state.

    solver: 'minres' (block diagonal preconditioner), 'gmres' (block
    triangular), or 'direct' (two-field sparse factorization, the oracle
    path).  Each step assembles the right-hand side from the previous fields,
    solves, and recovers the physical unknowns.
    """
    solver_cfg = solver_cfg or SolverConfig()
    dofs0 = dirichlet_constraints(mesh, scenario, 0.0)
    blocks = assemble_blocks(mesh, dofs0, params)
    mode = _reg_mode(scenario)
    reg = build_regularizer(blocks.Mp, mode, rho_scale)
    system = build_three_field(blocks, params, reg)

    precond = None
    factor = None
    if solver == "minres":
        precond = BlockPreconditioner(system, "diagonal", inner_cfg)
    elif solver == "gmres":
        precond = BlockPreconditioner(system, "triangular", inner_cfg)
    elif solver == "direct":
        factor = splu(build_two_field(blocks, params).tocsc())
    else:
        raise ConfigurationError(f"unknown solver '{solver}'")

    u_full = np.zeros(dofs0.n_u)
    p_full = np.zeros(dofs0.n_p)
    reports = []
    u_err = float("nan")
    p_acc = 0.0
    dofs = dofs0
    for step in range(1, n_steps + 1):
        t = step * params.dt
        dofs = update_lift(dofs, mesh, scenario, t)
        b1, b2 = assemble_rhs(blocks, scenario, t, prev_u=u_full,
                              prev_p=p_full, dofs=dofs)
        if solver == "direct":
            n_u = blocks.A1.shape[0]
            x = factor.solve(np.concatenate([b1, b2]))
            u_f, p_f = x[:n_u], x[n_u:]
            reports.append(None)
        else:
            rhs = system.rhs(b1, b2)
            run = minres if solver == "minres" else gmres_restarted
            x, report = run(system.matvec, rhs, precond, solver_cfg)
            reports.append(report)
            if not report.converged:
                msg = (f"{solver} stalled at step {step}: "
                       f"{report.iterations} iterations, relative residual "
                       f"{report.relative_residuals[-1]:.3e} "
                       f"(last residuals {report.residuals[-3:]})")
                if on_nonconverged == "raise":
                    raise SolverError(msg)
            u_f, p_f = recover_fields(x, system)
        u_full = dofs.full_u(u_f)
        p_full = dofs.full_p(p_f)
        if scenario.exact is not None:
            u_err = h1_seminorm_error(mesh, u_full, scenario.exact, t)
            p_acc += params.dt * pressure_error(mesh, p_full,
                                                scenario.exact, t) ** 2
    return TimeMarchResult(mesh, dofs, u_full, p_full, reports,
                           u_err, np.sqrt(p_acc))


def run_experiment(spec):
    """Iteration-count table over the spec grid.

    Returns (rows, any_failed); each row is a dict with solver, scenario,
    dt, lambda, N, iterations, residual, seconds, converged.  Failed cells
    are marked rather than aborting the sweep.
    """
    rows = []
    any_failed = False
    for scen_kind in spec.scenarios:
        for n in spec.ns:
            mesh = build_structured_simplicial(n, spec.dim)
            for lam in spec.lams:
                scenario = make_scenario(scen_kind, spec.dim, mu=spec.mu,
                                         lam=lam, c0=spec.c0,
                                         kappa=spec.kappa)
                for dt in spec.dts:
                    params = PhysicalParams(mu=spec.mu, lam=lam, c0=spec.c0,
                                            kappa=spec.kappa, dt=dt)
                    for solver in spec.solvers:
                        row = {"solver": solver, "scenario": scen_kind,
                               "dim": spec.dim, "dt": dt, "lambda": lam,
                               "N": mesh.num_elements}
                        t0 = time.perf_counter()
                        try:
                            res = time_march(
                                mesh, scenario, params, spec.steps,
                                solver=solver, rho_scale=spec.rho_scale,
                                solver_cfg=spec.solver_cfg,
                                inner_cfg=spec.inner_cfg)
                            rep = res.reports[-1]
                            row.update(
                                iterations=rep.iterations,
                                residual=rep.relative_residuals[-1],
                                converged=rep.converged,
                                seconds=time.perf_counter() - t0)
                            any_failed |= not rep.converged
                        except (SolverError, ConfigurationError) as exc:
                            row.update(iterations=-1, residual=float("nan"),
                                       converged=False,
                                       seconds=time.perf_counter() - t0)
                            row["error"] = str(exc)
                            any_failed = True
                        rows.append(row)
    if spec.out:
        write_table_csv(rows, spec.out)
    return rows, any_failed


def run_layered_experiment(ns=(12, 24), dts=(1e-3, 1e-6),
                           solvers=("minres", "gmres"), steps=1,
                           solver_cfg=None, inner_cfg=None, out=None):
    """Three-band robustness sweep (discontinuous Lame constants and
    permeability); mixed boundary conditions, no regularization."""
    rows = []
    any_failed = False
    scenario = layered_strip_scenario()
    for n in ns:
        if n % 3:
            raise ConfigurationError("layered mesh size must be a multiple "
                                     "of 3 so the bands align with elements")
        mesh = build_structured_simplicial(n, 2)
        for dt in dts:
            params = layered_strip_params(mesh, dt)
            for solver in solvers:
                row = {"solver": solver, "scenario": "layered", "dim": 2,
                       "dt": dt, "lambda": float("nan"),
                       "N": mesh.num_elements}
                t0 = time.perf_counter()
                try:
                    res = time_march(mesh, scenario, params, steps,
                                     solver=solver, solver_cfg=solver_cfg,
                                     inner_cfg=inner_cfg)
                    rep = res.reports[-1]
                    row.update(iterations=rep.iterations,
                               residual=rep.relative_residuals[-1],
                               converged=rep.converged,
                               seconds=time.perf_counter() - t0)
                    any_failed |= not rep.converged
                except (SolverError, ConfigurationError) as exc:
                    row.update(iterations=-1, residual=float("nan"),
                               converged=False,
                               seconds=time.perf_counter() - t0)
                    row["error"] = str(exc)
                    any_failed = True
                rows.append(row)
    if out:
        write_table_csv(rows, out)
    return rows, any_failed


def convergence_study(dim=2, ns=(8, 16, 32), lam=1.0, mu=1.0, T=0.1,
                      dt_over_h=0.1, scenario_kind="I", solver="direct",
                      out=None):
    """Refinement study of the displacement H1 error at the final time and
    the time-accumulated pressure error; dt is tied to h so the spatial
    error dominates.  Returns (rows, slopes)."""
    rows = []
    for n in ns:
        h = 1.0 / n
        dt = dt_over_h * h
        steps = max(1, round(T / dt))
        mesh = build_structured_simplicial(n, dim)
        scenario = make_scenario(scenario_kind, dim, mu=mu, lam=lam)
        params = PhysicalParams(mu=mu, lam=lam, dt=dt)
        res = time_march(mesh, scenario, params, steps, solver=solver)
        rows.append({"n": n, "h": h, "dt": dt, "steps": steps,
                     "err_u_h1": res.u_h1_error, "err_p_l2": res.p_l2_accum})
    hs = np.array([r["h"] for r in rows])
    slopes = {}
    for key in ("err_u_h1", "err_p_l2"):
        errs = np.array([r[key] for r in rows])
        slopes[key] = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    if out:
        write_table_csv(rows, out)
    return rows, slopes


def export_fields(mesh, u_full, p_full, path):
    """Write displacement (vertex part) and interior pressure as legacy VTK."""
    d = mesh.dim
    nv = mesh.num_vertices
    disp = u_full[:nv * d].reshape(nv, d)
    write_vtk(mesh, path,
              point_data={"displacement": disp},
              cell_data={"pressure": p_full[:mesh.num_elements]})


def write_table_csv(rows, path):
    """Deterministic CSV dump of a list of dicts (union of keys, stable
    order of first appearance)."""
    fields = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, restval="")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    except OSError as exc:
        raise ConfigurationError(f"cannot write table to {path}: {exc}")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.12g}"
    return value


def read_table_csv(path):
    """Read back a table written by write_table_csv (values as strings)."""
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read table from {path}: {exc}")
