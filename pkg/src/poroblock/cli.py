"""Command-line front end.

Subcommands: solve (one scenario, one mesh), experiment (iteration-count
sweep), eig (dense spectral diagnostics), convergence (refinement study),
export-mesh (VTK dump).  A key=value config file given with --config
overrides the flags.  Exit code 0 on full convergence, 2 on any failed cell.
"""

import argparse
import sys

import numpy as np

from .assembly import PhysicalParams, assemble_blocks
from .diagnostics import dense_schur_eigs, write_eig_csv
from .driver import (ExperimentSpec, convergence_study, export_fields,
                     run_experiment, run_layered_experiment, time_march,
                     write_table_csv)
from .errors import PoroblockError
from .krylov import SolverConfig, write_history_csv
from .mesh import build_structured_simplicial, write_vtk
from .precond import InnerSolverConfig
from .problems import make_scenario
from .spaces import dirichlet_constraints


def _common(parser):
    parser.add_argument("--dim", type=int, default=2, choices=(2, 3))
    parser.add_argument("--n", type=int, default=8,
                        help="subdivisions per axis")
    parser.add_argument("--scenario", default="I",
                        choices=("I", "II", "layered"))
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--solver", default="gmres",
                        choices=("minres", "gmres", "direct"))
    parser.add_argument("--rho-scale", type=float, default=0.1)
    parser.add_argument("--ic-droptol", type=float, default=1e-3)
    parser.add_argument("--inner-tol", type=float, default=1e-12)
    parser.add_argument("--tol", type=float, default=1e-8)
    parser.add_argument("--steps", type=int, default=1)
    parser.add_argument("--out", default=None)
    parser.add_argument("--config", default=None,
                        help="key=value file; entries override flags")


def _apply_config(args, parser):
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    for ln in lines:
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            parser.error(f"bad config line: {ln!r}")
        key, value = (part.strip() for part in ln.split("=", 1))
        key = {"lambda": "lam"}.get(key, key.replace("-", "_"))
        if not hasattr(args, key):
            parser.error(f"unknown config key: {key}")
        old = getattr(args, key)
        if isinstance(old, bool):
            value = value.lower() in ("1", "true", "yes")
        elif isinstance(old, int):
            value = int(value)
        elif isinstance(old, float):
            value = float(value)
        setattr(args, key, value)
    return args


def _inner_cfg(args):
    return InnerSolverConfig(tol=args.inner_tol, ic_droptol=args.ic_droptol)


def _solver_cfg(args):
    return SolverConfig(tol=args.tol)


def _cmd_solve(args):
    from .problems import layered_strip_params, layered_strip_scenario

    mesh = build_structured_simplicial(args.n, args.dim)
    if args.scenario == "layered":
        scenario = layered_strip_scenario()
        params = layered_strip_params(mesh, args.dt)
    else:
        scenario = make_scenario(args.scenario, args.dim, mu=1.0,
                                 lam=args.lam)
        params = PhysicalParams(mu=1.0, lam=args.lam, dt=args.dt)
    res = time_march(mesh, scenario, params, args.steps, solver=args.solver,
                     rho_scale=args.rho_scale, solver_cfg=_solver_cfg(args),
                     inner_cfg=_inner_cfg(args), on_nonconverged="report")
    ok = True
    for step, rep in enumerate(res.reports, start=1):
        if rep is None:
            print(f"step {step}: direct solve")
            continue
        ok &= rep.converged
        print(f"step {step}: {rep.method} {rep.iterations} iterations, "
              f"relative residual {rep.relative_residuals[-1]:.3e}, "
              f"converged {rep.converged}")
    if not np.isnan(res.u_h1_error):
        print(f"H1(u) error {res.u_h1_error:.6e}, "
              f"accumulated L2(p) error {res.p_l2_accum:.6e}")
    if args.out:
        if args.out.endswith(".vtk"):
            export_fields(mesh, res.u_full, res.p_full, args.out)
        else:
            rep = next((r for r in res.reports if r is not None), None)
            if rep is not None:
                write_history_csv(rep, args.out)
        print(f"wrote {args.out}")
    return 0 if ok else 2


def _cmd_experiment(args):
    if args.scenario == "layered":
        rows, failed = run_layered_experiment(
            ns=(12, 24), dts=(1e-3, 1e-6), steps=args.steps,
            solver_cfg=_solver_cfg(args), inner_cfg=_inner_cfg(args),
            out=args.out)
    else:
        spec = ExperimentSpec(
            dim=args.dim, ns=(args.n, 2 * args.n + 1), steps=args.steps,
            rho_scale=args.rho_scale, solver_cfg=_solver_cfg(args),
            inner_cfg=_inner_cfg(args), out=args.out)
        rows, failed = run_experiment(spec)
    for row in rows:
        print(f"{row['solver']:>7} scen {row['scenario']:>7} "
              f"dt={row['dt']:<8g} lambda={row['lambda']:<8g} "
              f"N={row['N']:<6d} iters={row['iterations']:<4d} "
              f"converged={row['converged']}")
    if args.out:
        print(f"wrote {args.out}")
    return 2 if failed else 0


def _cmd_eig(args):
    mesh = build_structured_simplicial(args.n, args.dim)
    scenario = make_scenario(args.scenario, args.dim, mu=1.0, lam=args.lam)
    params = PhysicalParams(mu=1.0, lam=args.lam, dt=args.dt)
    dofs = dirichlet_constraints(mesh, scenario, 0.0)
    blocks = assemble_blocks(mesh, dofs, params)
    mode = "mixed" if scenario.mixed else "pure-dbc"
    reports = dense_schur_eigs(blocks, eps_list=(1e-2, 1e-4, 1e-8),
                               mode=mode, rho_scale=args.rho_scale,
                               mesh_size=1.0 / args.n)
    for rep in reports:
        print(f"eps={rep.eps:<8g} rho={rep.rho:<10g} "
              f"theta in [{rep.min:.6e}, {rep.max:.6e}] "
              f"beta={rep.beta:.4f} C_Korn={rep.c_korn:.4f}")
    if args.out:
        write_eig_csv(reports, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_convergence(args):
    rows, slopes = convergence_study(dim=args.dim, lam=args.lam,
                                     scenario_kind=args.scenario
                                     if args.scenario != "layered" else "I",
                                     solver=args.solver, out=args.out)
    for row in rows:
        print(f"n={row['n']:<4d} h={row['h']:.4f} "
              f"H1(u)={row['err_u_h1']:.6e} L2(p)={row['err_p_l2']:.6e}")
    print(f"slopes: H1(u) {slopes['err_u_h1']:.3f}, "
          f"L2(p) {slopes['err_p_l2']:.3f}")
    return 0


def _cmd_export_mesh(args):
    mesh = build_structured_simplicial(args.n, args.dim)
    path = args.out or f"mesh_{args.dim}d_n{args.n}.vtk"
    write_vtk(mesh, path)
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "experiment": _cmd_experiment,
    "eig": _cmd_eig,
    "convergence": _cmd_convergence,
    "export-mesh": _cmd_export_mesh,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="poroblock",
        description="Poroelasticity solvers with block Schur-complement "
                    "preconditioning")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        _common(sp)
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    try:
        return _COMMANDS[args.command](args)
    except PoroblockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
