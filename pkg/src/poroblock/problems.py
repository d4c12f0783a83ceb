"""Boundary-condition scenarios and manufactured solutions.

The manufactured data (body force, fluid source, traction, flux) are derived
symbolically from the exact displacement/pressure pair, so they are consistent
with the governing equations by construction for every parameter choice.
Both exact solutions are proportional to t, hence zero initial conditions.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .errors import ConfigurationError


def _vectorize(fns, width=None):
    """Wrap lambdified component functions into f(pts, t) -> (m,) or (m, w)."""

    def call(pts, t):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = pts.shape[0]
        coords = [pts[:, i] for i in range(pts.shape[1])]
        cols = [np.broadcast_to(np.asarray(f(*coords, t), dtype=float), (m,))
                for f in fns]
        if width is None:
            return np.array(cols[0])
        return np.column_stack(cols)

    return call


@dataclass
class ManufacturedSolution:
    """Exact fields and PDE-consistent data for one parameter set."""

    dim: int
    u: Callable
    p: Callable
    grad_u: Callable   # (m, d, d), [a, b] = d u_a / d x_b
    grad_p: Callable   # (m, d)
    div_u: Callable
    f: Callable
    s: Callable
    mu: float
    lam: float
    alpha: float
    kappa: float

    def traction(self, pts, t, normal):
        """(sigma(u) - alpha p I) . n with sigma = 2 mu eps(u) + lam div(u) I."""
        g = self.grad_u(pts, t)
        eps = 0.5 * (g + np.swapaxes(g, 1, 2))
        scal = self.lam * self.div_u(pts, t) - self.alpha * self.p(pts, t)
        return (2.0 * self.mu * np.einsum("mab,b->ma", eps, normal)
                + scal[:, None] * np.asarray(normal)[None, :])

    def flux(self, pts, t, normal):
        """kappa grad(p) . n."""
        return self.kappa * (self.grad_p(pts, t) @ np.asarray(normal))


def _build_manufactured(dim, u_exprs, p_expr, mu, lam, alpha, c0, kappa):
    xs = sp.symbols("x y z")[:dim]
    t = sp.Symbol("t")
    args = (*xs, t)
    u = sp.Matrix(u_exprs)
    grad_u = u.jacobian(xs)
    eps = (grad_u + grad_u.T) / 2
    div_u = sum(sp.diff(u[i], xs[i]) for i in range(dim))
    sigma = 2 * mu * eps + lam * div_u * sp.eye(dim)
    f = sp.Matrix([
        -sum(sp.diff(sigma[i, j], xs[j]) for j in range(dim))
        + alpha * sp.diff(p_expr, xs[i])
        for i in range(dim)
    ])
    s = (sp.diff(alpha * div_u + c0 * p_expr, t)
         - sum(sp.diff(kappa * sp.diff(p_expr, xi), xi) for xi in xs))

    def lam_one(e):
        return sp.lambdify(args, sp.simplify(e), modules="numpy")

    grad_p = [sp.diff(p_expr, xi) for xi in xs]
    gu_fns = [[lam_one(grad_u[i, j]) for j in range(dim)] for i in range(dim)]

    def grad_u_call(pts, tt):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = pts.shape[0]
        coords = [pts[:, i] for i in range(dim)]
        out = np.empty((m, dim, dim))
        for i in range(dim):
            for j in range(dim):
                out[:, i, j] = np.broadcast_to(
                    np.asarray(gu_fns[i][j](*coords, tt), dtype=float), (m,))
        return out

    return ManufacturedSolution(
        dim=dim,
        u=_vectorize([lam_one(u[i]) for i in range(dim)], width=dim),
        p=_vectorize([lam_one(p_expr)]),
        grad_u=grad_u_call,
        grad_p=_vectorize([lam_one(g) for g in grad_p], width=dim),
        div_u=_vectorize([lam_one(div_u)]),
        f=_vectorize([lam_one(f[i]) for i in range(dim)], width=dim),
        s=_vectorize([lam_one(s)]),
        mu=mu, lam=lam, alpha=alpha, kappa=kappa,
    )


def manufactured_solution(dim, mu, lam, alpha=1.0, c0=1.0, kappa=1.0):
    """Smooth exact solution on the unit box, proportional to t."""
    xs = sp.symbols("x y z")[:dim]
    t = sp.Symbol("t")
    pi = sp.pi
    if dim == 2:
        x, y = xs
        bump = sp.sin(pi * x) * sp.sin(pi * y) / (lam + mu)
        u_exprs = [
            t * ((-1 + sp.cos(2 * pi * x)) * sp.sin(2 * pi * y) + bump),
            t * (sp.sin(2 * pi * x) * (1 - sp.cos(2 * pi * y)) + bump),
        ]
        p_expr = -t * sp.sin(pi * x) * sp.sin(pi * y)
    elif dim == 3:
        x, y, z = xs
        sss = sp.sin(pi * x) * sp.sin(pi * y) * sp.sin(pi * z)
        bump = sss / (lam + mu)
        u_exprs = [
            t * ((-1 + sp.cos(2 * pi * x)) * sp.sin(2 * pi * y)
                 * sp.sin(2 * pi * z) + bump),
            t * (2 * sp.sin(2 * pi * x) * (1 - sp.cos(2 * pi * y))
                 * sp.sin(2 * pi * z) + bump),
            t * (sp.sin(2 * pi * x) * sp.sin(2 * pi * y)
                 * (-1 + sp.cos(2 * pi * z)) + bump),
        ]
        p_expr = t * sss
    else:
        raise ConfigurationError(f"no manufactured solution in dim {dim}")
    return _build_manufactured(dim, u_exprs, p_expr, mu, lam, alpha, c0, kappa)


@dataclass
class ScenarioSpec:
    """Boundary-condition kinds per tag plus the problem data functions.

    u_bc / p_bc: tag -> "dirichlet" | "traction" and "dirichlet" | "flux".
    Data functions take (points, t); traction/flux additionally the outward
    unit normal.  None means identically zero.
    """

    name: str
    u_bc: dict
    p_bc: dict
    u_d: Optional[Callable] = None
    t_n: Optional[Callable] = None
    p_d: Optional[Callable] = None
    p_n: Optional[Callable] = None
    f: Optional[Callable] = None
    s: Optional[Callable] = None
    exact: Optional[ManufacturedSolution] = None

    @property
    def mixed(self):
        """True when the displacement has a traction part (no regularization)."""
        return any(kind == "traction" for kind in self.u_bc.values())


def _all_tags(dim):
    return (["left", "right", "bottom", "top"] if dim == 2
            else ["left", "right", "front", "back", "bottom", "top"])


def scenario_dirichlet(ms, dim):
    """Pure Dirichlet boundary conditions for both fields ("Scenario I")."""
    tags = _all_tags(dim)
    return ScenarioSpec(
        name="I",
        u_bc={tag: "dirichlet" for tag in tags},
        p_bc={tag: "dirichlet" for tag in tags},
        u_d=ms.u, p_d=ms.p, f=ms.f, s=ms.s,
        t_n=ms.traction, p_n=ms.flux,
        exact=ms,
    )


def scenario_mixed(ms, dim):
    """Dirichlet everywhere except the x=1 face, which gets traction/flux
    conditions ("Scenario II").
    """
    tags = _all_tags(dim)
    u_bc = {tag: "dirichlet" for tag in tags}
    p_bc = {tag: "dirichlet" for tag in tags}
    u_bc["right"] = "traction"
    p_bc["right"] = "flux"
    return ScenarioSpec(
        name="II", u_bc=u_bc, p_bc=p_bc,
        u_d=ms.u, p_d=ms.p, f=ms.f, s=ms.s,
        t_n=ms.traction, p_n=ms.flux,
        exact=ms,
    )


def make_scenario(kind, dim, mu, lam, alpha=1.0, c0=1.0, kappa=1.0):
    ms = manufactured_solution(dim, mu, lam, alpha=alpha, c0=c0, kappa=kappa)
    if kind in ("I", "dirichlet"):
        return scenario_dirichlet(ms, dim)
    if kind in ("II", "mixed"):
        return scenario_mixed(ms, dim)
    raise ConfigurationError(f"unknown scenario '{kind}'")


def zero_scenario(dim, mixed=False):
    """Homogeneous data; handy for smoke tests (solution stays zero)."""
    tags = _all_tags(dim)
    u_bc = {tag: "dirichlet" for tag in tags}
    p_bc = {tag: "dirichlet" for tag in tags}
    if mixed:
        u_bc["right"] = "traction"
        p_bc["right"] = "flux"
    return ScenarioSpec(name="zero", u_bc=u_bc, p_bc=p_bc)


# Layered strip stand-in for the spinal-cord cross-section: three horizontal
# material bands on the unit square, loaded by a transient indentation pulse
# on the top edge, fixed at the bottom, traction-free on the sides.

STRIP_MATERIALS = {
    # name: (Young's modulus [dyne/cm^2], Poisson ratio, permeability)
    "stiff_membrane": (2.3e7, 0.479, 3.0e-8 / 7.0),
    "soft_upper": (5.0e4, 0.479, 2.0e-8),
    "soft_lower": (5.0e4, 0.479, 2.0e-9),
}


def pulse(t):
    """Transient indentation magnitude applied at the top boundary."""
    t = np.asarray(t, dtype=float)
    return 9000.0 * np.sqrt(np.maximum(t, 0.0) / 0.1) * np.exp(-5.0 * t + 0.5)


def strip_region(pts):
    """Region index by height: 2 = top band, 1 = middle, 0 = bottom."""
    y = np.atleast_2d(pts)[:, 1]
    return np.where(y > 2.0 / 3.0, 2, np.where(y > 1.0 / 3.0, 1, 0))


def layered_strip_scenario():
    """BCs and data of the three-band robustness test."""

    def t_n(pts, t, normal):
        pts = np.atleast_2d(pts)
        out = np.zeros_like(pts)
        on_top = np.abs(pts[:, 1] - 1.0) < 1e-12
        out[on_top, 1] = -pulse(t)
        return out

    def p_d(pts, t):
        pts = np.atleast_2d(pts)
        on_top = np.abs(pts[:, 1] - 1.0) < 1e-12
        return np.where(on_top, pulse(t), 0.0)

    return ScenarioSpec(
        name="layered-strip",
        u_bc={"top": "traction", "bottom": "dirichlet",
              "left": "traction", "right": "traction"},
        p_bc={"top": "dirichlet", "bottom": "flux",
              "left": "dirichlet", "right": "dirichlet"},
        u_d=None, t_n=t_n, p_d=p_d, p_n=None, f=None, s=None,
    )


def layered_strip_params(mesh, dt):
    """Per-element material arrays for the three bands (top to bottom:
    stiff membrane, soft upper, soft lower)."""
    from .assembly import PhysicalParams

    bary = mesh.vertices[mesh.elements].mean(axis=1)
    region = strip_region(bary)
    order = ["soft_lower", "soft_upper", "stiff_membrane"]
    E = np.empty(mesh.num_elements)
    nu = np.empty(mesh.num_elements)
    kap = np.empty(mesh.num_elements)
    for idx, name in enumerate(order):
        e, n, k = STRIP_MATERIALS[name]
        sel = region == idx
        E[sel], nu[sel], kap[sel] = e, n, k
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 - 2.0 * nu) * (1.0 + nu))
    return PhysicalParams(
        mu=float(mu.mean()), lam=float(lam.mean()),
        alpha=1.0, c0=1e-6, kappa=kap, dt=dt,
        mu_elements=mu, lam_elements=lam,
    )
