"""Quadrature rules on reference simplices.

Rules are stored in barycentric coordinates with weights summing to one, so
that the integral of f over a simplex K is |K| * sum(w_q * f(x_q)).  The
volume rules cover the polynomial degrees needed by the element integrands
(stiffness, loads); facet rules are the simplex rules one dimension down.
"""

import numpy as np

from .errors import ConfigurationError


def _orbit(*groups):
    """Assemble (points, weights) from (weight, barycentric tuple) orbits.

    Each group is (w, coords); all distinct permutations of coords are added
    with weight w.
    """
    from itertools import permutations

    pts, wts = [], []
    for w, coords in groups:
        seen = set()
        for perm in permutations(coords):
            if perm in seen:
                continue
            seen.add(perm)
            pts.append(perm)
            wts.append(w)
    return np.array(pts, dtype=float), np.array(wts, dtype=float)


def _gauss_interval(npts):
    """Gauss-Legendre on [0,1] as 2-point barycentric coords (1-x, x)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    bary = np.column_stack([1.0 - x, x])
    return bary, w


def _triangle_rule(degree):
    if degree <= 1:
        return _orbit((1.0, (1 / 3, 1 / 3, 1 / 3)))
    if degree == 2:
        return _orbit((1 / 3, (2 / 3, 1 / 6, 1 / 6)))
    if degree <= 4:
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        return _orbit((w1, (1 - 2 * a1, a1, a1)), (w2, (1 - 2 * a2, a2, a2)))
    if degree <= 5:
        a1, w1 = 0.470142064105115, 0.132394152788506
        a2, w2 = 0.101286507323456, 0.125939180544827
        return _orbit(
            (0.225, (1 / 3, 1 / 3, 1 / 3)),
            (w1, (1 - 2 * a1, a1, a1)),
            (w2, (1 - 2 * a2, a2, a2)),
        )
    raise ConfigurationError(f"no triangle rule of degree {degree}")


def _tetrahedron_rule(degree):
    if degree <= 1:
        return _orbit((1.0, (1 / 4, 1 / 4, 1 / 4, 1 / 4)))
    if degree == 2:
        a = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        b = (5.0 - np.sqrt(5.0)) / 20.0
        return _orbit((1 / 4, (a, b, b, b)))
    if degree <= 5:
        # 15-point degree-5 rule (one negative-free Keast set).
        w1 = 0.1817020685825351
        w2 = 0.0361607142857143
        w3 = 0.0698714945161738
        w4 = 0.0656948493683187
        a2, b2 = 0.0, 1 / 3
        a3, b3 = 8 / 11, 1 / 11
        a4 = 0.0665501535736643
        b4 = 0.4334498464263357
        return _orbit(
            (w1, (1 / 4, 1 / 4, 1 / 4, 1 / 4)),
            (w2, (a2, b2, b2, b2)),
            (w3, (a3, b3, b3, b3)),
            (w4, (a4, a4, b4, b4)),
        )
    raise ConfigurationError(f"no tetrahedron rule of degree {degree}")


def simplex_rule(dim, degree):
    """Return (bary_points, weights) exact for polynomials of `degree` on a
    dim-simplex.  Points have dim+1 barycentric coordinates; weights sum to 1.
    """
    if dim == 1:
        npts = max(1, (degree + 2) // 2)
        return _gauss_interval(npts)
    if dim == 2:
        return _triangle_rule(degree)
    if dim == 3:
        return _tetrahedron_rule(degree)
    raise ConfigurationError(f"unsupported simplex dimension {dim}")


def facet_rule(dim, degree):
    """Quadrature on a facet of a dim-simplex (a (dim-1)-simplex)."""
    return simplex_rule(dim - 1, degree)


def monomial_integral(exponents, volume=1.0):
    """Exact integral of a barycentric monomial prod(lambda_i**a_i) over a
    simplex of given volume: d! * vol * prod(a_i!) / (sum(a_i) + d)!.
    """
    from math import factorial

    a = list(exponents)
    d = len(a) - 1
    num = factorial(d) * volume
    for ai in a:
        num *= factorial(ai)
    return num / factorial(sum(a) + d)
