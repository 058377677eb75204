"""Quadrature on the Riemann sphere.

Points are parametrized by ``(u, phi)`` with ``z = sqrt(u / (1 - u)) e^{i phi}``.
In these coordinates the round area form of total area ``2 pi`` is exactly
``du dphi``, so integrals against the background form need no Jacobian.
"""

import numpy as np
from scipy import integrate

AREA = 2.0 * np.pi


def chart_point(u, phi):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        r = np.sqrt(u / (1.0 - u))
    return r * np.exp(1j * np.asarray(phi, dtype=float))


def sphere_coords(z):
    z = np.asarray(z, dtype=complex)
    a = np.abs(z) ** 2
    return a / (1.0 + a), np.mod(np.angle(z), 2 * np.pi)


def tensor_rule(n_u, n_phi):
    """Gauss-Legendre in ``u`` times the periodic trapezoid rule in ``phi``."""
    x, w = np.polynomial.legendre.leggauss(n_u)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    wphi = np.full(n_phi, 2 * np.pi / n_phi)
    U, PHI = np.meshgrid(u, phi, indexing="ij")
    W = np.outer(wu, wphi)
    return chart_point(U, PHI), W


def integrate_sphere(func, rtol=1e-10, atol=1e-13, n_start=16, max_n=2048):
    """Integrate ``func(z)`` against the background area form.

    The tensor rule is doubled until two consecutive levels agree; returns
    ``(value, error_estimate)``.  ``func`` must accept an array of chart
    points and broadcast.
    """
    n = n_start
    z, W = tensor_rule(n, n)
    prev = np.sum(func(z) * W)
    while True:
        n *= 2
        z, W = tensor_rule(n, n)
        val = np.sum(func(z) * W)
        err = abs(val - prev)
        if err <= max(atol, rtol * abs(val)):
            return val, err
        if n >= max_n:
            raise RuntimeError(
                f"sphere quadrature did not converge: value {val}, error {err:.2e}"
            )
        prev = val


def _graded_panels(a, b, ratio=0.2, depth=14):
    """Panel edges on ``[a, b]`` refined geometrically towards both endpoints."""
    mid = 0.5 * (a + b)
    h = 0.5 * (b - a)
    steps = h * ratio ** np.arange(depth)
    left = a + steps[::-1]
    right = b - steps
    return np.concatenate([[a], left[:-1], [mid], right[:-1][::-1], [b]])


def integrate_sphere_singular(func, singular_points=(), epsabs=1e-10, epsrel=1e-10, limit=200,
                              order=16):
    """Integrate ``func`` against the background form near isolated log singularities.

    The outer ``u`` integral is adaptive with breakpoints at the singular
    points; the inner ``phi`` integral uses Gauss-Legendre panels graded
    geometrically towards the singular angles.  ``func`` takes an array of
    chart points.
    """
    pts = [p for p in singular_points if np.isfinite(p)]
    u_sing, phi_sing = sphere_coords(np.array(pts, dtype=complex)) if pts else ([], [])
    u_breaks = sorted({float(u) for u in u_sing if 0.0 < u < 1.0})
    cuts = sorted({0.0, 2 * np.pi, *(float(p) for p in phi_sing)})
    edges = np.unique(np.concatenate([_graded_panels(a, b) for a, b in zip(cuts[:-1], cuts[1:])]))
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    phi = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    wphi = (0.5 * (hi - lo) * w).ravel()

    def inner(u):
        return float(np.sum(func(chart_point(u, phi)) * wphi))

    val, err = integrate.quad(
        inner, 0.0, 1.0, points=u_breaks or None, epsabs=epsabs, epsrel=epsrel, limit=limit
    )
    return val, err
