"""Sums over the dual lattice (2*pi/a) Z^d.

Enumeration of integer points in a ball, rigorous tail bounds for radially
decreasing summands, and the Epstein zeta function of the hypercubic lattice
(analytically continued below s = d/2).
"""
import math

import numpy as np
from scipy import integrate, special

from .errors import ConfigError


def sphere_area(dimension):
    """Surface area of the unit sphere S^(d-1) in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (dimension / 2) / math.gamma(dimension / 2)


def integer_ball(dimension, radius):
    """Nonzero integer vectors m with |m| <= radius.

    Sorted by (|m|^2, lexicographic m) so every downstream reduction runs in a
    fixed order.
    """
    r = int(math.floor(radius))
    axis = np.arange(-r, r + 1)
    grids = np.meshgrid(*([axis] * dimension), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    norm2 = np.einsum("ij,ij->i", pts, pts)
    keep = (norm2 > 0) & (norm2 <= radius * radius + 1e-9)
    pts, norm2 = pts[keep], norm2[keep]
    order = np.lexsort(tuple(pts[:, k] for k in reversed(range(dimension))) + (norm2,))
    return pts[order]


def radial_tail_bound(g, radius, dimension, spacing):
    """Upper bound on sum_{p in spacing*Z^d, |p| > radius} g(|p|).

    ``g`` must be positive and nonincreasing on (0, inf).  Each lattice point
    owns the cube of side ``spacing`` centred on it; on that cube
    ``g(|p|) <= g(|y| - delta)`` with ``delta`` the half-diagonal, which turns
    the sum into a radial integral.
    """
    delta = 0.5 * math.sqrt(dimension) * spacing
    lower = radius - 2.0 * delta
    if lower <= 0:
        return math.inf
    integrand = lambda u: (u + delta) ** (dimension - 1) * g(u)
    value, _ = integrate.quad(integrand, lower, np.inf, limit=200, epsabs=0.0, epsrel=1e-10)
    return sphere_area(dimension) * value / spacing**dimension


def upper_gamma(a, x):
    """Non-normalised upper incomplete gamma Gamma(a, x) for x > 0 and any real a."""
    if a > 0:
        return special.gammaincc(a, x) * special.gamma(a)
    if a == 0:
        return float(special.exp1(x))
    # Gamma(a, x) = (Gamma(a+1, x) - x^a e^-x) / a
    return (upper_gamma(a + 1.0, x) - x**a * math.exp(-x)) / a


def epstein_zeta(dimension, s, cutoff=7):
    """Z(s) = sum_{n in Z^d, n != 0} |n|^(-2s), continued to all s != d/2, s > 0.

    Uses the theta-function split at the self-dual point; both halves decay like
    exp(-pi |n|^2), so ``cutoff`` = 7 is far beyond double precision.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    half = dimension / 2
    if abs(s - half) < 1e-14:
        raise ValueError("pole at s = d/2")
    pts = integer_ball(dimension, cutoff)
    x = math.pi * np.einsum("ij,ij->i", pts, pts).astype(float)
    # group by |n|^2: many points share a shell
    shells, counts = np.unique(x, return_counts=True)
    terms = []
    for xs, c in zip(shells, counts):
        v = xs ** (-s) * upper_gamma(s, xs) + xs ** (s - half) * upper_gamma(half - s, xs)
        terms.append(c * v)
    g = math.fsum(terms) + 1.0 / (s - half) - 1.0 / s
    return math.pi**s * g / math.gamma(s)


def dual_zeta(dimension, s, side):
    """sum over p in (2 pi / side) Z^d minus the origin of |p|^(-2s)."""
    if dimension == 1 and s > 0.5:
        return 2.0 * float(special.zeta(2 * s)) * (side / (2 * math.pi)) ** (2 * s)
    return epstein_zeta(dimension, s) * (side / (2 * math.pi)) ** (2 * s)


def require_positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
