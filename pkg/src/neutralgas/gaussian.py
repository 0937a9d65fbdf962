"""Gaussian lower bound Xi_2 on the neutral partition function.

Xi_2 = Xi_0 exp[ u0 |Lambda| / (2 xi_0^2) - 1/2 sum_{p != 0} log(1 + u^_p / xi_0^2) ]

evaluated over the dual momenta; the compensating charge of each particle is
spread uniformly over the torus, so only p != 0 enters.  On lattice tori the
same number is also obtained as a finite-dimensional Gaussian determinant over
mean-zero site vectors, and the t -> 0 (Debye-Hueckel) limit is available for
d < 4.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from . import lattice_sums
from .errors import DimensionUnsupported, NonConvergence, TooLarge
from .ideal import eta_hat, ideal_partition_quadrature, screening_strength
from .model import KernelConfig, ModeSet, System, dual_modes, regularized_energy

MAX_DETERMINANT_SITES = 4096
MAX_SERIES_ORDER = 16


@dataclass(frozen=True)
class GaussianBound:
    """Xi_2 and its ingredients.

    ``momentum_sum`` is sum_p log(1 + u^_p / xi_0^2) for :func:`gaussian_bound`
    and the log-determinant for the determinant route; for the Debye-Hueckel
    limit it is the bracketed sum sum_p [log(1 + c/p^2) - c/p^2] (<= 0).
    ``u0_term`` is the additive exponent term (u0 |Lambda| / 2 xi_0^2, or
    E0 |Lambda| / xi_0^2 in the Debye-Hueckel case).  ``tail_bound`` bounds the
    truncation error of ``log_xi2``.
    """

    xi2: float
    log_xi2: float
    xi0: float
    screening: float
    momentum_sum: float
    u0_term: float
    tail_bound: float
    log_xi0_ideal: float
    n_modes: int


def _prepare(system, tilted, eta):
    if tilted is None:
        tilted = system.tilt
    if eta is None:
        eta = eta_hat(tilted, max(abs(q) for q in system.charges))
    c = screening_strength(system, tilted, eta)
    log_ideal = ideal_partition_quadrature(tilted).log_value
    return tilted, eta, c, log_ideal


def _finish(log_ideal, c, u0_term, momentum_sum, tail, n_modes):
    log_xi2 = log_ideal + u0_term - 0.5 * momentum_sum
    xi0 = c**-0.5 if c > 0 else math.inf
    xi2 = math.exp(log_xi2) if log_xi2 < 709.78 else math.inf
    return GaussianBound(xi2, log_xi2, xi0, c, momentum_sum, u0_term, tail, log_ideal, n_modes)


def _inverse_power_tails(modes: ModeSet, dimension, side, orders):
    """T_k = sum over the omitted momenta of |p|^(-2k), for each k in ``orders``."""
    k_unit = 2 * math.pi / side
    out = {}
    if dimension == 1:
        m = int(round(modes.truncation_radius / k_unit))
        for k in orders:
            out[k] = 2.0 * k_unit ** (-2 * k) * float(special.zeta(2.0 * k, m + 1))
        return out
    for k in orders:
        full = lattice_sums.dual_zeta(dimension, k, side)
        out[k] = max(full - math.fsum(modes.norms2 ** (-float(k))), 0.0)
    return out


def _log1p_tail(c, modes, dimension, side, first_order, tolerance):
    """Sum over omitted momenta of log(1 + x) - sum_{k < first_order} (-1)^(k+1) x^k / k
    with x = c/|p|^2, via the alternating expansion; returns (estimate, bound)."""
    if c == 0:
        return 0.0, 0.0
    x_max = c / modes.truncation_radius**2
    if x_max >= 1:
        raise NonConvergence("truncation radius too small for the tail expansion")
    if 2 * first_order <= dimension:
        raise DimensionUnsupported(f"order-{first_order} momentum sum diverges in d = {dimension}")
    orders = list(range(first_order, MAX_SERIES_ORDER + 1))
    tails = _inverse_power_tails(modes, dimension, side, orders)
    estimate = []
    for k in orders:
        bound = c**k / k * tails[k]
        if bound < tolerance or k == MAX_SERIES_ORDER:
            return math.fsum(estimate), bound
        estimate.append((-1) ** (k + 1) * c**k / k * tails[k])
    raise AssertionError("unreachable")


def gaussian_bound(system: System, tilted=None, eta=None, tolerance=1e-12, modes=None) -> GaussianBound:
    """Closed-form Xi_2 over the dual momenta of the system's torus."""
    tilted, eta, c, log_ideal = _prepare(system, tilted, eta)
    geom = system.geometry
    if modes is None:
        modes = dual_modes(geom, system.kernel, tolerance)
    momentum_sum = math.fsum(np.log1p(c * modes.coefficients))
    tail = 0.0
    if not geom.is_lattice:
        if modes.cutoff_t == 0:
            est, bound = _log1p_tail(c, modes, geom.dimension, geom.side, 1, tolerance)
            momentum_sum += est
            tail = 0.5 * bound
        else:
            tail = 0.5 * c * modes.tail_bound
    u0_term = 0.5 * c * system.u0 * geom.volume
    return _finish(log_ideal, c, u0_term, momentum_sum, tail, len(modes))


def mean_zero_basis(n):
    """Orthonormal basis (n x (n-1)) of the vectors in R^n whose entries sum to zero."""
    return linalg.null_space(np.ones((1, n)))


def gaussian_bound_determinant(system: System, tilted=None, eta=None,
                               max_sites=MAX_DETERMINANT_SITES) -> GaussianBound:
    """Xi_2 on a lattice torus as an explicit Gaussian integral over mean-zero
    site fields: Xi_0 exp(u0 |Lambda| / 2 xi_0^2) det(I + w U)^(-1/2) restricted to
    the mean-zero subspace, with w = xi_0^-2 l^d."""
    from .oracle import lattice_kernel

    geom = system.geometry
    if not geom.is_lattice:
        raise DimensionUnsupported("the determinant route needs a lattice torus")
    if geom.n_sites > max_sites:
        raise TooLarge(f"{geom.n_sites} sites exceeds the determinant cap of {max_sites}")
    tilted, eta, c, log_ideal = _prepare(system, tilted, eta)
    kern = lattice_kernel(geom, system.kernel)
    n = geom.n_sites
    w = c * geom.site_volume
    if n == 1:
        logdet = 0.0
    else:
        basis = mean_zero_basis(n)
        reduced = basis.T @ kern.matrix @ basis
        reduced = 0.5 * (reduced + reduced.T)
        chol = linalg.cholesky(np.eye(n - 1) + w * reduced, lower=True)
        logdet = 2.0 * math.fsum(np.log(np.diag(chol)))
    u0_term = 0.5 * c * system.u0 * geom.volume
    return _finish(log_ideal, c, u0_term, logdet, 0.0, n - 1)


def debye_huckel_limit(system: System, tilted=None, eta=None, tolerance=1e-12) -> GaussianBound:
    """t -> 0 limit of Xi_2 for d < 4:

    Xi_0 exp{ E0 |Lambda| / xi_0^2 - 1/2 sum_p [log(1 + 1/(xi_0 p)^2) - 1/(xi_0 p)^2] }.

    The summand decays like |p|^-4; the omitted part of the momentum sum is
    expanded in powers of 1/|p|^2 and summed with Epstein zeta values, leaving a
    rigorously bounded remainder.
    """
    geom = system.geometry
    d = geom.dimension
    if d >= 4:
        raise DimensionUnsupported("the Debye-Hueckel limit needs d < 4")
    energy = regularized_energy(geom, system.kernel)
    tilted, eta, c, log_ideal = _prepare(system, tilted, eta)
    if geom.is_lattice:
        modes = dual_modes(geom, KernelConfig(0.0))
    else:
        k_unit = geom.momentum_unit
        radius = max(2.0 * math.sqrt(c), (256.0 if d == 1 else 8.0) * k_unit)
        if d == 1:
            modes = dual_modes(geom, KernelConfig(0.0), radius=radius)
        else:
            p = lattice_sums.integer_ball(d, radius / k_unit) * k_unit
            n2 = np.einsum("ij,ij->i", p, p)
            modes = ModeSet(p, n2, 1.0 / n2, radius, 0.0, geom.volume, 0.0)
    x = c / modes.norms2
    bracket = math.fsum(np.log1p(x) - x)
    tail = 0.0
    if not geom.is_lattice:
        est, bound = _log1p_tail(c, modes, d, geom.side, 2, tolerance)
        bracket += est
        tail = 0.5 * bound
    u0_term = c * energy.value * geom.volume
    tail += c * energy.error * geom.volume
    return _finish(log_ideal, c, u0_term, bracket, tail, len(modes))
