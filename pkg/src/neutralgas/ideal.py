"""Neutral ideal gas: Xi_0, Fourier coefficients of the angular measure eta,
correlation length and canonical-suppression density.

Two independent routes to Xi_0 and eta^_q:

* periodic trapezoid rule on (2 pi)^-1 int exp[sum_q L'_q cos(q theta)] d theta,
  spectrally accurate because the integrand is entire and periodic;
* truncated Laurent exponentiation of exp(sum_q L_q x^q), read off at x^0.
"""
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
from scipy import special

from .bessel import bessel_ratio, modified_bessel  # noqa: F401  (re-exported)
from .errors import DegenerateSystem, NonConvergence
from .model import System, TiltedActivities

QUAD_RTOL = 1e-14
MAX_NODES = 2**20

Masses = Union[TiltedActivities, Mapping[int, float]]


@dataclass(frozen=True)
class PartitionResult:
    value: float
    log_value: float
    tail_bound: float = 0.0
    work: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class EtaCoefficients:
    values: Mapping[int, float]

    def __getitem__(self, q):
        return self.values[abs(q)] if abs(q) in self.values else self.values[q]

    @property
    def q_max(self):
        return max(self.values)


def _masses(obj):
    if isinstance(obj, TiltedActivities):
        return dict(obj.masses)
    return {int(q): float(m) for q, m in obj.items()}


def _trapezoid(masses, n_nodes, qs=()):
    """Scaled trapezoid sums: (mean of f/e^S, [mean of cos(q th) f/e^S for q in qs], S)."""
    theta = 2 * math.pi * np.arange(n_nodes) / n_nodes
    g = np.zeros(n_nodes)
    for q, m in sorted(masses.items()):
        if m:
            g += m * np.cos(q * theta)
    top = math.fsum(masses.values())
    f = np.exp(g - top)
    mean = math.fsum(f) / n_nodes
    moments = [math.fsum(np.cos(q * theta) * f) / n_nodes for q in qs]
    return mean, moments, top


def _initial_nodes(masses, q_extra=0):
    qmax = max((abs(q) for q, m in masses.items() if m), default=0)
    n = 32
    while n < 4 * (qmax + q_extra + 1):
        n *= 2
    return n


def ideal_partition_quadrature(tilted: Masses) -> PartitionResult:
    """Xi_0 by the periodic trapezoid rule, doubling nodes from 32 until two
    successive values agree to 1e-14 relative."""
    masses = _masses(tilted)
    n = _initial_nodes(masses)
    prev, _, top = _trapezoid(masses, n)
    while True:
        n *= 2
        if n > MAX_NODES:
            raise NonConvergence("trapezoid rule did not settle within 2^20 nodes")
        cur, _, top = _trapezoid(masses, n)
        change = abs(cur - prev)
        if change <= QUAD_RTOL * cur:
            break
        prev = cur
    log_value = top + math.log(cur)
    return PartitionResult(_safe_exp(log_value), log_value, change * math.exp(top) if top < 700 else math.inf,
                           {"nodes": n})


def eta_hat(tilted: Masses, q_max=None) -> EtaCoefficients:
    """eta^_q = int cos(q theta) eta(d theta) for 0 <= q <= q_max (quadrature route).

    Values are clipped to [0, 1], the range they provably occupy; the clip only
    ever removes rounding noise around 0.
    """
    masses = _masses(tilted)
    if q_max is None:
        q_max = max((abs(q) for q in masses), default=0)
    qs = list(range(1, q_max + 1))
    n = _initial_nodes(masses, q_max)
    mean, mom, _ = _trapezoid(masses, n, qs)
    prev = [m / mean for m in mom]
    while True:
        n *= 2
        if n > MAX_NODES:
            raise NonConvergence("eta coefficients did not settle within 2^20 nodes")
        mean, mom, _ = _trapezoid(masses, n, qs)
        cur = [m / mean for m in mom]
        if all(abs(a - b) <= QUAD_RTOL * max(abs(a), 1e-2) for a, b in zip(cur, prev)):
            break
        prev = cur
    values = {0: 1.0}
    for q, v in zip(qs, cur):
        values[q] = min(max(v, 0.0), 1.0)
    return EtaCoefficients(values)


@dataclass(frozen=True)
class LaurentExpansion:
    """exp(sum_q L_q x^q) = exp(log_scale) * sum_k coeffs[k + offset] x^k (truncated)."""

    coeffs: np.ndarray
    offset: int
    log_scale: float
    tail: float
    terms: int

    def coefficient(self, k):
        i = k + self.offset
        if 0 <= i < len(self.coeffs):
            return float(self.coeffs[i])
        return 0.0


def laurent_exp(masses: Mapping[int, float], tolerance=1e-16, min_terms=0) -> LaurentExpansion:
    """Truncated exponential of the Laurent polynomial sum_q L_q x^q, L_q >= 0.

    Writing L_q = S p_q with p a probability vector, exp(P) = e^S sum_n
    Pois(n; S) p^{*n}; every term is nonnegative and bounded by 1, so nothing
    overflows however large S is.  The n-sum stops once the Poisson tail mass
    falls below ``tolerance`` times the running x^0 coefficient (a lower bound
    on the final one) or, if x^0 never appears, below ``tolerance``.
    ``tail`` is the discarded Poisson mass (same scaling as ``coeffs``).
    """
    items = sorted((int(q), float(m)) for q, m in masses.items() if m > 0)
    total = math.fsum(m for _, m in items)
    if total == 0:
        return LaurentExpansion(np.ones(1), 0, 0.0, 0.0, 0)
    qmax = max(abs(q) for q, _ in items)
    kernel = np.zeros(2 * qmax + 1)
    for q, m in items:
        kernel[q + qmax] = m / total
    log_s = math.log(total)

    # power[k + width] = p^{*n}(k), support |k| <= qmax * n
    power = np.ones(1)
    width = 0
    acc = {}
    n = 0
    while True:
        w = math.exp(-total + n * log_s - math.lgamma(n + 1))
        acc[n] = (w, power, width)
        tail = float(special.gammainc(n + 1, total))  # P(N > n)
        zero = math.fsum(wi * (p[wd] if len(p) > wd else 0.0) for wi, p, wd in acc.values())
        ref = zero if zero > 0 else 1.0
        if n >= min_terms and tail <= tolerance * ref:
            break
        power = np.convolve(power, kernel)
        width += qmax
        n += 1

    size = 2 * width + 1
    out = np.zeros(size)
    # accumulate small terms first
    for k in sorted(acc, key=lambda i: acc[i][0]):
        wi, p, wd = acc[k]
        out[width - wd:width + wd + 1] += wi * p
    return LaurentExpansion(out, width, total, tail, n + 1)


def ideal_partition_series(tilted: Masses, tolerance=1e-15) -> PartitionResult:
    """Xi_0 as the x^0 coefficient of exp(sum_q L_q x^q).

    Works for tilted or bare masses alike: the tilt multiplies the x^q
    coefficient by e^{-qc}, which leaves x^0 untouched.
    """
    exp_ = laurent_exp(_masses(tilted), tolerance)
    c0 = exp_.coefficient(0)
    log_value = exp_.log_scale + math.log(c0)
    tail = exp_.tail * math.exp(exp_.log_scale) if exp_.log_scale < 700 else math.inf
    return PartitionResult(_safe_exp(log_value), log_value, tail, {"series_terms": exp_.terms})


def eta_hat_series(tilted: Masses, q_max=None, tolerance=1e-16) -> EtaCoefficients:
    """Laurent oracle for eta^_q: ratio of the x^{-q} and x^0 coefficients."""
    masses = _masses(tilted)
    if q_max is None:
        q_max = max((abs(q) for q in masses), default=0)
    exp_ = laurent_exp(masses, tolerance, min_terms=q_max)
    c0 = exp_.coefficient(0)
    return EtaCoefficients({q: exp_.coefficient(-q) / c0 for q in range(q_max + 1)})


def _eta_for(system, tilted, eta):
    if tilted is None:
        tilted = system.tilt
    if eta is None:
        eta = eta_hat(tilted, max(abs(q) for q in system.charges))
    return tilted, eta


def screening_strength(system: System, tilted=None, eta=None) -> float:
    """xi_0^-2 = beta sum_alpha e^2 q_alpha^2 z'_alpha eta^_{q_alpha}; zero when beta = 0."""
    tilted, eta = _eta_for(system, tilted, eta)
    e2 = system.ensemble.elementary_charge**2
    terms = []
    for sp in system.species:
        q = sp.charge_number
        z_tilted = math.exp(-q * tilted.c0) * sp.activity if sp.activity else 0.0
        terms.append(e2 * q * q * z_tilted * eta[q])
    return system.ensemble.beta * math.fsum(terms)


def correlation_length(system: System, tilted=None, eta=None) -> float:
    """Mean-field correlation length xi_0 (the Debye length for Coulomb systems)."""
    s = screening_strength(system, tilted, eta)
    if s <= 0:
        raise DegenerateSystem("screening sum vanishes (zero activities or beta = 0); xi_0 is infinite")
    return s**-0.5


def infinite_volume_correlation_length(system: System, tilted=None) -> float:
    """Limit of xi_0 as |Lambda| -> infinity (every eta^_q -> 1)."""
    tilted = tilted or system.tilt
    e2 = system.ensemble.elementary_charge**2
    s = system.ensemble.beta * math.fsum(
        e2 * sp.charge_number**2 * math.exp(-sp.charge_number * tilted.c0) * sp.activity
        for sp in system.species
    )
    if s <= 0:
        raise DegenerateSystem("screening sum vanishes")
    return s**-0.5


def suppressed_density(system: System, tilted=None, eta=None) -> float:
    """beta -> 0 particle density of the neutral ensemble, sum_alpha z'_alpha eta^_{q_alpha}.

    For two species of charge +-1 and equal activity z this is
    2 z I_1(2 z |Lambda|) / I_0(2 z |Lambda|), always below the grand-canonical 2 z.
    """
    tilted, eta = _eta_for(system, tilted, eta)
    return math.fsum(math.exp(-sp.charge_number * tilted.c0) * sp.activity * eta[sp.charge_number]
                     for sp in system.species)


def _safe_exp(x):
    return math.exp(x) if x < 709.78 else math.inf
