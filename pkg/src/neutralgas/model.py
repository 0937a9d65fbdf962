"""Physical system: species, torus geometry, ensemble and kernel configuration.

Also solves for the tilt constant that makes the per-charge activity masses
symmetric under charge negation, and evaluates the self-energy constants
u0 and E0.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from . import lattice_sums
from .errors import (
    ConfigError,
    CutoffRequired,
    DimensionUnsupported,
    InvalidCutoff,
    InvalidGeometry,
    InvalidU0,
    NoRoot,
    NonConvergence,
    NotSymmetrizable,
)

logger = logging.getLogger(__name__)

LATTICE = "lattice_torus"
CONTINUUM = "continuum_torus"

TILT_RESIDUAL = 1e-13
SYMMETRY_RTOL = 1e-12
MAX_MODES = 20_000_000


@dataclass(frozen=True)
class Species:
    charge_number: int
    activity: float

    def __post_init__(self):
        if int(self.charge_number) != self.charge_number or self.charge_number == 0:
            raise ConfigError(f"charge_number must be a nonzero integer, got {self.charge_number!r}")
        if not (self.activity >= 0 and math.isfinite(self.activity)):
            raise ConfigError(f"activity must be finite and nonnegative, got {self.activity!r}")
        object.__setattr__(self, "charge_number", int(self.charge_number))
        object.__setattr__(self, "activity", float(self.activity))


@dataclass(frozen=True)
class Geometry:
    kind: str
    dimension: int
    side: float
    spacing: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (LATTICE, CONTINUUM):
            raise InvalidGeometry(f"unknown geometry kind {self.kind!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidGeometry("dimension must be an integer >= 1")
        if not self.side > 0:
            raise InvalidGeometry("side must be positive")
        if self.kind == LATTICE:
            if self.spacing is None or not self.spacing > 0:
                raise InvalidGeometry("lattice_torus needs a positive spacing")
            ratio = self.side / self.spacing
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
                raise InvalidGeometry(f"side/spacing = {ratio} is not a positive integer")

    @classmethod
    def lattice(cls, dimension, side, spacing):
        return cls(LATTICE, dimension, float(side), float(spacing))

    @classmethod
    def continuum(cls, dimension, side):
        return cls(CONTINUUM, dimension, float(side))

    @property
    def is_lattice(self):
        return self.kind == LATTICE

    @property
    def volume(self):
        return self.side**self.dimension

    @property
    def n_side(self):
        return int(round(self.side / self.spacing))

    @property
    def n_sites(self):
        return self.n_side**self.dimension

    @property
    def site_volume(self):
        return self.spacing**self.dimension

    @property
    def momentum_unit(self):
        return 2 * math.pi / self.side


U0Convention = Union[str, float]


@dataclass(frozen=True)
class KernelConfig:
    """UV cutoff ``t`` of the torus kernel and the self-energy convention.

    ``u0`` is ``"zero"``, ``"infinite_volume"`` or a number.
    """

    cutoff_t: float = 0.0
    u0: U0Convention = "zero"

    def __post_init__(self):
        if not (self.cutoff_t >= 0 and math.isfinite(self.cutoff_t)):
            raise InvalidCutoff("cutoff t must be finite and >= 0")
        if isinstance(self.u0, str):
            if self.u0 not in ("zero", "infinite_volume"):
                raise InvalidU0(f"unknown u0 convention {self.u0!r}")
        else:
            try:
                value = float(self.u0)
            except (TypeError, ValueError):
                raise InvalidU0(f"u0 must be 'zero', 'infinite_volume' or a number, got {self.u0!r}")
            if not math.isfinite(value):
                raise InvalidU0("custom u0 must be finite")
            object.__setattr__(self, "u0", value)

    def validate_for(self, dimension):
        if self.cutoff_t == 0 and dimension > 1:
            raise InvalidCutoff("t = 0 is admissible only in dimension 1")
        if self.u0 == "infinite_volume":
            if dimension <= 2:
                raise InvalidU0("infinite_volume u0 requires dimension > 2")
            if self.cutoff_t == 0:
                raise InvalidU0("infinite_volume u0 diverges at t = 0")


@dataclass(frozen=True)
class Ensemble:
    beta: float
    elementary_charge: float = 1.0

    def __post_init__(self):
        # beta = 0 is the ideal-gas limit; kept legal so it can be evaluated directly
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ConfigError("beta must be finite and >= 0")
        if not self.elementary_charge > 0:
            raise ConfigError("elementary_charge must be positive")

    @property
    def coupling(self):
        """epsilon^2 = beta e^2."""
        return self.beta * self.elementary_charge**2


@dataclass(frozen=True)
class SymmetryVerdict:
    passed: bool
    residuals: Mapping[int, float]

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class TiltedActivities:
    """Tilt constant and tilted per-charge masses.

    ``masses[q]`` is the bare mass |Lambda| sum_{alpha: q_alpha = q} z_alpha
    multiplied by exp(-q c0); ``tilde_masses`` additionally carry the
    self-energy factor exp(eps^2 q^2 u0 / 2).
    """

    c0: float
    masses: Mapping[int, float]
    tilde_masses: Mapping[int, float]
    bare_masses: Mapping[int, float] = field(default_factory=dict)
    residual: float = 0.0

    @property
    def total_mass(self):
        return math.fsum(self.masses.values())

    @property
    def max_charge(self):
        return max((abs(q) for q in self.masses), default=0)

    def mass(self, q):
        return self.masses.get(q, 0.0)


@dataclass(frozen=True)
class System:
    species: Tuple[Species, ...]
    geometry: Geometry
    ensemble: Ensemble
    kernel: KernelConfig

    @property
    def volume(self):
        return self.geometry.volume

    @property
    def dimension(self):
        return self.geometry.dimension

    @property
    def u0(self):
        return self_energy_constant(self.kernel, self.dimension)

    @property
    def charges(self):
        return sorted({s.charge_number for s in self.species})

    def bare_masses(self):
        out = {}
        for s in self.species:
            out[s.charge_number] = out.get(s.charge_number, 0.0) + s.activity * self.volume
        return out

    @cached_property
    def tilt(self):
        return solve_tilt(self)

    def renormalized_activity(self, sp):
        """z~ = exp(beta e^2 q^2 u0 / 2) z (the activity after absorbing u0)."""
        return math.exp(0.5 * self.ensemble.coupling * sp.charge_number**2 * self.u0) * sp.activity

    def with_species(self, species):
        return System(tuple(species), self.geometry, self.ensemble, self.kernel)

    def with_beta(self, beta):
        return System(self.species, self.geometry, Ensemble(beta, self.ensemble.elementary_charge), self.kernel)


def build_system(species_list: Sequence, geometry: Geometry, ensemble: Ensemble,
                 kernel_config: KernelConfig, check_symmetry=True) -> System:
    """Validate inputs and return a System with its tilt already solved.

    ``species_list`` holds :class:`Species` or ``(charge, activity)`` pairs.
    With ``check_symmetry=False`` a system that cannot be made charge symmetric
    is still returned (its tilt constant is well defined whenever both signs
    are present).
    """
    species = tuple(s if isinstance(s, Species) else Species(*s) for s in species_list)
    if not species:
        raise ConfigError("species list is empty")
    kernel_config.validate_for(geometry.dimension)
    system = System(species, geometry, ensemble, kernel_config)
    if check_symmetry:
        try:
            tilted = system.tilt
        except NoRoot as exc:
            raise NotSymmetrizable(str(exc)) from exc
        verdict = check_charge_symmetry(tilted)
        if not verdict:
            bad = {q: r for q, r in verdict.residuals.items() if r > SYMMETRY_RTOL}
            raise NotSymmetrizable(f"tilted masses are not symmetric under q -> -q: residuals {bad}")
    return system


def _tilt_function(log_masses, charges, c):
    """Scaled f(c) = sum q Lambda_q e^{-qc}, its derivative, and the scale sum |q| Lambda_q e^{-qc}.

    All three share a common positive factor, so ratios are exact.
    """
    expo = log_masses - charges * c
    expo -= expo.max()
    w = np.exp(expo)
    f = math.fsum(charges * w)
    df = -math.fsum(charges * charges * w)
    scale = math.fsum(np.abs(charges) * w)
    return f, df, scale


def solve_tilt(system: System, bracket=(-1.0, 1.0)) -> TiltedActivities:
    """Find c0 with sum_q q e^{-q c0} Lambda_q = 0.

    f is strictly decreasing, so the root is unique.  The bracket is widened by
    doubling until it changes sign, bisected down to 1e-14 and polished with one
    Newton step.
    """
    bare = system.bare_masses()
    eps2 = system.ensemble.coupling
    u0 = system.u0
    nonzero = {q: m for q, m in bare.items() if m > 0}
    if not nonzero:
        zero = {q: 0.0 for q in bare}
        return TiltedActivities(0.0, zero, dict(zero), dict(bare), 0.0)
    if all(q > 0 for q in nonzero) or all(q < 0 for q in nonzero):
        raise NoRoot("all charges with nonzero activity share a sign; no tilt can neutralise them")

    charges = np.array(sorted(nonzero), dtype=float)
    logm = np.log(np.array([nonzero[int(q)] for q in charges]))
    f = lambda c: _tilt_function(logm, charges, c)[0]

    lo, hi = sorted(map(float, bracket))
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    width = hi - lo
    for _ in range(2100):
        if f(lo) > 0:
            break
        lo -= width
        width *= 2
    else:
        raise NoRoot("could not bracket the tilt root from below")
    width = hi - lo
    for _ in range(2100):
        if f(hi) < 0:
            break
        hi += width
        width *= 2
    else:
        raise NoRoot("could not bracket the tilt root from above")

    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm > 0:
            lo = mid
        elif fm < 0:
            hi = mid
        else:
            lo = hi = mid
            break
    c = 0.5 * (lo + hi)
    fc, dfc, scale = _tilt_function(logm, charges, c)
    if dfc != 0:
        newton = c - fc / dfc
        fn, _, sn = _tilt_function(logm, charges, newton)
        if abs(fn) / sn <= abs(fc) / scale:
            c, fc, scale = newton, fn, sn
    residual = abs(fc) / scale
    if residual > TILT_RESIDUAL:
        raise NonConvergence(f"tilt residual {residual:.3e} above {TILT_RESIDUAL}")

    masses = {}
    tilde = {}
    for q, m in bare.items():
        if m > 0:
            masses[q] = math.exp(math.log(m) - q * c)
        else:
            masses[q] = 0.0
        tilde[q] = math.exp(0.5 * eps2 * q * q * u0) * masses[q]
    return TiltedActivities(c, masses, tilde, dict(bare), residual)


def check_charge_symmetry(tilted: TiltedActivities, rtol=SYMMETRY_RTOL,
                          abs_floor=np.finfo(float).tiny) -> SymmetryVerdict:
    """Pairwise test Lambda'_q == Lambda'_{-q}; with finitely many charge values
    this is equivalent to every odd moment vanishing."""
    residuals = {}
    qs = {abs(q) for q in tilted.masses}
    for q in sorted(qs):
        a, b = tilted.mass(q), tilted.mass(-q)
        scale = max(a, b, abs_floor)
        residuals[q] = abs(a - b) / scale
    passed = all(r <= rtol for r in residuals.values())
    return SymmetryVerdict(passed, residuals)


def self_energy_constant(kernel_config: KernelConfig, dimension: int) -> float:
    u0 = kernel_config.u0
    if u0 == "zero":
        return 0.0
    if u0 == "infinite_volume":
        if dimension <= 2:
            raise InvalidU0("infinite_volume u0 requires dimension > 2")
        t = kernel_config.cutoff_t
        if t <= 0:
            raise InvalidU0("infinite_volume u0 diverges at t = 0")
        d = dimension
        return 2.0 / ((d - 2) * (4 * math.pi) ** (d / 2) * t ** ((d - 2) / 2))
    return float(u0)


@dataclass(frozen=True)
class ModeSet:
    """Nonzero dual momenta, sorted by (|p|^2, lexicographic p)."""

    momenta: np.ndarray
    norms2: np.ndarray
    coefficients: np.ndarray
    truncation_radius: float
    tail_bound: float
    volume: float
    cutoff_t: float

    def __len__(self):
        return len(self.coefficients)


def kernel_coefficients(norms2, t):
    """u^_p = exp(-t |p|^2) / |p|^2."""
    return np.exp(-t * norms2) / norms2


def brillouin_momenta(geometry: Geometry) -> np.ndarray:
    """The N - 1 nonzero momenta of a lattice torus, components in (-pi/l, pi/l]."""
    n = geometry.n_side
    d = geometry.dimension
    m_axis = np.arange(-((n - 1) // 2), n // 2 + 1)
    grids = np.meshgrid(*([m_axis] * d), indexing="ij")
    m = np.stack([g.ravel() for g in grids], axis=1)
    n2 = np.einsum("ij,ij->i", m, m)
    m, n2 = m[n2 > 0], n2[n2 > 0]
    order = np.lexsort(tuple(m[:, k] for k in reversed(range(d))) + (n2,))
    return m[order] * geometry.momentum_unit


def _gaussian_tail(geometry, t, radius):
    g = lambda u: math.exp(-t * u * u) / (u * u)
    return lattice_sums.radial_tail_bound(g, radius, geometry.dimension, geometry.momentum_unit)


def _ball_modes(geometry, radius):
    k = geometry.momentum_unit
    r_index = radius / k
    est = lattice_sums.sphere_area(geometry.dimension) / geometry.dimension * r_index**geometry.dimension
    if est > MAX_MODES:
        raise NonConvergence(f"momentum truncation would need ~{est:.3g} modes")
    return lattice_sums.integer_ball(geometry.dimension, r_index) * k


def dual_modes(geometry: Geometry, kernel_config: KernelConfig, tolerance=1e-12,
               radius=None, t1_modes=512) -> ModeSet:
    """Momenta and kernel coefficients for the torus kernel.

    Lattice tori give exactly N - 1 Brillouin-zone momenta.  Continuum tori are
    truncated at |p| <= R; for t > 0, R is grown until the rigorous bound on
    sum_{|p| > R} u^_p falls below ``tolerance * volume``.  For d = 1, t = 0 the
    sum is algebraic: ``t1_modes`` positive modes are kept and the exact tail
    (Hurwitz zeta) is recorded.
    """
    if tolerance <= 0:
        raise ConfigError("tolerance must be positive")
    t = kernel_config.cutoff_t
    vol = geometry.volume
    if geometry.is_lattice:
        p = brillouin_momenta(geometry)
        n2 = np.einsum("ij,ij->i", p, p)
        radius = float(np.sqrt(n2.max())) if len(n2) else 0.0
        return ModeSet(p, n2, kernel_coefficients(n2, t), radius, 0.0, vol, t)

    k = geometry.momentum_unit
    if t == 0:
        if geometry.dimension >= 2:
            raise CutoffRequired("continuum momentum sum diverges at t = 0 for d >= 2")
        if radius is None:
            radius = k * t1_modes
        m = int(math.floor(radius / k + 1e-9))
        p = (np.arange(1, m + 1) * k)
        p = np.stack([p, -p], axis=1).ravel()[:, None]
        p = p[np.lexsort((p[:, 0], p[:, 0] ** 2))]
        n2 = p[:, 0] ** 2
        tail = 2.0 / k**2 * float(special.zeta(2.0, m + 1))
        return ModeSet(p, n2, 1.0 / n2, radius, tail, vol, t)

    if radius is None:
        delta = math.sqrt(geometry.dimension) * k
        radius = max(2.0 * delta, math.sqrt(1.0 / t))
        while _gaussian_tail(geometry, t, radius) >= tolerance * vol:
            radius *= 1.15
    tail = _gaussian_tail(geometry, t, radius)
    p = _ball_modes(geometry, radius)
    n2 = np.einsum("ij,ij->i", p, p)
    return ModeSet(p, n2, kernel_coefficients(n2, t), radius, tail, vol, t)


@dataclass(frozen=True)
class EnergyEstimate:
    value: float
    error: float
    samples: Tuple[Tuple[float, float], ...] = ()


def _bracket(geometry, u0_of_t, t):
    """u0(t) - |Lambda|^-1 sum_{p != 0} e^{-t p^2}/p^2, summed to ~1e-17 relative."""
    modes = dual_modes(geometry, KernelConfig(t), tolerance=1e-18)
    s = math.fsum(modes.coefficients)
    return u0_of_t(t) - s / geometry.volume


def _richardson(ts, values):
    # B(t) = B0 + b1 sqrt(t) + b2 t holds up to exp(-a^2/4t) for both supported cases
    a = np.array([[1.0, math.sqrt(t), t] for t in ts])
    return float(np.linalg.solve(a, np.asarray(values))[0])


def regularized_energy(geometry: Geometry, kernel_config: KernelConfig, t0=None) -> EnergyEstimate:
    """E0 = 1/2 lim_{t->0} [u0(t) - |Lambda|^-1 sum_{p != 0} e^{-t p^2}/p^2].

    Continuum tori: evaluated at t0, t0/2, t0/4 and extrapolated in the basis
    {1, sqrt(t), t}; the error estimate compares against the shifted triple
    t0/2, t0/4, t0/8.  Finite only for d = 1 with a constant u0 and for d = 3
    with the infinite-volume u0.  Lattice tori: the t -> 0 limit is a finite sum.
    """
    d = geometry.dimension
    if d >= 4:
        raise DimensionUnsupported("E0 is only implemented for d < 4")
    conv = kernel_config.u0
    if geometry.is_lattice:
        if conv == "infinite_volume":
            raise DimensionUnsupported("infinite_volume u0 diverges as t -> 0 on a lattice; E0 is infinite")
        u0 = self_energy_constant(kernel_config, d)
        p = brillouin_momenta(geometry)
        s = math.fsum(1.0 / np.einsum("ij,ij->i", p, p))
        return EnergyEstimate(0.5 * (u0 - s / geometry.volume), 0.0)

    if conv == "infinite_volume":
        if d != 3:
            raise DimensionUnsupported("infinite_volume u0 needs d = 3 here")
        u0_of_t = lambda t: self_energy_constant(KernelConfig(t, "infinite_volume"), 3)
    else:
        if d != 1:
            raise DimensionUnsupported(f"E0 diverges for d = {d} with a t-independent u0")
        const = self_energy_constant(kernel_config, d)
        u0_of_t = lambda t: const

    if t0 is None:
        t0 = 0.005 * geometry.side**2
    ts = [t0 * 2.0**-k for k in range(4)]
    vals = [_bracket(geometry, u0_of_t, t) for t in ts]
    first = _richardson(ts[:3], vals[:3])
    second = _richardson(ts[1:], vals[1:])
    logger.debug("E0 extrapolation: %r -> %r / %r", vals, first, second)
    return EnergyEstimate(0.5 * second, 0.5 * abs(second - first), tuple(zip(ts, vals)))
