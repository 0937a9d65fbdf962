"""Exact neutral partition function on small lattice tori and certification of
Xi >= Xi_2.

The Boltzmann factor of a neutral configuration depends only on the net charge
Q_x = sum of charge numbers at site x, since
U = e^2/2 sum_{x,y} Q_x Q_y u(x, y).  Summing over all particle contents with a
given Q_x factorises per site into the Laurent coefficient
w(Q) = [x^Q] exp(sum_alpha z~_alpha l^d x^{q_alpha}), so

    Xi = sum_{Q : sum Q = 0} exp(-eps^2/2 Q.U.Q) prod_x w(Q_x).

Fields are enumerated by increasing level sum_x |Q_x|.  The omitted levels have
Boltzmann factor <= 1 (U >= 0 because the zero mode is excluded), so their
ideal-gas mass, computed exactly by a small dynamic programme, is a rigorous
tail bound.
"""
import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Optional

import numpy as np
from scipy import special

from .errors import ConfigError, DimensionUnsupported, NotNeutral, WorkBudgetExceeded
from .gaussian import GaussianBound, gaussian_bound
from .ideal import PartitionResult, ideal_partition_quadrature, laurent_exp
from .model import Geometry, KernelConfig, Species, System, brillouin_momenta, kernel_coefficients

logger = logging.getLogger(__name__)

DEFAULT_WORK_BUDGET = 10**8
THREADS_ENV = "NEUTRALGAS_THREADS"
_CHUNK = 1 << 17


def thread_count():
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class LatticeKernel:
    sites: np.ndarray      # (N, d) integer coordinates
    matrix: np.ndarray     # (N, N) u(x, y)
    u0: float
    site_volume: float

    @property
    def n_sites(self):
        return len(self.sites)


def lattice_sites(geometry: Geometry):
    n = geometry.n_side
    grids = np.meshgrid(*([np.arange(n)] * geometry.dimension), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def lattice_kernel(geometry: Geometry, kernel_config: KernelConfig) -> LatticeKernel:
    """u(x, y) = |Lambda|^-1 sum_{p in BZ, p != 0} u^_p cos(p.(x - y)); circulant."""
    if not geometry.is_lattice:
        raise DimensionUnsupported("lattice_kernel needs a lattice torus")
    from .model import self_energy_constant

    n = geometry.n_side
    sites = lattice_sites(geometry)
    p = brillouin_momenta(geometry)
    coeff = kernel_coefficients(np.einsum("ij,ij->i", p, p), kernel_config.cutoff_t)
    disp = sites * geometry.spacing
    if len(p):
        u_disp = (np.cos(disp @ p.T) @ coeff) / geometry.volume
    else:
        u_disp = np.zeros(len(sites))
    # displacement index of (x - y) mod n, in the same row-major order as ``sites``
    diff = (sites[:, None, :] - sites[None, :, :]) % n
    index = np.ravel_multi_index(tuple(diff[..., k] for k in range(geometry.dimension)),
                                 (n,) * geometry.dimension)
    matrix = u_disp[index]
    u0 = self_energy_constant(kernel_config, geometry.dimension)
    return LatticeKernel(sites, matrix, u0, geometry.site_volume)


def conditional_pd_margin(kernel: LatticeKernel, samples=1000, rng=None):
    """Smallest c.U.c / (|c|^2 ||U||) over random mean-zero vectors c."""
    rng = np.random.default_rng(rng)
    n = kernel.n_sites
    c = rng.standard_normal((samples, n))
    c -= c.mean(axis=1, keepdims=True)
    quad = np.einsum("ij,jk,ik->i", c, kernel.matrix, c)
    norm = np.linalg.norm(kernel.matrix, 2) or 1.0
    return float(np.min(quad / (np.einsum("ij,ij->i", c, c) * norm)))


def configuration_energy(charge_numbers, site_indices, kernel: LatticeKernel, elementary_charge=1.0):
    """U = e^2/2 sum_{j,k} q_j q_k u(x_j, x_k), diagonal included; needs sum q_j = 0."""
    q = np.asarray(charge_numbers, dtype=float)
    if len(q) == 0:
        return 0.0
    if int(round(q.sum())) != 0:
        raise NotNeutral(f"charges sum to {q.sum():g}")
    idx = np.asarray(site_indices, dtype=int)
    field = np.zeros(kernel.n_sites)
    np.add.at(field, idx, q)
    return 0.5 * elementary_charge**2 * float(field @ kernel.matrix @ field)


def charge_field_energies(fields, kernel: LatticeKernel):
    """Q.U.Q / 2 for each row of ``fields`` (in units of e^2)."""
    f = np.asarray(fields, dtype=float)
    return 0.5 * np.einsum("ij,ij->i", f @ kernel.matrix, f)


def neutral_charge_vectors(n_sites, level, chunk=_CHUNK):
    """Yield arrays of integer vectors v in Z^n_sites with sum v = 0 and sum |v| <= level.

    Order is deterministic.  Rows are produced in blocks of roughly ``chunk``.
    """
    dtype = np.int16 if level < 30000 else np.int64

    def rec(prefix, sums, used, k):
        if k == n_sites - 1:
            yield np.column_stack([prefix, -sums]).astype(dtype, copy=False)
            return
        blocks = []
        for v in range(-level, level + 1):
            ok = used + abs(v) + np.abs(sums + v) <= level
            if not ok.any():
                continue
            m = int(ok.sum())
            blocks.append((np.column_stack([prefix[ok], np.full(m, v, dtype=dtype)]),
                           sums[ok] + v, used[ok] + abs(v)))
        new_prefix = np.concatenate([b[0] for b in blocks])
        new_sums = np.concatenate([b[1] for b in blocks])
        new_used = np.concatenate([b[2] for b in blocks])
        for start in range(0, len(new_prefix), chunk):
            sl = slice(start, start + chunk)
            yield from rec(new_prefix[sl], new_sums[sl], new_used[sl], k + 1)

    if n_sites == 1:
        yield np.zeros((1, 1), dtype=dtype)
        return
    start = (np.zeros((1, 0), dtype=dtype), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))
    buf, size = [], 0
    for block in rec(*start, 0):
        buf.append(block)
        size += len(block)
        if size >= chunk:
            yield np.concatenate(buf)
            buf, size = [], 0
    if buf:
        yield np.concatenate(buf)


@dataclass(frozen=True)
class _SiteTable:
    step: int                 # gcd of the charge numbers
    log_coeffs: np.ndarray    # log of scaled w(step * v), index v + cap
    coeffs: np.ndarray
    cap: int
    log_scale: float          # per-site exp(S) factor
    tail: float


def _site_table(system: System, cap):
    geom = system.geometry
    masses = {}
    for sp in system.species:
        a = system.renormalized_activity(sp) * geom.site_volume
        masses[sp.charge_number] = masses.get(sp.charge_number, 0.0) + a
    step = reduce(math.gcd, (abs(q) for q in masses))
    # |Q| = step * cap needs at least that many particles of charge +-step
    exp_ = laurent_exp(masses, tolerance=1e-30, min_terms=cap * step + 1)
    coeffs = np.array([exp_.coefficient(step * v) for v in range(-cap, cap + 1)])
    with np.errstate(divide="ignore"):
        logc = np.log(coeffs)
    return _SiteTable(step, logc, coeffs, cap, exp_.log_scale, exp_.tail)


def _level_masses(table: _SiteTable, n_sites, cap):
    """Ideal mass and number of neutral fields at each level 0..cap (scaled by the site factors)."""
    width = 2 * cap + 1
    mass = np.zeros((cap + 1, width))
    count = np.zeros((cap + 1, width))
    mass[0, cap] = 1.0
    count[0, cap] = 1.0
    vs = [v for v in range(-cap, cap + 1) if table.coeffs[v + cap] > 0]
    for _ in range(n_sites):
        new_m = np.zeros_like(mass)
        new_c = np.zeros_like(count)
        for v in vs:
            a = abs(v)
            w = table.coeffs[v + cap]
            src = slice(max(0, -v), width - max(0, v))
            dst = slice(max(0, v), width - max(0, -v))
            new_m[a:, dst] += w * mass[: cap + 1 - a, src]
            new_c[a:, dst] += count[: cap + 1 - a, src]
        mass, count = new_m, new_c
    return mass[:, cap], count[:, cap]


def _poisson_sf(n, s):
    """P(N > n) for N ~ Poisson(s)."""
    if n < 0:
        return 1.0
    return float(special.gammainc(n + 1, s))


def exact_partition(system: System, tolerance=1e-12, work_budget=DEFAULT_WORK_BUDGET,
                    max_level: Optional[int] = None, threads=None) -> PartitionResult:
    """Xi by enumeration of neutral net-charge fields on a lattice torus.

    The level is raised until the omitted ideal mass is below ``tolerance``
    (absolute), unless ``max_level`` fixes it.  ``work`` reports the level and
    the number of fields evaluated.
    """
    geom = system.geometry
    if not geom.is_lattice:
        raise DimensionUnsupported("exact enumeration needs a lattice torus")
    n = geom.n_sites
    s_total = math.fsum(system.renormalized_activity(sp) * geom.volume for sp in system.species)
    qmax = max(abs(sp.charge_number) for sp in system.species)
    step = reduce(math.gcd, (abs(sp.charge_number) for sp in system.species))

    # particles needed to reach level L is at least L*step/qmax
    n_cut = 0
    while _poisson_sf(n_cut, s_total) * math.exp(s_total) > 1e-3 * tolerance and n_cut < 10_000:
        n_cut += 1
    cap = max(n_cut * qmax // step + 1, max_level or 0)
    beyond = _poisson_sf(cap * step // qmax, s_total)

    table = _site_table(system, cap)
    masses, counts = _level_masses(table, n, cap)
    scale = math.exp(n * table.log_scale)
    site_err = n * table.tail * math.exp(s_total)

    if max_level is None:
        level = 0
        while True:
            tail = scale * math.fsum(masses[level + 1:]) + beyond * math.exp(s_total) + site_err
            if tail <= tolerance or level == cap:
                break
            level += 1
    else:
        level = max_level
        tail = scale * math.fsum(masses[level + 1:]) + beyond * math.exp(s_total) + site_err
    n_fields = int(round(math.fsum(counts[: level + 1])))
    if n_fields > work_budget:
        raise WorkBudgetExceeded(f"{n_fields} charge fields at level {level} exceed the budget {work_budget}")

    kern = lattice_kernel(geom, system.kernel)
    eps2 = system.ensemble.coupling
    step_f = float(table.step)
    logc = table.log_coeffs
    cap_i = table.cap

    def chunk_sum(vs):
        logw = logc[vs.astype(np.int64) + cap_i].sum(axis=1)
        energy = charge_field_energies(vs * step_f, kern)
        # pairwise summation inside a chunk, compensated across chunks
        return float(np.sum(np.exp(logw - eps2 * energy)))

    gen = neutral_charge_vectors(n, level)
    workers = threads or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            partial = list(pool.map(chunk_sum, gen))
    else:
        partial = [chunk_sum(vs) for vs in gen]
    total = math.fsum(partial)
    log_value = n * table.log_scale + math.log(total)
    value = math.exp(log_value) if log_value < 709.78 else math.inf
    return PartitionResult(value, log_value, tail, {"level": level, "fields": n_fields})


def particle_partition(system: System, n_max: int) -> PartitionResult:
    """Xi truncated at n_max particles, by enumerating multisets of
    (species, site) pairs with multinomial weights.

    Slow; intended for small cross-checks.  ``tail_bound`` is
    sum_{n > n_max} s^n / n! with s = sum_alpha z~_alpha |Lambda|.
    """
    geom = system.geometry
    if not geom.is_lattice:
        raise DimensionUnsupported("particle enumeration needs a lattice torus")
    kern = lattice_kernel(geom, system.kernel)
    n_sites = geom.n_sites
    items = [(sp.charge_number, x, system.renormalized_activity(sp) * geom.site_volume)
             for sp in system.species for x in range(n_sites)]
    items = [it for it in items if it[2] > 0]
    charges = np.array([it[0] for it in items])
    sites = np.array([it[1] for it in items])
    log_a = np.log(np.array([it[2] for it in items]))
    eps2 = system.ensemble.coupling
    terms = [1.0]
    count = 1
    for n in range(1, n_max + 1):
        combos = np.array(list(itertools.combinations_with_replacement(range(len(items)), n)), dtype=np.int64)
        if len(combos) == 0:
            continue
        neutral = charges[combos].sum(axis=1) == 0
        combos = combos[neutral]
        if len(combos) == 0:
            continue
        count += len(combos)
        fields = np.zeros((len(combos), n_sites))
        rows = np.repeat(np.arange(len(combos)), n)
        np.add.at(fields, (rows, sites[combos].ravel()), charges[combos].ravel())
        log_w = log_a[combos].sum(axis=1)
        # multinomial factor: 1 / prod m_i! over repeated items
        for r in range(len(combos)):
            _, mult = np.unique(combos[r], return_counts=True)
            log_w[r] -= math.fsum(math.lgamma(m + 1) for m in mult)
        energy = charge_field_energies(fields, kern)
        terms.append(math.fsum(np.exp(log_w - eps2 * energy)))
    s = math.fsum(system.renormalized_activity(sp) * geom.volume for sp in system.species)
    tail = _poisson_sf(n_max, s) * math.exp(s)
    total = math.fsum(terms)
    return PartitionResult(total, math.log(total), tail, {"multisets": count, "n_max": n_max})


@dataclass(frozen=True)
class BoundReport:
    xi_exact: PartitionResult
    xi0: PartitionResult
    xi2: GaussianBound
    slack: float
    relative_slack: float
    passed: bool
    below_ideal: bool

    @property
    def pass_(self):
        return self.passed


def verify_bound(system: System, tolerance=1e-12, work_budget=DEFAULT_WORK_BUDGET) -> BoundReport:
    """Compute Xi (exact), Xi_0 and Xi_2 and test Xi >= Xi_2.

    Passes when Xi >= Xi_2 (1 - 1e-12) - tail.  ``below_ideal`` records the
    upper half of the sandwich Xi <= Xi_0 (guaranteed only for u0 <= 0).
    """
    xi = exact_partition(system, tolerance, work_budget)
    tilted = system.tilt
    xi0 = ideal_partition_quadrature(tilted)
    xi2 = gaussian_bound(system, tilted, tolerance=tolerance)
    slack = xi.value - xi2.xi2
    rel = slack / xi2.xi2 if xi2.xi2 > 0 else math.inf
    passed = xi.value >= xi2.xi2 * (1 - 1e-12) - xi.tail_bound
    below = xi.value <= xi0.value * (1 + 1e-12) + xi0.tail_bound
    return BoundReport(xi, xi0, xi2, slack, rel, bool(passed), bool(below))


@dataclass(frozen=True)
class TiltCheck:
    passed: bool
    relative_difference: float
    original: PartitionResult
    tilted: PartitionResult


def tilted_system(system: System, c) -> System:
    """Same system with every activity multiplied by exp(q_alpha c)."""
    species = [Species(sp.charge_number, math.exp(sp.charge_number * c) * sp.activity)
               for sp in system.species]
    return system.with_species(species)


def tilt_invariance_check(system: System, c, tolerance=1e-12, rtol=1e-13,
                          work_budget=DEFAULT_WORK_BUDGET) -> TiltCheck:
    """Xi must not change under z_alpha -> exp(q_alpha c) z_alpha; both sides are
    enumerated at the same level so only rounding can differ."""
    if not math.isfinite(c):
        raise ConfigError("tilt c must be finite")
    a = exact_partition(system, tolerance, work_budget)
    other = tilted_system(system, c)
    b = exact_partition(other, tolerance, work_budget, max_level=a.work["level"])
    diff = abs(a.value - b.value) / a.value
    return TiltCheck(diff <= rtol, diff, a, b)
