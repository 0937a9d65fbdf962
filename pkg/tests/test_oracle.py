import itertools
import math

import numpy as np
import pytest

from neutralgas import (
    DimensionUnsupported,
    Ensemble,
    Geometry,
    KernelConfig,
    NotNeutral,
    Species,
    WorkBudgetExceeded,
    build_system,
    configuration_energy,
    exact_partition,
    ideal_partition_series,
    lattice_kernel,
    tilt_invariance_check,
    verify_bound,
)
from neutralgas.oracle import (
    charge_field_energies,
    conditional_pd_margin,
    neutral_charge_vectors,
    particle_partition,
)

from conftest import canonical_system

# Xi for the canonical instance, fixed by the occupation-number oracle below
CANONICAL_XI = 1.2628744538218


def items_of(system):
    g = system.geometry
    return [(sp.charge_number, x, system.renormalized_activity(sp) * g.site_volume)
            for sp in system.species for x in range(g.n_sites)]


def tuple_oracle(system, n_max):
    """Ordered n-tuples of (species, site), weighted by 1/n!."""
    kern = lattice_kernel(system.geometry, system.kernel)
    beta = system.ensemble.beta
    items = items_of(system)
    total = 1.0
    for n in range(1, n_max + 1):
        acc = []
        for tup in itertools.product(items, repeat=n):
            qs = [it[0] for it in tup]
            if sum(qs) != 0:
                continue
            u = configuration_energy(qs, [it[1] for it in tup], kern)
            acc.append(math.prod(it[2] for it in tup) * math.exp(-beta * u))
        total += math.fsum(acc) / math.factorial(n)
    return total


def occupation_oracle(system, n_max):
    """Sum over occupation numbers of every (species, site) pair, n <= n_max."""
    kern = lattice_kernel(system.geometry, system.kernel)
    beta = system.ensemble.beta
    items = items_of(system)
    terms = []

    def rec(i, left, occ):
        if i == len(items):
            if sum(o * it[0] for o, it in zip(occ, items)) != 0:
                return
            field = np.zeros(system.geometry.n_sites)
            weight = 1.0
            for o, (q, x, a) in zip(occ, items):
                field[x] += o * q
                weight *= a**o / math.factorial(o)
            u = 0.5 * field @ kern.matrix @ field
            terms.append(weight * math.exp(-beta * u))
            return
        for o in range(left + 1):
            rec(i + 1, left - o, occ + [o])

    rec(0, n_max, [])
    return math.fsum(terms)


def test_kernel_two_sites_single_mode():
    g = Geometry.lattice(1, 1.0, 0.5)
    kern = lattice_kernel(g, KernelConfig(0.1))
    p = 2 * math.pi
    u_hat = math.exp(-0.1 * p * p) / p**2
    np.testing.assert_allclose(kern.matrix, [[u_hat, -u_hat], [-u_hat, u_hat]], rtol=1e-14)


@pytest.mark.parametrize("geometry,t", [(Geometry.lattice(1, 1.0, 0.125), 0.0), (Geometry.lattice(2, 1.0, 0.25), 0.05),
                                        (Geometry.lattice(3, 2.0, 0.5), 0.2)])
def test_kernel_structure(geometry, t):
    kern = lattice_kernel(geometry, KernelConfig(t))
    m = kern.matrix
    np.testing.assert_allclose(m, m.T, atol=1e-15)
    np.testing.assert_allclose(m.sum(axis=1) * geometry.site_volume, 0, atol=1e-13 * np.abs(m).max())
    assert np.allclose(np.diag(m), m[0, 0])
    assert conditional_pd_margin(kern, 1000, rng=1) >= -1e-10


def test_configuration_energy_cases(canonical):
    kern = lattice_kernel(canonical.geometry, canonical.kernel)
    assert configuration_energy([], [], kern) == 0.0
    assert configuration_energy([1, -1], [2, 2], kern) == pytest.approx(0.0, abs=1e-15)
    u = configuration_energy([1, -1], [0, 2], kern)
    assert u == pytest.approx(kern.matrix[0, 0] - kern.matrix[0, 2], rel=1e-14)
    assert u > 0
    with pytest.raises(NotNeutral):
        configuration_energy([1, 1], [0, 1], kern)


def test_enumerated_fields_are_neutral_and_nonnegative():
    s = build_system([Species(1, 0.5), Species(-1, 0.5), Species(2, 0.2), Species(-2, 0.2)],
                     Geometry.lattice(2, 1.0, 1 / 3), Ensemble(0.3), KernelConfig(0.05))
    kern = lattice_kernel(s.geometry, s.kernel)
    scale = np.abs(kern.matrix).max()
    seen = 0
    for block in neutral_charge_vectors(9, 6, chunk=5000):
        assert np.all(block.sum(axis=1) == 0)
        assert np.all(np.abs(block).sum(axis=1) <= 6)
        energy = charge_field_energies(block, kern)
        assert energy.min() >= -1e-12 * scale * np.abs(block).sum(axis=1).max() ** 2
        seen += len(block)
    assert len(set(map(bytes, np.concatenate(list(neutral_charge_vectors(9, 6)))))) == seen


def test_field_count_small_case():
    # vectors in Z^3 with sum 0 and |v|_1 <= 2: zero, plus 6 permutations of (1, -1, 0)
    rows = np.concatenate(list(neutral_charge_vectors(3, 2)))
    assert len(rows) == 7


@pytest.mark.parametrize("factory", [
    lambda: canonical_system(),
    lambda: build_system([Species(1, 0.6), Species(-1, 0.3), Species(2, 0.2), Species(-2, 0.05)],
                         Geometry.lattice(1, 1.0, 1 / 3), Ensemble(0.7), KernelConfig(0.0, 0.2)),
    lambda: build_system([Species(1, 0.4), Species(-1, 0.4)], Geometry.lattice(2, 1.0, 0.5),
                         Ensemble(0.4), KernelConfig(0.1)),
])
def test_multisets_equal_ordered_tuples(factory):
    s = factory()
    assert particle_partition(s, 4).value == pytest.approx(tuple_oracle(s, 4), rel=1e-14)


def test_canonical_value_by_occupation_numbers(canonical):
    oracle = occupation_oracle(canonical, 16)
    assert oracle == pytest.approx(CANONICAL_XI, abs=1e-12)
    xi = exact_partition(canonical)
    assert xi.tail_bound < 1e-12
    assert xi.value == pytest.approx(CANONICAL_XI, abs=1e-12)


def test_fields_agree_with_particles():
    s = build_system([Species(1, 0.2), Species(-1, 0.2), Species(2, 0.2), Species(-2, 0.2)],
                     Geometry.lattice(1, 1.0, 1 / 3), Ensemble(0.5), KernelConfig(0.02, -0.3))
    xi = exact_partition(s)
    part = particle_partition(s, 10)
    assert part.tail_bound < 1e-8
    assert abs(xi.value - part.value) <= part.tail_bound + xi.tail_bound


def test_zero_activities():
    s = canonical_system(activity=0.0)
    assert exact_partition(s).value == 1.0


def test_zero_coupling_is_ideal_gas():
    s = canonical_system(beta=0.0)
    assert exact_partition(s).value == pytest.approx(ideal_partition_series(s.bare_masses()).value, rel=1e-13)


def test_tail_bound_covers_higher_levels(canonical):
    xi = exact_partition(canonical, tolerance=1e-6)
    deeper = exact_partition(canonical, max_level=xi.work["level"] + 2)
    assert 0 <= deeper.value - xi.value <= xi.tail_bound


def test_work_budget_and_geometry_checks():
    s = build_system([Species(1, 1.0), Species(-1, 1.0)], Geometry.lattice(2, 1.0, 0.25), Ensemble(0.3),
                     KernelConfig(0.1))
    with pytest.raises(WorkBudgetExceeded):
        exact_partition(s, work_budget=1000)
    c = build_system([Species(1, 1.0), Species(-1, 1.0)], Geometry.continuum(1, 1.0), Ensemble(0.3),
                     KernelConfig(0.0))
    with pytest.raises(DimensionUnsupported):
        exact_partition(c)


def test_thread_count_does_not_change_result(canonical, monkeypatch):
    s = build_system([Species(1, 0.8), Species(-1, 0.8)], Geometry.lattice(1, 1.0, 1 / 6), Ensemble(0.3),
                     KernelConfig(0.0))
    one = exact_partition(s, threads=1).value
    monkeypatch.setenv("NEUTRALGAS_THREADS", "3")
    assert exact_partition(s).value == one


def test_tilt_invariance():
    s = canonical_system()
    same = tilt_invariance_check(s, 0.0)
    assert same.original.value == same.tilted.value
    assert tilt_invariance_check(s, 0.7).passed
    three = build_system([Species(1, 0.3), Species(1, 0.2), Species(-1, 0.6)], Geometry.lattice(1, 1.0, 1 / 6),
                         Ensemble(0.4), KernelConfig(0.0))
    check = tilt_invariance_check(three, -1.3)
    assert check.passed, check.relative_difference


def test_verify_canonical(canonical):
    rep = verify_bound(canonical)
    assert rep.passed and rep.below_ideal
    assert rep.slack > 0
    assert rep.xi_exact.value <= rep.xi0.value


def test_verify_slack_vanishes_with_coupling():
    reports = [verify_bound(canonical_system(beta=b)) for b in (0.2, 0.02, 0.002, 0.0)]
    free = reports[-1]
    # at beta = 0 only the enumeration tail separates Xi from Xi_0 = Xi_2
    assert abs(free.slack) <= free.xi_exact.tail_bound
    assert free.passed
    slacks = [r.relative_slack for r in reports[:-1]]
    assert all(a > b > 0 for a, b in zip(slacks, slacks[1:]))
